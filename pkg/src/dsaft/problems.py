"""Benchmark instances with exhaustive oracles at desk scale.

Three workloads share one duck-typed interface (``energy``, ``random_solution``,
``neighbor``, ``validate``, ``canonical``): Euclidean TSP with 2-opt moves, a
toy job shop decoded by priority list scheduling, and a 1-D landscape whose
deep global minimum sits in a very narrow well next to a broad shallow basin.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import OracleRefusal, ValidationError
from .rng import RngStream

TSP_ORACLE_MAX_CITIES = 10
JOBSHOP_ORACLE_MAX_OPS = 8


def _check_permutation(perm, n):
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise ValidationError(f"expected a permutation of 0..{n - 1}, got {list(perm)!r}")


# --------------------------------------------------------------------- TSP


@dataclass(frozen=True)
class TspInstance:
    cities: tuple

    def __post_init__(self):
        if len(self.cities) < 3:
            raise ValidationError("a TSP instance needs at least 3 cities")
        object.__setattr__(self, "cities", tuple((float(x), float(y)) for x, y in self.cities))

    @property
    def n(self):
        return len(self.cities)


def tsp_energy(tour, instance: TspInstance) -> float:
    """Closed-tour Euclidean length."""
    _check_permutation(tour, instance.n)
    c = instance.cities
    return math.fsum(math.dist(c[tour[i - 1]], c[tour[i]]) for i in range(len(tour)))


def tsp_neighbor(tour, rng: RngStream):
    """2-opt move: reverse a uniformly chosen contiguous segment."""
    n = len(tour)
    if n < 3:
        raise ValidationError("2-opt needs at least 3 cities")
    i = rng.randrange(n)
    j = rng.randrange(n)
    if i > j:
        i, j = j, i
    return tour[:i] + tour[i:j + 1][::-1] + tour[j + 1:]


class TspProblem:
    kind = "tsp"

    def __init__(self, instance: TspInstance):
        self.instance = instance
        c = instance.cities
        self._d = [[math.dist(a, b) for b in c] for a in c]

    def energy(self, tour) -> float:
        d = self._d
        prev = tour[-1]
        total = 0.0
        for city in tour:
            total += d[prev][city]
            prev = city
        return total

    def random_solution(self, rng: RngStream):
        tour = list(range(self.instance.n))
        for i in range(len(tour) - 1, 0, -1):
            j = rng.randrange(i + 1)
            tour[i], tour[j] = tour[j], tour[i]
        return tuple(tour)

    def neighbor(self, tour, rng: RngStream, temperature_ratio: float = 1.0):
        return tsp_neighbor(tour, rng)

    def validate(self, tour):
        _check_permutation(tour, self.instance.n)

    def canonical(self, tour):
        # rotate to start at city 0, then pick the smaller of the two directions
        tour = tuple(tour)
        i = tour.index(0)
        fwd = tour[i:] + tour[:i]
        back = (fwd[0],) + fwd[1:][::-1]
        return min(fwd, back)

    def brute_force_optimum(self):
        n = self.instance.n
        if n > TSP_ORACLE_MAX_CITIES:
            raise OracleRefusal(f"{n} cities exceeds the enumeration cap of {TSP_ORACLE_MAX_CITIES}")
        best, best_e = None, math.inf
        for rest in itertools.permutations(range(1, n)):
            if rest[0] > rest[-1]:
                continue  # mirror image of a tour already seen
            tour = (0,) + rest
            e = self.energy(tour)
            if e < best_e:
                best, best_e = tour, e
        return best, best_e


def random_tsp(n: int, seed: int) -> TspInstance:
    rng = RngStream(seed, 0)
    return TspInstance(tuple((rng.uniform(), rng.uniform()) for _ in range(n)))


# ---------------------------------------------------------------- job shop


@dataclass(frozen=True)
class JobShopInstance:
    """``jobs[j]`` is the ordered list of ``(machine, duration)`` operations of job j."""

    jobs: tuple
    n_machines: int

    def __post_init__(self):
        jobs = tuple(tuple((int(m), float(d)) for m, d in ops) for ops in self.jobs)
        object.__setattr__(self, "jobs", jobs)
        if not jobs:
            raise ValidationError("job-shop instance has no jobs")
        if self.n_machines < 1:
            raise ValidationError("job-shop instance needs at least one machine")
        for j, ops in enumerate(jobs):
            if not ops:
                raise ValidationError(f"job {j} has no operations")
            machines = [m for m, _ in ops]
            if len(set(machines)) != len(machines):
                raise ValidationError(f"job {j} visits a machine more than once")
            for m, d in ops:
                if not 0 <= m < self.n_machines:
                    raise ValidationError(f"job {j} uses unknown machine {m}")
                if not d > 0:
                    raise ValidationError(f"job {j} has non-positive duration {d}")

    @property
    def n_ops(self):
        return sum(len(ops) for ops in self.jobs)


def _decode_makespan(priority, jobs, n_machines):
    rank = [0] * len(priority)
    for pos, op in enumerate(priority):
        rank[op] = pos
    offsets = []
    acc = 0
    for ops in jobs:
        offsets.append(acc)
        acc += len(ops)
    nxt = [0] * len(jobs)
    job_ready = [0.0] * len(jobs)
    mach_ready = [0.0] * n_machines
    makespan = 0.0
    for _ in range(acc):
        pick, pick_rank = -1, acc
        for j, ops in enumerate(jobs):
            if nxt[j] < len(ops):
                r = rank[offsets[j] + nxt[j]]
                if r < pick_rank:
                    pick, pick_rank = j, r
        m, d = jobs[pick][nxt[pick]]
        end = max(job_ready[pick], mach_ready[m]) + d
        job_ready[pick] = mach_ready[m] = end
        nxt[pick] += 1
        if end > makespan:
            makespan = end
    return makespan


def jobshop_energy(priority, instance: JobShopInstance) -> float:
    """Makespan of the list schedule that always dispatches the highest-priority ready operation.

    Operations are numbered job-major: job 0's operations first, in route order.
    A smaller position in ``priority`` means higher priority.
    """
    _check_permutation(priority, instance.n_ops)
    return _decode_makespan(priority, instance.jobs, instance.n_machines)


class JobShopProblem:
    kind = "jobshop"

    def __init__(self, instance: JobShopInstance):
        self.instance = instance

    def energy(self, priority) -> float:
        return _decode_makespan(priority, self.instance.jobs, self.instance.n_machines)

    def random_solution(self, rng: RngStream):
        perm = list(range(self.instance.n_ops))
        for i in range(len(perm) - 1, 0, -1):
            j = rng.randrange(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return tuple(perm)

    def neighbor(self, priority, rng: RngStream, temperature_ratio: float = 1.0):
        n = len(priority)
        if n < 2:
            return priority
        i = rng.randrange(n)
        j = rng.randrange(n - 1)
        if j >= i:
            j += 1
        p = list(priority)
        p[i], p[j] = p[j], p[i]
        return tuple(p)

    def validate(self, priority):
        _check_permutation(priority, self.instance.n_ops)

    def canonical(self, priority):
        return tuple(priority)

    def brute_force_optimum(self):
        n = self.instance.n_ops
        if n > JOBSHOP_ORACLE_MAX_OPS:
            raise OracleRefusal(f"{n} operations exceeds the enumeration cap of {JOBSHOP_ORACLE_MAX_OPS}")
        best, best_e = None, math.inf
        for perm in itertools.permutations(range(n)):
            e = self.energy(perm)
            if e < best_e:
                best, best_e = perm, e
        return best, best_e


def random_jobshop(n_jobs: int, n_machines: int, seed: int, max_duration: int = 9) -> JobShopInstance:
    rng = RngStream(seed, 0)
    jobs = []
    for _ in range(n_jobs):
        route = list(range(n_machines))
        for i in range(len(route) - 1, 0, -1):
            k = rng.randrange(i + 1)
            route[i], route[k] = route[k], route[i]
        jobs.append(tuple((m, 1 + rng.randrange(max_duration)) for m in route))
    return JobShopInstance(tuple(jobs), n_machines)


# ------------------------------------------------------- skewed 1-D landscape

SKEWED_LO, SKEWED_HI = -5.0, 5.0
NARROW_CENTER, NARROW_WIDTH, NARROW_DEPTH = 3.0, 0.05, 1.2
BROAD_CENTER, BROAD_WIDTH, BROAD_DEPTH = -2.0, 1.0, 1.0
GLOBAL_BASIN_RADIUS = 0.5
LOCAL_BASIN_RADIUS = 1.5


def _skewed(x):
    a = (x - NARROW_CENTER) / NARROW_WIDTH
    b = (x - BROAD_CENTER) / BROAD_WIDTH
    return -NARROW_DEPTH * math.exp(-0.5 * a * a) - BROAD_DEPTH * math.exp(-0.5 * b * b)


def skewed_energy(x: float) -> float:
    if not SKEWED_LO <= x <= SKEWED_HI:
        raise ValidationError(f"x={x} outside [{SKEWED_LO}, {SKEWED_HI}]")
    return _skewed(x)


def basin_of(x: float):
    """'global', 'local', or None for the skewed landscape."""
    if abs(x - NARROW_CENTER) < GLOBAL_BASIN_RADIUS:
        return "global"
    if abs(x - BROAD_CENTER) < LOCAL_BASIN_RADIUS:
        return "local"
    return None


class Skewed1dProblem:
    kind = "skewed1d"

    def energy(self, x) -> float:
        return _skewed(x)

    def random_solution(self, rng: RngStream):
        return SKEWED_LO + (SKEWED_HI - SKEWED_LO) * rng.uniform()

    def neighbor(self, x, rng: RngStream, temperature_ratio: float = 1.0):
        # step size shrinks with temperature
        step = rng.normal() * (0.02 + 0.5 * temperature_ratio)
        return min(SKEWED_HI, max(SKEWED_LO, x + step))

    def validate(self, x):
        if not isinstance(x, float) or not SKEWED_LO <= x <= SKEWED_HI:
            raise ValidationError(f"{x!r} is not a point of [{SKEWED_LO}, {SKEWED_HI}]")

    def canonical(self, x):
        return round(x * 1e6)

    def brute_force_optimum(self, grid_points: int = 10**6):
        import numpy as np
        from scipy.optimize import minimize_scalar

        xs = np.linspace(SKEWED_LO, SKEWED_HI, grid_points)
        fs = (-NARROW_DEPTH * np.exp(-0.5 * ((xs - NARROW_CENTER) / NARROW_WIDTH) ** 2)
              - BROAD_DEPTH * np.exp(-0.5 * ((xs - BROAD_CENTER) / BROAD_WIDTH) ** 2))
        i = int(np.argmin(fs))
        h = xs[1] - xs[0]
        lo, hi = max(SKEWED_LO, xs[i] - h), min(SKEWED_HI, xs[i] + h)
        res = minimize_scalar(_skewed, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        x = float(res.x)
        if _skewed(x) > float(fs[i]):
            x = float(xs[i])
        return x, _skewed(x)


def brute_force_optimum(problem):
    """Exact global optimum ``(solution, energy)`` by exhaustive search."""
    return problem.brute_force_optimum()


# ------------------------------------------------------------ instance files


def _read_lines(path):
    return Path(path).read_text().splitlines()


def _fail(path, lineno, msg):
    raise ValidationError(f"{path}:{lineno}: {msg}")


def load_tsp(path) -> TspInstance:
    """Line 1 holds the city count, then one ``x y`` pair per line."""
    lines = _read_lines(path)
    if not lines:
        _fail(path, 1, "empty file")
    try:
        n = int(lines[0].strip())
    except ValueError:
        _fail(path, 1, f"expected city count, got {lines[0]!r}")
    if n < 3:
        _fail(path, 1, "need at least 3 cities")
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != n:
        _fail(path, len(lines) + 1, f"expected {n} coordinate lines, found {len(body)}")
    cities = []
    for lineno, ln in body:
        parts = ln.split()
        if len(parts) != 2:
            _fail(path, lineno, f"expected 'x y', got {ln!r}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            _fail(path, lineno, f"non-numeric coordinate in {ln!r}")
        if not (math.isfinite(x) and math.isfinite(y)):
            _fail(path, lineno, "coordinates must be finite")
        cities.append((x, y))
    return TspInstance(tuple(cities))


def save_tsp(instance: TspInstance, path):
    lines = [str(instance.n)] + [f"{x!r} {y!r}" for x, y in instance.cities]
    Path(path).write_text("\n".join(lines) + "\n")


def load_jobshop(path) -> JobShopInstance:
    """Line 1 is ``J M``, then J lines of M ``machine duration`` pairs."""
    lines = _read_lines(path)
    if not lines:
        _fail(path, 1, "empty file")
    head = lines[0].split()
    try:
        n_jobs, n_machines = (int(v) for v in head)
    except ValueError:
        _fail(path, 1, f"expected 'J M', got {lines[0]!r}")
    if n_jobs < 1 or n_machines < 1:
        _fail(path, 1, "J and M must be positive")
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != n_jobs:
        _fail(path, len(lines) + 1, f"expected {n_jobs} job lines, found {len(body)}")
    jobs = []
    for lineno, ln in body:
        parts = ln.split()
        if len(parts) != 2 * n_machines:
            _fail(path, lineno, f"expected {n_machines} 'machine duration' pairs")
        try:
            ops = [(int(parts[i]), float(parts[i + 1])) for i in range(0, len(parts), 2)]
        except ValueError:
            _fail(path, lineno, f"non-numeric entry in {ln!r}")
        seen = set()
        for m, d in ops:
            if not 0 <= m < n_machines:
                _fail(path, lineno, f"machine {m} out of range 0..{n_machines - 1}")
            if m in seen:
                _fail(path, lineno, f"machine {m} visited twice")
            if not d > 0:
                _fail(path, lineno, f"duration {d} must be positive")
            seen.add(m)
        jobs.append(tuple(ops))
    return JobShopInstance(tuple(jobs), n_machines)


def save_jobshop(instance: JobShopInstance, path):
    lines = [f"{len(instance.jobs)} {instance.n_machines}"]
    for ops in instance.jobs:
        lines.append(" ".join(f"{m} {d:g}" for m, d in ops))
    Path(path).write_text("\n".join(lines) + "\n")
