"""In-process MapReduce execution of independent annealing chains.

Mappers run one chain each; their best solutions land in a hash table keyed
by a canonical solution digest; a verification pass recomputes every stored
energy before the reducer picks the minimum.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .annealing import AnnealParams, run_chain
from .errors import DsaError, ValidationError
from .rng import RngStream

log = logging.getLogger(__name__)

VERIFY_TOL = 1e-9


class JobFailure(DsaError):
    pass


@dataclass(frozen=True)
class MapTask:
    task_id: int
    problem: Any
    params: AnnealParams
    seed: int
    budget: int


@dataclass
class IntermediateRecord:
    digest: str
    solution: Any
    energy: float
    task_id: int
    verified: bool = False


@dataclass(frozen=True)
class Mismatch:
    digest: str
    task_id: int
    kind: str  # "energy" or "infeasible"
    reported: float
    recomputed: float | None


@dataclass(frozen=True)
class ReduceResult:
    solution: Any
    energy: float
    task_id: int
    verified: bool = True


@dataclass
class MapOutput:
    records: list
    failed: list = field(default_factory=list)  # (task_id, reason)


def solution_digest(problem, solution) -> str:
    canon = problem.canonical(solution)
    return hashlib.sha256(f"{problem.kind}:{canon!r}".encode()).hexdigest()


class IntermediateStore:
    def __init__(self):
        self.entries: dict[str, IntermediateRecord] = {}

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries.values())

    def __contains__(self, digest):
        return digest in self.entries

    def get(self, digest):
        return self.entries.get(digest)

    def dump(self, path):
        """One JSON object per line: digest, energy, task_id, solution."""
        with open(path, "w") as fh:
            for r in self.entries.values():
                sol = list(r.solution) if isinstance(r.solution, tuple) else r.solution
                fh.write(json.dumps({"digest": r.digest, "energy": r.energy,
                                     "task_id": r.task_id, "solution": sol}) + "\n")

    @classmethod
    def load(cls, path):
        store = cls()
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                sol = tuple(d["solution"]) if isinstance(d["solution"], list) else d["solution"]
                rec = IntermediateRecord(d["digest"], sol, float(d["energy"]), int(d["task_id"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad store record ({exc})") from None
            store.entries[rec.digest] = rec
        return store


def _run_task(task: MapTask):
    chain = run_chain(task.problem, task.params, RngStream(task.seed, 0), task.budget)
    return IntermediateRecord(solution_digest(task.problem, chain.best_solution),
                              chain.best_solution, chain.best_energy, task.task_id)


def map_phase(tasks, crash_tasks=(), workers: int = 1) -> MapOutput:
    """Run every task's chain; failed or crashed tasks emit nothing.

    Output is ordered by task_id whatever the execution order.
    """
    tasks = list(tasks)
    if not tasks:
        raise ValidationError("map_phase needs at least one task")
    ids = [t.task_id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValidationError("task ids must be unique within a job")
    crash = set(crash_tasks)
    live = [t for t in tasks if t.task_id not in crash]
    failed = [(tid, "crashed") for tid in sorted(crash & set(ids))]

    results = []
    if workers > 1 and len(live) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            futures = [(t.task_id, pool.submit(_run_task, t)) for t in live]
            for tid, fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:  # shared-nothing: a failing mapper only loses its own output
                    failed.append((tid, repr(exc)))
    else:
        for t in live:
            try:
                results.append(_run_task(t))
            except Exception as exc:
                failed.append((t.task_id, repr(exc)))
    for tid, reason in failed:
        log.warning("map task %s produced no output: %s", tid, reason)
    results.sort(key=lambda r: r.task_id)
    failed.sort()
    return MapOutput(results, failed)


def store_intermediate(store: IntermediateStore, record: IntermediateRecord) -> IntermediateStore:
    cur = store.entries.get(record.digest)
    if cur is None or (record.energy, record.task_id) < (cur.energy, cur.task_id):
        store.entries[record.digest] = record
    return store


def verify_intermediates(store: IntermediateStore, problem) -> list:
    """Recompute every stored energy; returns the entries that do not check out."""
    bad = []
    for r in store:
        try:
            problem.validate(r.solution)
        except ValidationError:
            r.verified = False
            bad.append(Mismatch(r.digest, r.task_id, "infeasible", r.energy, None))
            continue
        e = problem.energy(r.solution)
        if abs(r.energy - e) > VERIFY_TOL:
            r.verified = False
            bad.append(Mismatch(r.digest, r.task_id, "energy", r.energy, e))
        else:
            r.verified = True
    return bad


def reduce_best(store: IntermediateStore) -> ReduceResult:
    verified = [r for r in store if r.verified]
    if not verified:
        raise JobFailure("no verified intermediate result to reduce")
    r = min(verified, key=lambda r: (r.energy, r.task_id))
    return ReduceResult(r.solution, r.energy, r.task_id)


def merge_results(results) -> ReduceResult:
    """Reduce already-reduced partial results."""
    results = list(results)
    if not results:
        raise JobFailure("nothing to merge")
    return min(results, key=lambda r: (r.energy, r.task_id))


def run_job(tasks, problem, crash_tasks=(), workers: int = 1):
    out = map_phase(tasks, crash_tasks=crash_tasks, workers=workers)
    store = IntermediateStore()
    for rec in out.records:
        store_intermediate(store, rec)
    mismatches = verify_intermediates(store, problem)
    return store, mismatches, reduce_best(store), out.failed
