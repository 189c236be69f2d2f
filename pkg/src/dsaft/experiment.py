"""Experiment configuration, orchestration, overhead accounting and outputs."""
from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import tomli

from .annealing import AnnealParams, calibrated_params, schedule_length
from .cluster import ClusterConfig, ExperimentTrace, build_cluster, run_until_done
from .errors import ConfigError, DegenerateTraceError, DsaError, ParameterError, ValidationError
from .faults import FaultScenario, load_scenario, scenario_from_dict
from .problems import (
    JobShopProblem,
    Skewed1dProblem,
    TspProblem,
    basin_of,
    load_jobshop,
    load_tsp,
    random_jobshop,
    random_tsp,
)
from .state import FabricConfig, MsgKind, Role
from .tolerance import SANCTION_POLICIES, Strategy, ToleranceConfig

log = logging.getLogger(__name__)

TRACE_HEADER = ("tick", "global_best_energy", "messages_sent", "messages_dropped", "live_nodes")

# ------------------------------------------------------------------ config


def _int(lo=None):
    def check(v):
        if not isinstance(v, int) or isinstance(v, bool):
            return "must be an integer"
        if lo is not None and v < lo:
            return f"must be >= {lo}"
    return check


def _real(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            return "must be a number"
        if lo is not None and (v <= lo if lo_open else v < lo):
            return f"must be {'>' if lo_open else '>='} {lo}"
        if hi is not None and (v >= hi if hi_open else v > hi):
            return f"must be {'<' if hi_open else '<='} {hi}"
    return check


def _choice(options):
    def check(v):
        if v not in options:
            return f"must be one of {sorted(options)}"
    return check


def _bool(v):
    if not isinstance(v, bool):
        return "must be true or false"


def _str(v):
    if not isinstance(v, str):
        return "must be a string"


def _strategies(v):
    if not isinstance(v, list):
        return "must be a list"
    valid = {s.value for s in Strategy}
    bad = [s for s in v if s not in valid]
    if bad:
        return f"unknown strategies {bad}; valid: {sorted(valid)}"


_REQUIRED = object()

SCHEMA = {
    "problem": {
        "kind": (_choice({"tsp", "jobshop", "skewed1d"}), _REQUIRED),
        "instance": (_str, None),
        "n_cities": (_int(3), 8),
        "jobs": (_int(1), 2),
        "machines": (_int(1), 2),
        "seed": (_int(0), 7),
    },
    "anneal": {
        "p_e0": (_real(0, 1, True, True), 0.8),
        "k": (_real(0, lo_open=True), 1.0),
        "alpha": (_real(0, 1, True, True), 0.95),
        "steps_per_temperature": (_int(1), 50),
        "t0": (_real(0, lo_open=True), None),
        "t_low": (_real(0, lo_open=True), None),
        "t_low_ratio": (_real(0, 1, True, True), 1e-3),
        "warmup_steps": (_int(10), 200),
    },
    "cluster": {
        "n_searchers": (_int(1), 8),
        "n_standby": (_int(0), 0),
        "heartbeat_period": (_int(1), 10),
        "timeout_heartbeats": (_int(1), 3),
        "adoption_beta": (_real(0, 1), 0.5),
        "broadcasts": (_bool, True),
        "budget_ticks": (_int(1), None),
    },
    "fabric": {
        "base_delay": (_int(0), 1),
        "jitter": (_int(0), 0),
        "loss_probability": (_real(0, 1, hi_open=True), 0.0),
        "corruption_probability": (_real(0, 1, hi_open=True), 0.0),
        "per_message_cost": (_real(0), 0.0),
    },
    "tolerance": {
        "strategies": (_strategies, []),
        "theta": (_real(0, 1, True, True), 0.1),
        "rho": (_real(0, 1, True, True), 0.25),
        "window": (_int(1), 8),
        "eps": (_real(0), 0.0),
        "sanction": (_choice(set(SANCTION_POLICIES)), "auto"),
    },
    "experiment": {
        "seed": (_int(0), 0),
        "seeds": (_int(1), 1),
        "out": (_str, "out"),
        "format": (_choice({"csv", "json"}), "csv"),
        "parallel_fraction": (_real(0, 1), None),
        "fraction_of_work": (_choice({"p", "1-p"}), "p"),
        "workers": (_int(1), 1),
    },
    "mapreduce": {
        "tasks": (_int(1), 8),
        "budget": (_int(1), 10**6),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: dict
    anneal: dict
    cluster: dict
    fabric: FabricConfig
    scenario: FaultScenario
    tolerance: ToleranceConfig
    experiment: dict
    mapreduce: dict
    base_dir: Path = Path(".")

    def with_seed(self, seed):
        return replace(self, experiment={**self.experiment, "seed": int(seed)})

    def with_updates(self, **sections):
        """Copy with some keys of dict-valued sections replaced, e.g. cluster={"broadcasts": False}."""
        changes = {name: {**getattr(self, name), **vals} for name, vals in sections.items()}
        return replace(self, **changes)


def config_from_dict(data: dict, base_dir=".") -> ExperimentConfig:
    """Validate a config mapping, reporting every problem with its key path."""
    base_dir = Path(base_dir)
    problems = []
    known = set(SCHEMA) | {"faults"}
    for key in data:
        if key not in known:
            problems.append((key, "unknown section"))
    sections = {}
    for name, fields in SCHEMA.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            problems.append((name, "must be a table"))
            raw = {}
        for key in raw:
            if key not in fields:
                problems.append((f"{name}.{key}", "unknown key"))
        vals = {}
        for key, (check, default) in fields.items():
            if raw.get(key) is not None:  # None (never produced by TOML) means "use the default"
                msg = check(raw[key])
                if msg:
                    problems.append((f"{name}.{key}", msg))
                vals[key] = raw[key]
            elif default is _REQUIRED:
                problems.append((f"{name}.{key}", "required key missing"))
            else:
                vals[key] = default
        sections[name] = vals

    an = sections["anneal"]
    if isinstance(an.get("t0"), (int, float)) and isinstance(an.get("t_low"), (int, float)):
        if an["t_low"] >= an["t0"]:
            problems.append(("anneal.t_low", "must be below anneal.t0"))
    inst = sections["problem"].get("instance")
    if isinstance(inst, str) and not (base_dir / inst).is_file():
        problems.append(("problem.instance", f"file not found: {inst}"))

    scenario = FaultScenario()
    faults = data.get("faults", {})
    if not isinstance(faults, dict):
        problems.append(("faults", "must be a table"))
        faults = {}
    inline = {k: v for k, v in faults.items() if k != "scenario"}
    try:
        if "scenario" in faults:
            path = faults["scenario"]
            if not isinstance(path, str):
                problems.append(("faults.scenario", "must be a path string"))
            else:
                scenario = load_scenario(base_dir / path)
        if inline:
            scenario = scenario_from_dict(inline, prefix="faults.")
    except ConfigError as exc:
        problems.extend(exc.problems)

    if problems:
        raise ConfigError(problems)
    n_nodes = sections["cluster"]["n_searchers"] + sections["cluster"]["n_standby"]
    try:
        scenario.validate(n_nodes, sections["cluster"]["budget_ticks"])
    except ValidationError as exc:
        raise ConfigError([("faults", str(exc))]) from None
    return ExperimentConfig(
        problem=sections["problem"],
        anneal=sections["anneal"],
        cluster=sections["cluster"],
        fabric=FabricConfig(**sections["fabric"]),
        scenario=scenario,
        tolerance=ToleranceConfig(**sections["tolerance"]),
        experiment=sections["experiment"],
        mapreduce=sections["mapreduce"],
        base_dir=base_dir,
    )


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([(str(path), "config file not found")])
    try:
        data = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([(str(path), f"TOML syntax error: {exc}")]) from None
    return config_from_dict(data, p.parent)


# ------------------------------------------------------------ construction


def make_problem(spec: dict, base_dir="."):
    kind = spec["kind"]
    inst = spec.get("instance")
    if kind == "tsp":
        instance = load_tsp(Path(base_dir) / inst) if inst else random_tsp(spec["n_cities"], spec["seed"])
        return TspProblem(instance)
    if kind == "jobshop":
        instance = (load_jobshop(Path(base_dir) / inst) if inst
                    else random_jobshop(spec["jobs"], spec["machines"], spec["seed"]))
        return JobShopProblem(instance)
    if kind == "skewed1d":
        return Skewed1dProblem()
    raise ValidationError(f"unknown problem kind {kind!r}")


def make_params(spec: dict, problem, seed: int) -> AnnealParams:
    if spec.get("t0") is not None:
        t0 = spec["t0"]
        t_low = spec["t_low"] if spec.get("t_low") is not None else t0 * spec["t_low_ratio"]
        return AnnealParams(t0=t0, t_low=t_low, p_e0=spec["p_e0"], alpha=spec["alpha"],
                            steps_per_temperature=spec["steps_per_temperature"], k=spec["k"])
    return calibrated_params(problem, seed, p_e0=spec["p_e0"], k=spec["k"], t_low=spec.get("t_low"),
                             t_low_ratio=spec["t_low_ratio"], alpha=spec["alpha"],
                             steps_per_temperature=spec["steps_per_temperature"],
                             warmup_steps=spec["warmup_steps"])


# -------------------------------------------------------------- overhead


def amdahl_speedup(p: float, n: int) -> float:
    if not 0 <= p <= 1:
        raise ParameterError(f"parallel fraction must lie in [0, 1], got {p}")
    if n < 1 or int(n) != n:
        raise ParameterError(f"node count must be a positive integer, got {n}")
    # n / (n - p(n-1)) equals 1 / ((1-p) + p/n) but is exact at n=1 and p=1
    return n / (n - p * (n - 1))


@dataclass(frozen=True)
class OverheadReport:
    p: float
    n: int
    speedup: float
    comm_cost_fraction: float
    beneficial: bool
    p_source: str
    fraction_of_work: str
    threshold: float


def overhead_analysis(trace: ExperimentTrace, p: Optional[float], n: int,
                      fraction_of_work: str = "p") -> OverheadReport:
    """Compare communication cost per annealing step with work-fraction / speedup.

    ``p=None`` estimates the parallel fraction as node steps over node steps
    plus coordinator events.
    """
    steps = trace.total_steps
    if steps == 0:
        raise DegenerateTraceError("trace contains no annealing steps")
    source = "supplied"
    if p is None:
        p = steps / (steps + trace.coordinator_events)
        source = "estimated"
    s = amdahl_speedup(p, n)
    comm = trace.messages_sent * trace.per_message_cost / steps
    work = p if fraction_of_work == "p" else 1.0 - p
    threshold = work / s
    return OverheadReport(p, n, s, comm, comm <= threshold, source, fraction_of_work, threshold)


# ------------------------------------------------------------------ report


@dataclass
class ExperimentReport:
    seed: int
    problem: str
    completed: bool
    ticks: int
    final_best_energy: Optional[float]
    final_best_solution: Any
    record_energy: Optional[float]
    global_hit: Optional[bool]
    node_hit_fraction: Optional[float]
    ticks_to_global_basin: Optional[int]
    messages_sent: int
    messages_by_kind: dict
    messages_dropped: int
    corruptions_applied: int
    corruptions_detected: int
    faults_applied: int
    faults_by_kind: dict
    crashes: int
    detections: int
    replacements: int
    promotions: int
    flags: int
    sanctions: int
    adoptions: int
    total_steps: int
    coordinator_events: int
    overhead: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _jsonable(sol):
    if isinstance(sol, tuple):
        return list(sol)
    return sol


def build_report(config: ExperimentConfig, trace: ExperimentTrace, seed: int) -> ExperimentReport:
    kind = config.problem["kind"]
    c = trace.counters
    final = trace.final_best
    global_hit = node_hit = to_basin = None
    if kind == "skewed1d":
        global_hit = final is not None and basin_of(final[1]) == "global"
        chains = [trace.final_chains[i] for i, r in trace.roles.items()
                  if r in (Role.SEARCHER, Role.RECIPROCATOR) and trace.final_chains[i] is not None]
        node_hit = (sum(basin_of(ch.best_solution) == "global" for ch in chains) / len(chains)
                    if chains else 0.0)
        for ev in trace.event_log:
            if ev["ev"] == "record" and basin_of(ev["solution"]) == "global":
                to_basin = ev["t"]
                break
    overhead = overhead_analysis(trace, config.experiment["parallel_fraction"],
                                 config.cluster["n_searchers"], config.experiment["fraction_of_work"])
    kinds = ("crash", "drop", "corrupt", "eccentric")
    return ExperimentReport(
        seed=seed,
        problem=kind,
        completed=trace.completed,
        ticks=trace.ticks,
        final_best_energy=final[0] if final else None,
        final_best_solution=_jsonable(final[1]) if final else None,
        record_energy=trace.record[0] if trace.record else None,
        global_hit=global_hit,
        node_hit_fraction=node_hit,
        ticks_to_global_basin=to_basin,
        messages_sent=c["sent"],
        messages_by_kind={k.name: c[f"sent_{k.name}"] for k in MsgKind},
        messages_dropped=c["dropped"],
        corruptions_applied=c["corrupted"],
        corruptions_detected=c["corruptions_detected"],
        faults_applied=len(trace.fault_trace),
        faults_by_kind={k: trace.fault_trace.count(k) for k in kinds},
        crashes=trace.fault_trace.count("crash"),
        detections=c["detections"],
        replacements=c["replacements"],
        promotions=c["promotions"],
        flags=c["flags"],
        sanctions=c["sanctions"],
        adoptions=c["adoptions"],
        total_steps=trace.total_steps,
        coordinator_events=trace.coordinator_events,
        overhead=asdict(overhead),
    )


# -------------------------------------------------------------- execution


def execute(config: ExperimentConfig, seed: Optional[int] = None):
    """Run one experiment in memory; returns ``(report, trace)``."""
    seed = config.experiment["seed"] if seed is None else int(seed)
    problem = make_problem(config.problem, config.base_dir)
    params = make_params(config.anneal, problem, seed)
    cl = config.cluster
    cluster_cfg = ClusterConfig(heartbeat_period=cl["heartbeat_period"],
                                timeout_heartbeats=cl["timeout_heartbeats"],
                                adoption_beta=cl["adoption_beta"], broadcasts=cl["broadcasts"])
    sim = build_cluster(cl["n_searchers"], cl["n_standby"], config.fabric, params, problem, seed,
                        cluster_cfg, config.tolerance, config.scenario)
    budget = cl["budget_ticks"] or 2 * schedule_length(params) + 10 * cl["heartbeat_period"]
    trace = run_until_done(sim, budget)
    return build_report(config, trace, seed), trace


def run_experiment(config: ExperimentConfig, seed: Optional[int] = None, out_dir=None,
                   fmt: Optional[str] = None) -> ExperimentReport:
    seed = config.experiment["seed"] if seed is None else seed
    try:
        report, trace = execute(config, seed)
    except DsaError as exc:
        raise type(exc)(f"experiment seed={seed}: {exc}") if not isinstance(exc, ConfigError) else exc
    if out_dir is not None:
        emit_outputs(report, trace, out_dir, fmt or config.experiment["format"])
    return report


def _sweep_one(args):
    config, seed = args
    try:
        return seed, execute(config, seed)[0].to_dict(), None
    except DsaError as exc:
        return seed, None, repr(exc)


SUMMARY_FIELDS = ("final_best_energy", "ticks_to_global_basin", "messages_sent", "node_hit_fraction",
                  "corruptions_detected", "sanctions")


def _quantiles(values):
    vals = sorted(v for v in values if v is not None)
    if not vals:
        return None
    if len(vals) == 1:
        q10 = q90 = vals[0]
    else:
        qs = statistics.quantiles(vals, n=10, method="inclusive")
        q10, q90 = qs[0], qs[-1]
    return {"n": len(vals), "median": statistics.median(vals), "q10": q10, "q90": q90,
            "mean": statistics.fmean(vals), "min": vals[0], "max": vals[-1]}


@dataclass
class SweepReport:
    runs: list
    failures: list
    summary: dict


def summarize(runs) -> dict:
    summary = {f: _quantiles([r[f] for r in runs]) for f in SUMMARY_FIELDS}
    hits = [r["global_hit"] for r in runs if r["global_hit"] is not None]
    summary["global_hit_rate"] = sum(hits) / len(hits) if hits else None
    summary["runs"] = len(runs)
    return summary


def run_sweep(config: ExperimentConfig, seeds: int, workers: int = 1) -> SweepReport:
    """Run seeds ``seed .. seed + seeds - 1``; aggregation is ordered by seed."""
    if seeds < 1:
        raise ParameterError("seed count must be at least 1")
    base = config.experiment["seed"]
    jobs = [(config, base + i) for i in range(seeds)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    runs = [r for _, r, err in results if err is None]
    failures = [(s, err) for s, _, err in results if err is not None]
    for s, err in failures:
        log.warning("sweep run seed=%s failed: %s", s, err)
    return SweepReport(runs, failures, summarize(runs))


def paired_comparison(on: SweepReport, off: SweepReport) -> dict:
    """Side-by-side summary of two sweeps over the same seeds."""
    def rate(runs, key):
        vals = [r[key] for r in runs if r[key] is not None]
        return statistics.fmean(vals) if vals else None

    return {
        "seeds": len(on.runs),
        "median_final_energy": (on.summary["final_best_energy"]["median"],
                                off.summary["final_best_energy"]["median"]),
        "run_hit_rate": (on.summary["global_hit_rate"], off.summary["global_hit_rate"]),
        "node_hit_rate": (rate(on.runs, "node_hit_fraction"), rate(off.runs, "node_hit_fraction")),
        "median_messages": (on.summary["messages_sent"]["median"], off.summary["messages_sent"]["median"]),
        "paired_wins": sum(a["final_best_energy"] < b["final_best_energy"] for a, b in zip(on.runs, off.runs)),
        "paired_losses": sum(a["final_best_energy"] > b["final_best_energy"] for a, b in zip(on.runs, off.runs)),
    }


# ----------------------------------------------------------------- output


def _num(v):
    return "" if v is None else repr(v)


def trace_csv(trace: ExperimentTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for tick, best, sent, dropped, live in trace.rows:
        w.writerow((tick, _num(best), sent, dropped, live))
    return buf.getvalue()


def convergence_rows(trace: ExperimentTrace):
    """(tick, energy) at each improvement of the global record, plus the final harvested best."""
    rows, last = [], None
    for tick, best, *_ in trace.rows:
        if best is not None and (last is None or best < last):
            rows.append((tick, best))
            last = best
    end = trace.rows[-1][0] if trace.rows else 0
    rows.append((end, trace.final_best[0] if trace.final_best else None))
    return rows


def event_log_jsonl(trace: ExperimentTrace) -> str:
    out = []
    for ev in trace.event_log:
        ev = {k: _jsonable(v) for k, v in ev.items()}
        out.append(json.dumps(ev, allow_nan=False))
    return "\n".join(out) + "\n"


def emit_outputs(report: ExperimentReport, trace: ExperimentTrace, out_dir, fmt: str = "csv") -> dict:
    """Write trace, report, convergence curve and event log; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        if fmt == "json":
            rows = [dict(zip(TRACE_HEADER, r)) for r in trace.rows]
            paths["trace"] = out / "trace.json"
            paths["trace"].write_text(json.dumps(rows, indent=1) + "\n")
        else:
            paths["trace"] = out / "trace.csv"
            paths["trace"].write_text(trace_csv(trace))
        paths["report"] = out / "report.json"
        paths["report"].write_text(json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n")
        paths["convergence"] = out / "convergence.dat"
        paths["convergence"].write_text("".join(f"{t} {_num(e)}\n" for t, e in convergence_rows(trace)))
        paths["events"] = out / "events.jsonl"
        paths["events"].write_text(event_log_jsonl(trace))
    except OSError as exc:
        raise OSError(f"writing outputs to {out}: {exc}") from exc
    return paths


def emit_sweep(sweep: SweepReport, out_dir, fmt: str = "csv") -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    flat = [{k: v for k, v in r.items() if not isinstance(v, (dict, list))} for r in sweep.runs]
    paths = {}
    if fmt == "json":
        paths["runs"] = out / "runs.json"
        paths["runs"].write_text(json.dumps(flat, indent=1) + "\n")
    else:
        paths["runs"] = out / "runs.csv"
        buf = io.StringIO()
        if flat:
            w = csv.DictWriter(buf, fieldnames=list(flat[0]), lineterminator="\n")
            w.writeheader()
            for r in flat:
                w.writerow({k: _num(v) if isinstance(v, float) else v for k, v in r.items()})
        paths["runs"].write_text(buf.getvalue())
    paths["summary"] = out / "summary.json"
    paths["summary"].write_text(json.dumps({"summary": sweep.summary, "failures": sweep.failures},
                                           indent=2) + "\n")
    return paths
