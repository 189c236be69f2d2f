"""Command-line entry point: ``dsaft {run,sweep,verify,oracle}``.

Exit codes: 0 success, 1 validation error (bad config, bad input file, failed
store audit), 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .errors import ConfigError, DsaError, ValidationError
from .mapreduce import IntermediateStore, MapTask, run_job, verify_intermediates
from .problems import brute_force_optimum

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", required=True, help="experiment config (TOML)")
    p.add_argument("--seed", type=int, help="master seed (overrides experiment.seed)")
    p.add_argument("--out", help="output directory (overrides experiment.out)")
    p.add_argument("--format", choices=("csv", "json"), help="trace/table format")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="dsaft", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one experiment")
    sw = sub.add_parser("sweep", parents=[common], help="run a seed sweep")
    sw.add_argument("--seeds", type=int, help="number of seeds (overrides experiment.seeds)")
    sw.add_argument("--workers", type=int, help="parallel worker processes")
    sw.add_argument("--compare-broadcasts", action="store_true",
                    help="also run with broadcasts disabled and print a paired table")
    vf = sub.add_parser("verify", parents=[common], help="MapReduce job with store audit")
    vf.add_argument("--store", help="audit an existing store dump instead of running the job")
    sub.add_parser("oracle", parents=[common], help="brute-force optimum of the configured problem")
    return parser


def _settings(args, cfg):
    seed = args.seed if args.seed is not None else cfg.experiment["seed"]
    out = Path(args.out if args.out else cfg.experiment["out"])
    fmt = args.format or cfg.experiment["format"]
    return seed, out, fmt


def cmd_run(args, cfg):
    seed, out, fmt = _settings(args, cfg)
    report = ex.run_experiment(cfg, seed, out, fmt)
    print(json.dumps({"seed": seed, "final_best_energy": report.final_best_energy,
                      "completed": report.completed, "out": str(out)}))
    return EXIT_OK


def cmd_sweep(args, cfg):
    seed, out, fmt = _settings(args, cfg)
    cfg = cfg.with_seed(seed)
    count = args.seeds or cfg.experiment["seeds"]
    workers = args.workers or cfg.experiment["workers"]
    sweep = ex.run_sweep(cfg, count, workers)
    ex.emit_sweep(sweep, out, fmt)
    result = {"summary": sweep.summary, "failures": sweep.failures}
    if args.compare_broadcasts:
        off = ex.run_sweep(cfg.with_updates(cluster={"broadcasts": False}), count, workers)
        ex.emit_sweep(off, out / "broadcasts_off", fmt)
        result = ex.paired_comparison(sweep, off)
        (out / "comparison.json").write_text(json.dumps(result, indent=2) + "\n")
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_verify(args, cfg):
    seed, out, _ = _settings(args, cfg)
    problem = ex.make_problem(cfg.problem, cfg.base_dir)
    if args.store:
        store = IntermediateStore.load(args.store)
        bad = verify_intermediates(store, problem)
        print(json.dumps({"entries": len(store), "mismatches": [m.__dict__ for m in bad]}, indent=2))
        return EXIT_VALIDATION if bad else EXIT_OK
    params = ex.make_params(cfg.anneal, problem, seed)
    mr = cfg.mapreduce
    tasks = [MapTask(i, problem, params, seed + i, mr["budget"]) for i in range(mr["tasks"])]
    store, bad, result, failed = run_job(tasks, problem, workers=cfg.experiment["workers"])
    out.mkdir(parents=True, exist_ok=True)
    store.dump(out / "store.jsonl")
    summary = {"entries": len(store), "mismatches": len(bad), "failed_tasks": failed,
               "best_energy": result.energy, "task_id": result.task_id,
               "solution": ex._jsonable(result.solution)}
    (out / "reduce.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_oracle(args, cfg):
    problem = ex.make_problem(cfg.problem, cfg.base_dir)
    sol, e = brute_force_optimum(problem)
    print(json.dumps({"problem": problem.kind, "energy": e, "solution": ex._jsonable(sol)}))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "oracle": cmd_oracle}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ex.parse_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DsaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
