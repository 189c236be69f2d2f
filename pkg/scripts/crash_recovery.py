"""Crash-recovery table: final energy vs crash time, with and without tolerance strategies.

For each crash tick the same seed is rerun with node 0 crashing at that tick;
rows compare the final reported energy against the fault-free run.
"""
import argparse
import csv
import sys

from dsaft import experiment as ex


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/tsp_crash_recovery.toml")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--ticks", type=int, nargs="+", default=[50, 500, 2000, 5000])
    args = ap.parse_args(argv)

    base = ex.parse_config(args.config)
    variants = {
        "none": [],
        "standby": ["hot_standby"],
        "standby+replication": ["hot_standby", "hybrid_replication"],
    }
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("strategies", "seed", "crash_tick", "final_energy", "fault_free_energy", "detections",
                "replacements", "promotions", "completed"))
    for name, strategies in variants.items():
        for seed in range(args.seeds):
            clean = ex.config_from_dict({
                "problem": base.problem, "anneal": base.anneal, "cluster": base.cluster,
                "tolerance": {"strategies": strategies},
            }, base.base_dir)
            ref, _ = ex.execute(clean, seed)
            for tick in args.ticks:
                cfg = ex.config_from_dict({
                    "problem": base.problem, "anneal": base.anneal, "cluster": base.cluster,
                    "tolerance": {"strategies": strategies},
                    "faults": {"crash": [{"node": 0, "tick": tick}]},
                }, base.base_dir)
                rep, _ = ex.execute(cfg, seed)
                w.writerow((name, seed, tick, repr(rep.final_best_energy), repr(ref.final_best_energy),
                            rep.detections, rep.replacements, rep.promotions, rep.completed))


if __name__ == "__main__":
    main()
