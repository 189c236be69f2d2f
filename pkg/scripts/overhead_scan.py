"""Communication overhead against Amdahl's bound as the cluster grows.

Runs the skewed landscape for several node counts and per-message costs and
prints whether distribution is still worth it under the work-fraction rule.
"""
import argparse
import csv
import sys

from dsaft import experiment as ex


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, nargs="+", default=[2, 4, 8, 16])
    ap.add_argument("--costs", type=float, nargs="+", default=[0.0, 0.01, 0.1, 1.0])
    ap.add_argument("--p", type=float, default=None, help="parallel fraction (estimated from the trace if omitted)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("nodes", "per_message_cost", "p", "p_source", "speedup", "comm_cost_fraction", "threshold",
                "beneficial", "messages"))
    for n in args.nodes:
        for cost in args.costs:
            cfg = ex.config_from_dict({
                "problem": {"kind": "skewed1d"},
                "anneal": {"steps_per_temperature": 10},
                "cluster": {"n_searchers": n},
                "fabric": {"per_message_cost": cost},
                "experiment": {"parallel_fraction": args.p},
            })
            rep, _ = ex.execute(cfg, args.seed)
            o = rep.overhead
            w.writerow((n, cost, f"{o['p']:.6f}", o["p_source"], f"{o['speedup']:.4f}",
                        f"{o['comm_cost_fraction']:.6f}", f"{o['threshold']:.6f}", o["beneficial"],
                        rep.messages_sent))


if __name__ == "__main__":
    main()
