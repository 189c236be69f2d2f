"""Paired broadcast on/off sweep on the skewed landscape.

Prints the comparison table used to pin the acceptance fixture. The
broadcast-on arm runs with the gradient guard enabled so the same sweep also
counts false positives (the guard only observes honest nodes).
"""
import argparse
import json
import time

from dsaft import experiment as ex


def fixture_config(n_searchers=8, steps_per_temperature=10, guard=True):
    return ex.config_from_dict({
        "problem": {"kind": "skewed1d"},
        "anneal": {"steps_per_temperature": steps_per_temperature},
        "cluster": {"n_searchers": n_searchers},
        "tolerance": {"strategies": ["gradient_guard"] if guard else []},
    })


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--nodes", type=int, default=8)
    ap.add_argument("--spt", type=int, default=10, help="steps per temperature")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    start = time.perf_counter()
    on_cfg = fixture_config(args.nodes, args.spt)
    off_cfg = on_cfg.with_updates(cluster={"broadcasts": False})
    on = ex.run_sweep(on_cfg, args.seeds, args.workers)
    off = ex.run_sweep(off_cfg, args.seeds, args.workers)
    table = ex.paired_comparison(on, off)
    table["guard_flags_on_honest_runs"] = sum(r["flags"] for r in on.runs)
    table["seconds"] = round(time.perf_counter() - start, 1)
    print(json.dumps(table, indent=2))


if __name__ == "__main__":
    main()
