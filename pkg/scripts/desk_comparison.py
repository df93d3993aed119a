"""Compare the equilibrium solvers on the automobile desk scenario.

Runs every method over a set of sample seeds, writes results.csv,
summary.json and per-run traces, then prints a per-method table.

    python3 scripts/desk_comparison.py --scenario blp95 --S 500 --seeds 1..10
"""

import argparse
from collections import defaultdict
from pathlib import Path

import numpy as np

from bertrand_eq.cli import RunConfig, execute, parse_int_list, write_outputs
from bertrand_eq.solvers import InitStrategy, Method, SolverConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="blp95")
    ap.add_argument("--methods", default="zeta-fpi,zeta-nm,eta-nm,cg-nm")
    ap.add_argument("--init", default="costs")
    ap.add_argument("--seeds", default="1..10")
    ap.add_argument("--S", type=int, default=500)
    ap.add_argument("--eps-T", type=float, default=1e-6)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    args = ap.parse_args()

    config = RunConfig(
        scenario=args.scenario,
        methods=tuple(Method.parse(m) for m in args.methods.split(",")),
        inits=(InitStrategy.parse(args.init),),
        seeds=tuple(parse_int_list(args.seeds)),
        S_values=(args.S,),
        solver=SolverConfig(eps_T=args.eps_T),
        out_dir=args.out,
        workers=args.workers,
    )
    rows = write_outputs(config.out_dir, execute(config), config.reference)

    by_method = defaultdict(list)
    for r in rows:
        by_method[r["method"]].append(r)
    print(f"{'method':10s} {'conv':>5s} {'FO+SO':>6s} {'iters (med)':>12s} {'time (med)':>11s} {'max dev':>10s}")
    for method, rs in by_method.items():
        conv = sum(r["status"] == "Converged" for r in rs)
        both = sum(r["FO"] == "S" and r["SO"] == "S" for r in rs)
        iters = np.median([int(r["iterations"]) for r in rs])
        wall = np.median([float(r["wall_time"]) for r in rs])
        devs = [float(r["dev_max"]) for r in rs if r["dev_max"] not in ("", "nan")]
        dev = f"{max(devs):10.2e}" if devs else f"{'-':>10s}"
        print(f"{method:10s} {conv:5d} {both:6d} {iters:12.1f} {wall:10.3f}s {dev}")
    print(f"outputs in {config.out_dir}")


if __name__ == "__main__":
    main()
