"""How much the computed equilibrium moves between independent sample draws.

For each sample size, solves with several seeds and reports the median and
largest pairwise sup-norm gap between the resulting price vectors.
"""

import argparse
import itertools

import numpy as np

from bertrand_eq.cli import parse_int_list
from bertrand_eq.model_zoo import preset
from bertrand_eq.solvers import solve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="blp95")
    ap.add_argument("--sizes", default="100,250,500,1000,2000")
    ap.add_argument("--seeds", default="1..8")
    ap.add_argument("--method", default="zeta-nm")
    args = ap.parse_args()

    sc = preset(args.scenario)
    seeds = parse_int_list(args.seeds)
    print(f"{'S':>6s} {'median gap':>12s} {'max gap':>12s} {'gap*sqrt(S)':>12s}")
    for S in parse_int_list(args.sizes):
        finals = [solve(args.method, sc.market, sc.model, sc.samples(S=S, seed=s), sc.market.costs).p_final for s in seeds]
        gaps = [np.max(np.abs(a - b)) for a, b in itertools.combinations(finals, 2)]
        med = float(np.median(gaps))
        print(f"{S:6d} {med:12.4e} {max(gaps):12.4e} {med * np.sqrt(S):12.4f}")


if __name__ == "__main__":
    main()
