"""Newton iteration on F(x) = (1 - x.x) x, a field whose only root is 0.

Shows the three regimes of the undamped iteration around |x| = 1/sqrt(3),
then shows that the trust-region engine started outside the unit ball walks
away from the root instead of finding it.
"""

import argparse

import numpy as np

from bertrand_eq.pathology import CONTRACTION_RADIUS, classify_iterates, newton_norm_map, predicted_class, run_engine


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--steps", type=int, default=12)
    args = ap.parse_args()

    direction = np.ones(args.dim) / np.sqrt(args.dim)
    print(f"threshold radius 1/sqrt(3) = {CONTRACTION_RADIUS:.12f}")
    for r0 in (0.4, CONTRACTION_RADIUS, 0.7):
        _, visited = run_engine(r0 * direction, pure_newton=True, max_iter=args.steps)
        norms = [np.linalg.norm(x) for x in visited]
        r, closed = r0, [r0]
        for _ in range(min(4, len(norms) - 1)):
            r = newton_norm_map(r)
            closed.append(r)
        print(f"\n|x0| = {r0:.6f}  predicted {predicted_class(r0)}, observed {classify_iterates(visited)}")
        print("  norms      " + " ".join(f"{n:.4g}" for n in norms[:6]))
        print("  closed map " + " ".join(f"{n:.4g}" for n in closed))

    result, visited = run_engine(2.0 * direction, pure_newton=False, max_iter=args.steps)
    print(f"\ntrust region from |x0| = 2: status {result.status.value}")
    print("  norms " + " ".join(f"{np.linalg.norm(x):.4g}" for x in visited))


if __name__ == "__main__":
    main()
