"""GMRES residual histories for the combined-gradient Newton system.

At an equilibrium of the desk scenario the Jacobian of the combined gradient
is solved with and without left scaling by the own-price derivatives. The
scaled system runs to the tolerance that guarantees the same unscaled
residual. Prints the relative residual at every Krylov dimension for both.
"""

import argparse

import numpy as np

from bertrand_eq.demand_calculus import combined_gradient, evaluate, hessian_parts
from bertrand_eq.model_zoo import preset
from bertrand_eq.newton_krylov import gmres, preconditioned_tolerance
from bertrand_eq.solvers import solve


def first_hit(history, tol):
    hit = np.flatnonzero(np.asarray(history)[1:] <= tol)
    return int(hit[0] + 1) if hit.size else None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="blp95")
    ap.add_argument("--S", type=int, default=500)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("--offset", type=float, default=0.0, help="shift away from the equilibrium before linearizing")
    args = ap.parse_args()

    sc = preset(args.scenario)
    samples = sc.samples(S=args.S, seed=args.seed)
    p = solve("zeta-fpi", sc.market, sc.model, samples, sc.market.costs).p_final + args.offset
    L, ev = evaluate(sc.model, samples, sc.market, p)
    A = hessian_parts(L, ev, sc.market, p).cg_jacobian()
    g = combined_gradient(ev, sc.market, p)
    J = sc.market.J

    plain = gmres(lambda v: A @ v, -g, args.tol, J).state.residual_history
    scaled_tol = preconditioned_tolerance(g, ev.lam, args.tol)
    scaled = gmres(lambda v: (A @ v) / ev.lam, -g / ev.lam, scaled_tol, J).state.residual_history

    print(f"condition number: plain {np.linalg.cond(A):.3e}, scaled {np.linalg.cond(A / ev.lam[:, None]):.3e}")
    print(f"{'dim':>4s} {'plain':>12s} {'scaled':>12s}")
    for k in range(max(len(plain), len(scaled))):
        a = f"{plain[k]:12.3e}" if k < len(plain) else " " * 12
        b = f"{scaled[k]:12.3e}" if k < len(scaled) else " " * 12
        print(f"{k:4d} {a} {b}")
    print(f"plain reaches {args.tol:.1e} at dimension {first_hit(plain, args.tol)}")
    print(f"scaled reaches {scaled_tol:.2e} at dimension {first_hit(scaled, scaled_tol)}")


if __name__ == "__main__":
    main()
