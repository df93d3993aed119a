"""Solution methods, termination, truncation, starting points and verification.

Every method stops on the same test, ``||combined gradient||_inf <= eps_T``,
whatever residual it iterates on.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .demand_calculus import DemandEval, firm_hessians, second_order_check
from .market_model import Market
from .markup_maps import DEFAULT_EPS_P, Kind, MarketDead, PricePoint, ResidualSystem
from .mixed_logit import SampleSet, UtilityModel, reservation_order
from .newton_krylov import (
    EngineResult,
    Linearization,
    Status,
    TraceRecord,
    TrustRegionConfig,
    directional_derivative,
    preconditioned_tolerance,
    trust_region_solve,
)


class Method(str, Enum):
    ZETA_FPI = "zeta-fpi"
    ETA_FPI = "eta-fpi"
    CG_NM = "cg-nm"
    ETA_NM = "eta-nm"
    ZETA_NM = "zeta-nm"

    @property
    def kind(self) -> Kind:
        return {
            Method.ZETA_FPI: Kind.ZETA,
            Method.ZETA_NM: Kind.ZETA,
            Method.ETA_FPI: Kind.ETA,
            Method.ETA_NM: Kind.ETA,
            Method.CG_NM: Kind.COMBINED_GRADIENT,
        }[self]

    @property
    def is_newton(self) -> bool:
        return self in (Method.CG_NM, Method.ETA_NM, Method.ZETA_NM)

    @classmethod
    def parse(cls, name: str) -> "Method":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown method {name!r}; valid methods: {valid}") from None


@dataclass(frozen=True)
class SolverConfig:
    eps_T: float = 1e-6
    eps_P: float = DEFAULT_EPS_P
    max_iter: int | None = None  # None: 75 for Newton methods, 1000 for fixed points
    jacobian: str = "analytic"  # analytic, fd1, fd2 or fd4
    trust_region: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    extended: bool | None = None  # None: extend zeta whenever reservation prices are finite

    def __post_init__(self):
        if self.eps_T <= 0 or self.eps_P < 0:
            raise ValueError("eps_T must be positive and eps_P non-negative")
        if self.jacobian not in ("analytic", "fd1", "fd2", "fd4"):
            raise ValueError("jacobian must be analytic, fd1, fd2 or fd4")

    def iterations_for(self, method: Method) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return 75 if method.is_newton else 1000


@dataclass
class SolverRun:
    method: Method
    p_final: np.ndarray
    iterations: int
    trace: list
    status: Status
    fo_pass: bool
    so_pass: bool
    live_set: tuple
    fo_norm: float = float("nan")
    message: str = ""
    wall_time: float = 0.0
    extended: bool = False


def build_system(method: Method | str, market: Market, model: UtilityModel, samples: SampleSet, config: SolverConfig = SolverConfig()) -> ResidualSystem:
    method = Method.parse(method) if isinstance(method, str) else method
    extended = config.extended
    if extended is None:
        extended = method.kind is Kind.ZETA and model.finite_reservation
    return ResidualSystem(method.kind, market, model, samples, eps_P=config.eps_P, extended=bool(extended))


def truncate_live_set(ev: DemandEval, eps_P: float) -> np.ndarray:
    """Indices of products whose share exceeds eps_P."""
    live = np.flatnonzero(ev.P > eps_P)
    if live.size == 0:
        raise MarketDead("market dead: no product has a share above the truncation threshold")
    return live


# ---------------------------------------------------------------------------
# Post-run checks
# ---------------------------------------------------------------------------


def _second_order(pt: PricePoint) -> tuple[tuple[str, ...], bool]:
    market = pt.system.market
    live = pt.above_threshold
    if not np.any(live):
        return tuple("degenerate" for _ in range(market.F)), False
    hess = firm_hessians(pt.parts, market)
    result = second_order_check(hess, [live[b] for b in market.blocks])
    return result.per_firm, result.passed


def exclusion_report(system: ResidualSystem, p) -> dict[int, bool]:
    """For products priced at or above the top reservation price, whether dropping them is optimal.

    Exclusion is optimal when the owner's profit rises in that product's price
    just below the top reservation price, which is equivalent to a negative
    extended zeta residual there (the own-price share derivative is negative).
    """
    model, samples, market = system.model, system.samples, system.market
    if not model.finite_reservation:
        return {}
    order = reservation_order(model, samples)
    top = order.top
    gap = top - order.values[-2] if order.values.size > 1 else top
    h = min(1e-6 * max(1.0, top), 0.5 * gap) if gap > 0 else 1e-6 * max(1.0, top)
    p = np.asarray(p, float)
    ext = system if system.extended else ResidualSystem(Kind.ZETA, market, model, samples, system.eps_P, extended=True)
    out = {}
    for k in np.flatnonzero(p >= top):
        q = p.copy()
        q[k] = top - h
        F = q - market.costs - ext.point(q).zeta_ext
        out[int(k)] = bool(F[k] < 0)
    return out


@dataclass
class VerificationReport:
    fo_norm: float
    fo_pass: bool
    residual_norms: dict
    so_status: tuple
    so_pass: bool
    live_set: tuple
    exclusion_optimal: dict

    @property
    def frozen(self) -> tuple:
        return tuple(self.exclusion_optimal)


def verify(run_or_prices, system: ResidualSystem, eps_T: float = 1e-6) -> VerificationReport:
    """Recompute first- and second-order conditions and all residual norms at a final price."""
    p = run_or_prices.p_final if isinstance(run_or_prices, SolverRun) else np.asarray(run_or_prices, float)
    pt = system.point(p)
    norms = {}
    for kind in Kind:
        other = ResidualSystem(kind, system.market, system.model, system.samples, system.eps_P, extended=False)
        try:
            opt = other.point(p)
            live = opt.live
            norms[kind.value] = float(np.max(np.abs(other.residual(opt, live)))) if np.any(live) else float("nan")
        except (ValueError, np.linalg.LinAlgError):
            norms[kind.value] = float("nan")
    so_status, so_pass = _second_order(pt)
    return VerificationReport(
        fo_norm=pt.fo_norm,
        fo_pass=pt.fo_norm <= eps_T,
        residual_norms=norms,
        so_status=so_status,
        so_pass=so_pass,
        live_set=tuple(int(j) for j in np.flatnonzero(pt.above_threshold)),
        exclusion_optimal=exclusion_report(system, p),
    )


def _finish(method, system, p, it, trace, status, msg, t0, eps_T) -> SolverRun:
    p = np.asarray(p, float)
    try:
        pt = system.point(p)
        fo = pt.fo_norm
        so_status, so_pass = _second_order(pt)
        live = tuple(int(j) for j in np.flatnonzero(pt.above_threshold))
    except (ValueError, np.linalg.LinAlgError):
        fo, so_pass, live = float("nan"), False, ()
    return SolverRun(
        method=method,
        p_final=p,
        iterations=it,
        trace=trace,
        status=status,
        fo_pass=bool(fo <= eps_T),
        so_pass=bool(so_pass),
        live_set=live,
        fo_norm=float(fo),
        message=msg,
        wall_time=time.perf_counter() - t0,
        extended=system.extended,
    )


# ---------------------------------------------------------------------------
# Fixed-point iterations
# ---------------------------------------------------------------------------


def _fixed_point(method: Method, system: ResidualSystem, p0, eps_T: float, max_iter: int, guard: float | None) -> SolverRun:
    t0 = time.perf_counter()
    p = np.array(p0, dtype=float)
    trace: list[TraceRecord] = []
    prev_step = 0.0
    it = 0
    while True:
        try:
            pt = system.point(p)
            live = pt.live
            if not np.any(live):
                raise MarketDead("market dead: no product has a share above the truncation threshold")
            F = system.residual(pt, live)
        except (ValueError, np.linalg.LinAlgError) as err:
            trace.append(TraceRecord(it, float("nan"), float("nan"), float("nan"), 0, prev_step, True))
            return _finish(method, system, p, it, trace, Status.NUMERICAL_FAILURE, str(err), t0, eps_T)
        trace.append(TraceRecord(it, float(np.linalg.norm(F)), pt.fo_norm, float("nan"), 0, prev_step, True))
        if not np.all(np.isfinite(F)):
            return _finish(method, system, p, it, trace, Status.NUMERICAL_FAILURE, "non-finite markup", t0, eps_T)
        if system.is_converged(pt, eps_T):
            return _finish(method, system, p, it, trace, Status.CONVERGED, "", t0, eps_T)
        if it >= max_iter:
            return _finish(method, system, p, it, trace, Status.MAX_ITERATIONS, "", t0, eps_T)
        # p_new = c + markup = p - F on live products; frozen products keep their price
        new = np.where(live, p - F, p)
        new = np.maximum(new, 0.0)
        prev_step = float(np.linalg.norm(new - p))
        p = new
        it += 1
        if guard is not None and np.max(np.abs(p)) > guard:
            trace.append(TraceRecord(it, float("nan"), float("nan"), float("nan"), 0, prev_step, True))
            return _finish(method, system, p, it, trace, Status.NUMERICAL_FAILURE, "iterates diverged", t0, eps_T)


def zeta_fpi(system: ResidualSystem, p0, eps_T: float = 1e-6, max_iter: int = 1000) -> SolverRun:
    """Iterate p <- c + zeta(p) on the live products."""
    if system.kind is not Kind.ZETA:
        raise ValueError("zeta_fpi needs a zeta residual system")
    return _fixed_point(Method.ZETA_FPI, system, p0, eps_T, max_iter, guard=None)


def eta_fpi(system: ResidualSystem, p0, eps_T: float = 1e-6, max_iter: int = 1000) -> SolverRun:
    """Iterate p <- c + eta(p); stops with a failure if prices blow up."""
    if system.kind is not Kind.ETA:
        raise ValueError("eta_fpi needs an eta residual system")
    p0 = np.asarray(p0, float)
    guard = 1e3 * (float(np.max(np.abs(system.market.costs))) + float(np.max(np.abs(p0))))
    return _fixed_point(Method.ETA_FPI, system, p0, eps_T, max_iter, guard=guard)


# ---------------------------------------------------------------------------
# Newton methods
# ---------------------------------------------------------------------------


class MarketNewtonProblem:
    """Adapts a ResidualSystem to the trust-region engine.

    The live set is fixed at each linearization; trial points reuse it so the
    merit function compared in the ratio test is the same function.
    """

    def __init__(self, system: ResidualSystem, eps_T: float, jacobian: str = "analytic", gmres_tol: float = 1e-4):
        self.system = system
        self.eps_T = eps_T
        self.jacobian = jacobian
        self.gmres_tol = gmres_tol
        self._cache: dict[bytes, PricePoint] = {}

    def point(self, x) -> PricePoint:
        x = np.asarray(x, float)
        key = x.tobytes()
        pt = self._cache.get(key)
        if pt is None:
            if len(self._cache) > 8:
                self._cache.clear()
            pt = self.system.point(x)
            self._cache[key] = pt
        return pt

    def _residual_on(self, live):
        def F(y):
            if np.any(y < 0):
                return np.full(y.size, np.nan)
            return self.system.residual(self.point(y), live)

        return F

    def linearize(self, x) -> Linearization:
        pt = self.point(x)
        live = pt.live
        if not np.any(live):
            raise MarketDead("market dead: no product has a share above the truncation threshold")
        F = self.system.residual(pt, live)
        if self.jacobian == "analytic":
            Jm = self.system.jacobian(pt, live)
            apply = lambda v, _J=Jm: _J @ v
        else:
            order = int(self.jacobian[2:])
            Fl = self._residual_on(live)
            x0 = pt.p.copy()

            def apply(v, _F=Fl, _x=x0, _F0=F, _live=live, _order=order):
                vl = np.where(_live, v, 0.0)
                out = directional_derivative(_F, _x, vl, _order, F0=_F0) if np.any(vl) else np.zeros_like(v)
                return np.where(_live, out, v)

        lin = Linearization(F=F, apply_A=apply)
        lin.live = live  # type: ignore[attr-defined]
        if self.system.kind is Kind.COMBINED_GRADIENT:
            lam = pt.demand.lam
            if np.any(lam[live] == 0):
                raise ZeroDivisionError("zero own-price derivative on the live set")
            lin.scale = np.where(live, 1.0 / np.where(live, lam, 1.0), 1.0)
            lin.tol = preconditioned_tolerance(F[live], lam[live], self.gmres_tol)
        return lin

    def trial_residual(self, x, base) -> np.ndarray:
        return self._residual_on(base.live)(np.asarray(x, float))

    def converged(self, x, F) -> bool:
        return self.system.is_converged(self.point(x), self.eps_T)

    def stationarity(self, x) -> float:
        return self.point(x).fo_norm


def newton_solve(system: ResidualSystem, p0, config: SolverConfig = SolverConfig(), method: Method | None = None) -> SolverRun:
    """Trust-region hookstep Newton on the system's residual."""
    t0 = time.perf_counter()
    if method is None:
        method = {Kind.ZETA: Method.ZETA_NM, Kind.ETA: Method.ETA_NM, Kind.COMBINED_GRADIENT: Method.CG_NM}[system.kind]
    tr = replace(config.trust_region, max_iter=config.iterations_for(method))
    problem = MarketNewtonProblem(system, config.eps_T, config.jacobian, tr.gmres_tol)
    result: EngineResult = trust_region_solve(problem, np.asarray(p0, float), tr)
    run = _finish(method, system, result.x, result.iterations, result.trace, result.status, result.message, t0, config.eps_T)
    return run


# ---------------------------------------------------------------------------
# Starting points and the single entry point
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitStrategy:
    """Starting prices: ``costs``, ``cost-box`` (uniform on [min c, max c]^J) or ``box`` (uniform on [lo, hi]^J)."""

    kind: str = "costs"
    lo: float = 0.0
    hi: float = 19.0

    def __post_init__(self):
        if self.kind not in ("costs", "cost-box", "box"):
            raise ValueError("init must be costs, cost-box or box[:lo:hi]")
        if self.kind == "box" and not (0 <= self.lo < self.hi):
            raise ValueError("box init needs 0 <= lo < hi")

    @classmethod
    def parse(cls, text: str) -> "InitStrategy":
        parts = text.strip().split(":")
        if parts[0] == "box" and len(parts) == 3:
            return cls("box", float(parts[1]), float(parts[2]))
        if len(parts) != 1:
            raise ValueError(f"cannot parse init strategy {text!r}")
        return cls(parts[0])

    @property
    def label(self) -> str:
        return f"box:{self.lo:g}:{self.hi:g}" if self.kind == "box" else self.kind

    def generate(self, market: Market, seed: int = 0) -> np.ndarray:
        if self.kind == "costs":
            return market.costs.copy()
        rng = np.random.Generator(np.random.PCG64(seed))
        lo, hi = (float(market.costs.min()), float(market.costs.max())) if self.kind == "cost-box" else (self.lo, self.hi)
        return rng.uniform(lo, hi, market.J)


def solve(method: Method | str, market: Market, model: UtilityModel, samples: SampleSet, p0, config: SolverConfig = SolverConfig()) -> SolverRun:
    method = Method.parse(method) if isinstance(method, str) else method
    system = build_system(method, market, model, samples, config)
    if method is Method.ZETA_FPI:
        return zeta_fpi(system, p0, config.eps_T, config.iterations_for(method))
    if method is Method.ETA_FPI:
        return eta_fpi(system, p0, config.eps_T, config.iterations_for(method))
    return newton_solve(system, p0, config, method)
