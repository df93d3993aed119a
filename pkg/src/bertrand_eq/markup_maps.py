"""Markup maps and the three equivalent residual systems.

Stationary prices are the common zeros of

* the combined gradient ``F_pi(p)``,
* the BLP-style markup residual ``F_eta(p) = p - c - eta(p)``, and
* the zeta markup residual ``F_zeta(p) = p - c - zeta(p)``,

linked by ``F_pi = Lam F_zeta = DP_tilde^T F_eta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.linalg

from .demand_calculus import (
    DemandEval,
    HessianParts,
    _masked_product,
    combined_gradient,
    demand_eval,
    hessian_parts,
    sample_profits,
)
from .market_model import Market, validate_prices
from .mixed_logit import LogitMatrix, SampleSet, UtilityModel, logit_eval, reservation_order


DEFAULT_EPS_P = 1e-10
# Half a unit of annual US light-vehicle sales (about 17 million) as a share;
# the natural threshold when shares describe that market.
VEHICLE_MARKET_EPS_P = 3e-8


class Kind(str, Enum):
    COMBINED_GRADIENT = "cg"
    ETA = "eta"
    ZETA = "zeta"


# ---------------------------------------------------------------------------
# eta: per-firm solves of (I - Omega_f) eta_f = -Lam_f^-1 P_f
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EtaFactors:
    """Householder QR of I - Omega_f for each firm, restricted to live products."""

    blocks: tuple  # tuple of (index array, Q, R)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply the block inverse to ``rhs`` (vector or matrix with J rows)."""
        out = np.full(rhs.shape, np.nan)
        for idx, Q, R in self.blocks:
            out[idx] = scipy.linalg.solve_triangular(R, Q.T @ rhs[idx])
        return out


def eta_factors(ev: DemandEval, market: Market, live=None) -> EtaFactors:
    live = ~ev.dead if live is None else np.asarray(live, bool)
    blocks = []
    for block in market.blocks:
        idx = block[live[block]]
        if idx.size == 0:
            continue
        M = np.eye(idx.size) - ev.omega_tilde[np.ix_(idx, idx)]
        Q, R = scipy.linalg.qr(M)
        if np.any(np.abs(np.diag(R)) <= 1e-14 * max(1.0, np.abs(R).max())):
            raise np.linalg.LinAlgError("singular markup system; the truncation threshold is too small")
        blocks.append((idx, Q, R))
    return EtaFactors(tuple(blocks))


def eta(ev: DemandEval, market: Market, p=None, live=None, factors: EtaFactors | None = None) -> np.ndarray:
    """BLP-style markups; entries for products outside ``live`` are NaN."""
    live = ~ev.dead if live is None else np.asarray(live, bool)
    if factors is None:
        factors = eta_factors(ev, market, live)
    rhs = np.full(ev.J, np.nan)
    ok = live & (ev.lam != 0)
    rhs[ok] = -ev.P[ok] / ev.lam[ok]
    return factors.solve(rhs)


# ---------------------------------------------------------------------------
# zeta
# ---------------------------------------------------------------------------


def zeta(ev: DemandEval, market: Market, p, live=None) -> np.ndarray:
    """zeta = Omega_tilde (p - c) - Lam^-1 P; NaN outside ``live``."""
    p = validate_prices(market, p)
    live = ~ev.dead if live is None else np.asarray(live, bool)
    m = p - market.costs
    out = np.full(ev.J, np.nan)
    ok = live & (ev.lam != 0)
    out[ok] = (ev.omega_tilde @ m)[ok] - ev.P[ok] / ev.lam[ok]
    return out


@dataclass(frozen=True)
class ScaledColumns:
    """Per-product rescaling of draw weights P_k(s) -> P_k(s) / max_s P_k(s).

    Every term in zeta_k and in its gradient is an average of P_k(s) times
    something, divided by lam_k, so the common factor cancels. Working with
    rescaled weights keeps products with underflowing shares well defined.
    """

    Lhat: np.ndarray
    has_buyer: np.ndarray  # some draw can buy product k at its price


def scaled_columns(L: LogitMatrix) -> ScaledColumns:
    top = np.max(L.logL, axis=0)
    has = np.isfinite(top)
    shift = np.where(has, top, 0.0)
    Lhat = np.where(np.isfinite(L.logL), np.exp(np.where(np.isfinite(L.logL), L.logL, 0.0) - shift[None, :]), 0.0)
    return ScaledColumns(Lhat, has)


def _zeta_from_scaled(L: LogitMatrix, sc: ScaledColumns, pi_col: np.ndarray) -> np.ndarray:
    Vhat = _masked_product(sc.Lhat, L.D)
    lam_hat = Vhat.mean(axis=0)
    num = (_masked_product(Vhat, pi_col) - sc.Lhat).mean(axis=0)
    out = np.full(L.L.shape[1], np.nan)
    ok = lam_hat != 0
    out[ok] = num[ok] / lam_hat[ok]
    return out


def zeta_extended(model: UtilityModel, samples: SampleSet, market: Market, p, L: LogitMatrix | None = None) -> np.ndarray:
    """zeta extended past the largest reservation price.

    For a product priced at or above every draw's reservation price the value
    is the limit from below: the owner's Logit profit on its other products
    for the draw with the highest reservation price.
    """
    if not model.finite_reservation:
        raise ValueError("the extended zeta map needs finite reservation prices")
    p = validate_prices(market, p)
    if L is None:
        L = logit_eval(model, samples, market, p)
    sc = scaled_columns(L)
    pi = sample_profits(L, market, p)
    pi_col = pi[:, market.owner]
    out = _zeta_from_scaled(L, sc, pi_col)
    beyond = ~sc.has_buyer
    if np.any(beyond):
        top = reservation_order(model, samples).top_index
        out[beyond] = pi_col[top, beyond]
    return out


# ---------------------------------------------------------------------------
# Jacobians
# ---------------------------------------------------------------------------


def zeta_jacobian(L: LogitMatrix, market: Market, p, zeta_values: np.ndarray, top_index: int | None = None) -> np.ndarray:
    """(D zeta)[k, l] = d zeta_k / d p_l for every product with a possible buyer.

    Rows of products nobody can buy are filled with the derivative of the
    extension value when ``top_index`` is given, and left NaN otherwise.
    """
    p = validate_prices(market, p)
    S = L.S
    m = p - market.costs
    same = market.same_firm
    sc = scaled_columns(L)
    V = _masked_product(L.L, L.D)
    Vhat = _masked_product(sc.Lhat, L.D)
    pi_col = sample_profits(L, market, p)[:, market.owner]
    lam_hat = Vhat.sum(axis=0) / S
    phi_hat = (Vhat.T @ V) / S
    psi_hat = (_masked_product(Vhat, pi_col).T @ V) / S
    gamma_hat = (sc.Lhat.T @ V) / S  # avg P_k P_l Dw_l, scaled in k
    gamma_t_hat = (Vhat.T @ L.L) / S  # avg P_l P_k Dw_k, scaled in k
    curv_hat = _masked_product(sc.Lhat, L.D2) + _masked_product(Vhat, L.D)
    z = np.where(np.isfinite(zeta_values), zeta_values, 0.0)
    diag_term = (_masked_product(curv_hat, pi_col - z[None, :])).sum(axis=0) / S - lam_hat
    bracket = (
        np.diag(diag_term)
        + z[:, None] * phi_hat
        + gamma_hat
        + np.where(same, phi_hat * m[None, :] + gamma_t_hat, 0.0)
        - 2.0 * psi_hat
    )
    out = np.full(bracket.shape, np.nan)
    ok = lam_hat != 0
    out[ok] = bracket[ok] / lam_hat[ok, None]
    beyond = ~sc.has_buyer
    if top_index is not None and np.any(beyond):
        s = top_index
        P, D = L.L[s], L.D[s]
        for k in np.flatnonzero(beyond):
            f_mask = same[k]
            pi_f = pi_col[s, k]
            row = _masked_product(D, P) * (np.where(f_mask, m, 0.0) - pi_f) + np.where(f_mask, P, 0.0)
            out[k] = row
    return out


def eta_jacobian(L: LogitMatrix, ev: DemandEval, market: Market, eta_values: np.ndarray, factors: EtaFactors, live) -> np.ndarray:
    """(D eta) from DP_tilde^T (D eta) = -(A + DP), with A[k,l] = sum_j D_l D_k P_j eta_j."""
    S = L.S
    live = np.asarray(live, bool)
    same = market.same_firm
    eta0 = np.where(live & np.isfinite(eta_values), eta_values, 0.0)
    V = _masked_product(L.L, L.D)
    E = (L.L * eta0[None, :]) @ market.ownership  # S x F
    E_col = E[:, market.owner]
    phi = (V.T @ V) / S
    psi_e = (_masked_product(V, E_col).T @ V) / S
    curv = _masked_product(L.L, L.D2) + _masked_product(V, L.D)
    diag_term = (curv * (eta0[None, :] - E_col)).sum(axis=0) / S
    A = np.diag(diag_term) - eta0[:, None] * phi - np.where(same, phi * eta0[None, :], 0.0) + 2.0 * psi_e
    gamma = ev.gamma_full if ev.gamma_full is not None else (L.L.T @ V) / S
    DP = np.diag(ev.lam) - gamma
    rhs = np.zeros_like(A)
    ok = live & (ev.lam != 0)
    rhs[ok] = -(A[ok] + DP[ok]) / ev.lam[ok, None]
    return factors.solve(rhs)


# ---------------------------------------------------------------------------
# Residual systems
# ---------------------------------------------------------------------------


class MarketDead(ValueError):
    """No product has a share above the truncation threshold."""


class PricePoint:
    """Everything a solver needs at one price vector, computed lazily."""

    def __init__(self, system: "ResidualSystem", p):
        self.system = system
        self.p = validate_prices(system.market, p)

    @cached_property
    def logit(self) -> LogitMatrix:
        s = self.system
        return logit_eval(s.model, s.samples, s.market, self.p)

    @cached_property
    def demand(self) -> DemandEval:
        return demand_eval(self.logit, self.system.market, self.p, want_full_gamma=True)

    @cached_property
    def grad(self) -> np.ndarray:
        return combined_gradient(self.demand, self.system.market, self.p)

    @cached_property
    def live(self) -> np.ndarray:
        if self.system.extended:
            return np.ones(self.p.size, dtype=bool)
        return self.demand.P > self.system.eps_P

    @cached_property
    def above_threshold(self) -> np.ndarray:
        return self.demand.P > self.system.eps_P

    @cached_property
    def parts(self) -> HessianParts:
        return hessian_parts(self.logit, self.demand, self.system.market, self.p)

    def eta_with(self, live) -> tuple[np.ndarray, EtaFactors]:
        key = tuple(np.flatnonzero(live))
        cache = self.__dict__.setdefault("_eta_cache", {})
        if key not in cache:
            factors = eta_factors(self.demand, self.system.market, live)
            cache[key] = (eta(self.demand, self.system.market, self.p, live, factors), factors)
        return cache[key]

    def zeta_with(self, live) -> np.ndarray:
        s = self.system
        if s.extended:
            return self.zeta_ext
        return zeta(self.demand, s.market, self.p, live)

    @cached_property
    def zeta_ext(self) -> np.ndarray:
        s = self.system
        return zeta_extended(s.model, s.samples, s.market, self.p, self.logit)

    @property
    def fo_norm(self) -> float:
        return float(np.max(np.abs(self.grad)))


def _masked_jacobian(Jm: np.ndarray, live: np.ndarray) -> np.ndarray:
    out = np.where(live[:, None] & live[None, :], Jm, 0.0)
    dead = np.flatnonzero(~live)
    out[dead, dead] = 1.0
    return out


@dataclass
class ResidualSystem:
    kind: Kind
    market: Market
    model: UtilityModel
    samples: SampleSet
    eps_P: float = DEFAULT_EPS_P
    extended: bool = False
    _top: int | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.kind = Kind(self.kind)
        if self.eps_P < 0:
            raise ValueError("eps_P must be non-negative")
        if self.extended:
            if self.kind is not Kind.ZETA:
                raise ValueError("only the zeta residual has an extended form")
            if not self.model.finite_reservation:
                raise ValueError("the extended zeta map needs finite reservation prices on every draw")
            self._top = reservation_order(self.model, self.samples).top_index

    def point(self, p) -> PricePoint:
        return PricePoint(self, p)

    def _point(self, p_or_point) -> PricePoint:
        return p_or_point if isinstance(p_or_point, PricePoint) else self.point(p_or_point)

    def residual(self, p, live=None) -> np.ndarray:
        """Residual of this system's kind; components outside ``live`` are 0."""
        pt = self._point(p)
        live = pt.live if live is None else np.asarray(live, bool)
        m = pt.p - self.market.costs
        if self.kind is Kind.COMBINED_GRADIENT:
            F = pt.grad.copy()
        elif self.kind is Kind.ETA:
            F = m - pt.eta_with(live)[0]
        else:
            F = m - pt.zeta_with(live)
        return np.where(live, F, 0.0)

    def jacobian(self, p, live=None) -> np.ndarray:
        """Analytic residual Jacobian; identity rows and columns outside ``live``."""
        pt = self._point(p)
        live = pt.live if live is None else np.asarray(live, bool)
        J = self.market.J
        if self.kind is Kind.COMBINED_GRADIENT:
            Jm = pt.parts.cg_jacobian()
        elif self.kind is Kind.ETA:
            values, factors = pt.eta_with(live)
            Jm = np.eye(J) - eta_jacobian(pt.logit, pt.demand, self.market, values, factors, live)
        else:
            z = pt.zeta_with(live)
            Jm = np.eye(J) - zeta_jacobian(pt.logit, self.market, pt.p, z, self._top if self.extended else None)
        return _masked_jacobian(Jm, live)

    def is_converged(self, p, eps_T: float) -> bool:
        pt = self._point(p)
        if pt.fo_norm > eps_T:
            return False
        if not self.extended:
            return bool(np.any(pt.live))
        low = ~pt.above_threshold
        if not np.any(low):
            return True
        F = pt.p - self.market.costs - pt.zeta_ext
        return bool(np.max(np.abs(F[low])) <= eps_T)


def residual(system: ResidualSystem, p, live=None) -> np.ndarray:
    return system.residual(p, live)


def residual_jacobian(system: ResidualSystem, p, live=None) -> np.ndarray:
    return system.jacobian(p, live)
