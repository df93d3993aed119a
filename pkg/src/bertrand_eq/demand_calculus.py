"""Market shares, their price derivatives, profits and profit Hessians.

Notation in code follows the decomposition of the share Jacobian into a
diagonal part and a dense part: ``DP = diag(lam) - gamma`` where

    lam[k]      = avg_s  P_k(s) Dw_k(s)
    gamma[j, k] = avg_s  P_j(s) P_k(s) Dw_k(s)

and ``gamma_tilde`` keeps only same-owner entries. ``omega_tilde`` is
``diag(lam)^-1 gamma_tilde^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market_model import Market, validate_prices
from .mixed_logit import LogitMatrix, UtilityModel, SampleSet, logit_eval


def _masked_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise a*b that treats 0 * inf as 0 (dead options carry no weight)."""
    out = np.zeros(np.broadcast(a, b).shape)
    np.multiply(a, b, out=out, where=(a != 0) & (b != 0))
    return out


@dataclass(frozen=True)
class DemandEval:
    price: np.ndarray
    P: np.ndarray
    lam: np.ndarray
    gamma_tilde: np.ndarray
    omega_tilde: np.ndarray
    gamma_full: np.ndarray | None
    dead: np.ndarray  # products nobody can buy (P == 0)

    @property
    def J(self):
        return self.P.size

    def dP(self) -> np.ndarray:
        """Full share Jacobian, (DP)[k, l] = dP_k / dp_l."""
        if self.gamma_full is None:
            raise ValueError("full gamma was not requested")
        return np.diag(self.lam) - self.gamma_full

    def dP_tilde(self) -> np.ndarray:
        """Same-owner part of the share Jacobian (rows: shares, cols: prices)."""
        return np.diag(self.lam) - self.gamma_tilde


def demand_eval(L: LogitMatrix, market: Market, p, want_full_gamma: bool = False) -> DemandEval:
    p = validate_prices(market, p)
    S = L.S
    V = _masked_product(L.L, L.D)
    P = L.L.sum(axis=0) / S
    lam = V.sum(axis=0) / S
    gamma = (L.L.T @ V) / S
    gamma_tilde = np.where(market.same_firm, gamma, 0.0)
    if np.any((lam == 0) & (P > 0)):
        bad = [int(j) for j in np.flatnonzero((lam == 0) & (P > 0))]
        raise ValueError(f"zero own-price derivative with positive share for products {bad}")
    inv = np.zeros_like(lam)
    np.divide(1.0, lam, out=inv, where=lam != 0)
    omega = inv[:, None] * gamma_tilde.T
    return DemandEval(
        price=p,
        P=P,
        lam=lam,
        gamma_tilde=gamma_tilde,
        omega_tilde=omega,
        gamma_full=gamma if want_full_gamma else None,
        dead=P <= 0,
    )


def evaluate(model: UtilityModel, samples: SampleSet, market: Market, p, want_full_gamma=True):
    L = logit_eval(model, samples, market, p)
    return L, demand_eval(L, market, p, want_full_gamma)


def profits(ev: DemandEval, market: Market, p) -> np.ndarray:
    """Per-firm expected profit per consumer, sum over owned products of P_j (p_j - c_j)."""
    p = validate_prices(market, p)
    return (ev.P * (p - market.costs)) @ market.ownership


def combined_gradient(ev: DemandEval, market: Market, p) -> np.ndarray:
    """Own-firm profit derivatives stacked over products: (Lam - Gamma_tilde^T)(p - c) + P."""
    p = validate_prices(market, p)
    m = p - market.costs
    return ev.lam * m - ev.gamma_tilde.T @ m + ev.P


def sample_profits(L: LogitMatrix, market: Market, p) -> np.ndarray:
    """S x F matrix of Logit profits sum_{j in firm} P_j(s)(p_j - c_j) for each draw."""
    m = np.asarray(p, float) - market.costs
    return (L.L * m[None, :]) @ market.ownership


@dataclass(frozen=True)
class HessianParts:
    phi: np.ndarray
    psi: np.ndarray
    chi: np.ndarray
    xi: np.ndarray
    xi_tilde: np.ndarray
    gamma_full: np.ndarray

    def cg_jacobian(self) -> np.ndarray:
        """Jacobian of the combined gradient."""
        return self.xi + 2.0 * self.psi + self.xi_tilde.T


def hessian_parts(L: LogitMatrix, ev: DemandEval, market: Market, p) -> HessianParts:
    """Second-derivative building blocks, all as averages over draws.

    phi[k, l] = avg Dw_k P_k P_l Dw_l
    psi[k, l] = avg Dw_k P_k pi_f(k) P_l Dw_l       (pi_f: the draw's Logit profit)
    chi[k]    = avg (D2w_k + Dw_k^2) P_k ((p_k - c_k) - pi_f(k)) / 2
    xi        = Lam - Gamma - diag(p - c) phi + diag(chi)
    """
    p = validate_prices(market, p)
    S = L.S
    m = p - market.costs
    V = _masked_product(L.L, L.D)
    pi_col = sample_profits(L, market, p)[:, market.owner]
    phi = (V.T @ V) / S
    psi = ((V * pi_col).T @ V) / S
    curv = _masked_product(L.L, L.D2) + _masked_product(V, L.D)
    chi = 0.5 * (curv * (m[None, :] - pi_col)).sum(axis=0) / S
    gamma = ev.gamma_full if ev.gamma_full is not None else (L.L.T @ V) / S
    xi = np.diag(ev.lam + chi) - gamma - m[:, None] * phi
    xi_tilde = np.where(market.same_firm, xi, 0.0)
    return HessianParts(phi=phi, psi=psi, chi=chi, xi=xi, xi_tilde=xi_tilde, gamma_full=gamma)


def firm_hessians(parts: HessianParts, market: Market) -> list[np.ndarray]:
    """Each firm's profit Hessian in its own prices (exactly symmetric)."""
    out = []
    for block in market.blocks:
        ix = np.ix_(block, block)
        H = parts.xi[ix] + 2.0 * parts.psi[ix] + parts.xi[ix].T
        out.append(0.5 * (H + H.T))
    return out


@dataclass(frozen=True)
class SecondOrderResult:
    per_firm: tuple[str, ...]  # "pass", "fail" or "degenerate"

    @property
    def passed(self) -> bool:
        return all(s == "pass" for s in self.per_firm)


def second_order_check(hessians, live_blocks=None) -> SecondOrderResult:
    """A firm passes when Cholesky of -H succeeds on its live products."""
    status = []
    for f, H in enumerate(hessians):
        H = np.asarray(H, float)
        if live_blocks is not None:
            keep = np.asarray(live_blocks[f], bool)
            H = H[np.ix_(keep, keep)]
        if H.size == 0 or not np.any(H):
            status.append("degenerate")
            continue
        try:
            np.linalg.cholesky(-H)
            status.append("pass")
        except np.linalg.LinAlgError:
            status.append("fail")
    return SecondOrderResult(tuple(status))


def inf_norm_rows(A: np.ndarray) -> float:
    return float(np.max(np.abs(A).sum(axis=1))) if A.size else 0.0


@dataclass(frozen=True)
class BoundednessReport:
    max_lam_inv_P: float
    max_omega_norm: float
    max_omega_markup: float
    last_nonpositive_price: float | None
    probes: int


def diagnostics(model: UtilityModel, samples: SampleSet, market: Market, probes) -> BoundednessReport:
    """Sup over probe prices of the quantities that keep markups bounded.

    Tracks ``||Lam^-1 P||_inf``, ``||Omega_tilde||_inf`` and
    ``||Omega_tilde (p - c)||_inf`` over products that can still be sold, and
    the largest probe price at which some ``p_k - c_k - zeta_k(p) <= 0``.
    """
    lp, on, om = 0.0, 0.0, 0.0
    last = None
    count = 0
    for p in probes:
        p = validate_prices(market, p)
        L, ev = evaluate(model, samples, market, p, want_full_gamma=False)
        live = ev.lam != 0
        if not np.any(live):
            continue
        count += 1
        ratio = np.abs(ev.P[live] / ev.lam[live])
        lp = max(lp, float(ratio.max()))
        om_live = ev.omega_tilde[np.ix_(live, live)]
        on = max(on, inf_norm_rows(om_live))
        m = p - market.costs
        om = max(om, float(np.max(np.abs(om_live @ m[live]))))
        zeta = om_live @ m[live] - ev.P[live] / ev.lam[live]
        if np.any(m[live] - zeta <= 0):
            pmax = float(np.max(p))
            last = pmax if last is None else max(last, pmax)
    return BoundednessReport(lp, on, om, last, count)
