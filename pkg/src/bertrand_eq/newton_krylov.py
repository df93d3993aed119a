"""Matrix-free inexact Newton engine.

Pieces, bottom up:

* :func:`gmres` - GMRES with the Krylov basis stored as Householder
  reflectors and the least-squares problem updated with Givens rotations.
* :func:`hookstep` - Levenberg-Marquardt step restricted to the Krylov
  subspace, computed from the SVD of the small Hessenberg matrix.
* :func:`trust_region_solve` - the outer loop with the sufficient-decrease
  test, radius updates and per-iteration trace.
* :func:`directional_derivative` and :func:`preconditioned_tolerance` -
  Jacobian actions by finite differences, and the tolerance used when the
  combined-gradient system is scaled by its diagonal.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol

import numpy as np

EPS = float(np.finfo(float).eps)


# ---------------------------------------------------------------------------
# Householder GMRES
# ---------------------------------------------------------------------------


def _reflector(x: np.ndarray) -> tuple[np.ndarray, float]:
    """Unit v and alpha with (I - 2 v v^T) x = alpha e1, alpha = -sign(x0) ||x||."""
    norm = float(np.linalg.norm(x))
    sign = 1.0 if x[0] >= 0 else -1.0
    alpha = -sign * norm
    v = x.astype(float).copy()
    v[0] -= alpha
    vn = float(np.linalg.norm(v))
    if vn == 0.0:
        return np.zeros_like(v), alpha
    return v / vn, alpha


@dataclass
class KrylovState:
    """Krylov basis and Hessenberg matrix after ``n`` GMRES steps.

    ``reflectors[k]`` is a full-length unit vector (zero in its first ``k``
    entries). The Krylov basis is Q = P_1 ... P_{n+1} restricted to its
    first n (or n+1) columns. The right-hand side maps to ``beta * e1`` under
    ``Q^T``; for a Newton system ``A s = -F`` this gives ``beta = sign(F1) ||F||``.
    """

    N: int
    reflectors: list = field(default_factory=list)
    H: np.ndarray = field(default_factory=lambda: np.zeros((1, 0)))
    beta: float = 0.0
    givens: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    exact: bool = False
    _svd: tuple | None = field(default=None, repr=False)
    _model: tuple | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.H.shape[1]

    def apply_Q(self, z: np.ndarray) -> np.ndarray:
        """Q z for z of length <= N (zero padded): P_1 (P_2 (... z))."""
        out = np.zeros(self.N)
        out[: z.size] = z
        for v in reversed(self.reflectors):
            out -= 2.0 * v * (v @ out)
        return out

    def apply_QT(self, w: np.ndarray) -> np.ndarray:
        out = np.array(w, float)
        for v in self.reflectors:
            out -= 2.0 * v * (v @ out)
        return out

    def basis(self, columns: int | None = None) -> np.ndarray:
        k = self.n if columns is None else columns
        return np.column_stack([self.apply_Q(np.eye(1, self.N, i).ravel()) for i in range(k)]) if k else np.zeros((self.N, 0))

    def model(self) -> tuple[np.ndarray, np.ndarray]:
        """(B, g) with ||F + A Q q|| = ||B q - g||; (H, beta e1) unless replaced."""
        if self._model is None:
            return self.H, g_e1(self.beta, self.n + 1)
        return self._model

    def set_model(self, B: np.ndarray, g: np.ndarray) -> None:
        """Measure steps with another linear model over the same Krylov coefficients.

        Used when GMRES ran on a scaled system but the trust region measures
        the unscaled residual: B = A Q_n and g = -F.
        """
        self._model = (np.asarray(B, float), np.asarray(g, float))
        self._svd = None

    def svd(self):
        if self._svd is None:
            U, sig, Vt = np.linalg.svd(self.model()[0], full_matrices=False)
            self._svd = (U, sig, Vt)
        return self._svd

    def least_squares(self) -> np.ndarray:
        """Coefficients y minimizing ||H y - beta e1||."""
        if self.n == 0:
            return np.zeros(0)
        return np.linalg.lstsq(self.H, g_e1(self.beta, self.n + 1), rcond=None)[0]


def g_e1(beta: float, size: int) -> np.ndarray:
    g = np.zeros(size)
    g[0] = beta
    return g


@dataclass
class GmresResult:
    state: KrylovState
    y: np.ndarray
    relative_residual: float
    converged: bool

    def solution(self) -> np.ndarray:
        return self.state.apply_Q(self.y)


def gmres(apply_A: Callable[[np.ndarray], np.ndarray], b: np.ndarray, tol: float, max_dim: int) -> GmresResult:
    """Solve A x = b over Krylov subspaces until ||A x - b|| <= tol ||b||.

    No restarts; at ``max_dim`` the best subspace solution is returned with
    its achieved residual. A new Krylov direction whose norm falls below
    1e-14 ||b|| marks an exact (invariant-subspace) solution.
    """
    b = np.asarray(b, float)
    N = b.size
    bnorm = float(np.linalg.norm(b))
    state = KrylovState(N=N, H=np.zeros((1, 0)))
    if bnorm == 0.0:
        state.exact = True
        state.residual_history.append(0.0)
        return GmresResult(state, np.zeros(0), 0.0, True)
    max_dim = max(1, min(int(max_dim), N))
    v, alpha = _reflector(b)
    state.reflectors.append(v)
    state.beta = alpha
    state.residual_history.append(1.0)
    g = np.zeros(max_dim + 1)
    g[0] = alpha
    H = np.zeros((max_dim + 1, max_dim))
    R = np.zeros((max_dim + 1, max_dim))
    rel = 1.0
    n = 0
    for k in range(max_dim):
        q = state.apply_Q(np.eye(1, N, k).ravel())
        w = state.apply_QT(apply_A(q))
        tail = w[k + 1 :]
        tail_norm = float(np.linalg.norm(tail)) if tail.size else 0.0
        if tail.size and tail_norm >= 1e-14 * bnorm:
            vk, ak = _reflector(tail)
            full = np.zeros(N)
            full[k + 1 :] = vk
            state.reflectors.append(full)
            w = w.copy()
            w[k + 1] = ak
            w[k + 2 :] = 0.0
        else:
            w = w.copy()
            w[k + 1 :] = 0.0
            if tail.size:
                state.exact = True
        H[: k + 2, k] = w[: k + 2] if k + 2 <= N else np.append(w[: k + 1], 0.0)
        col = H[: k + 2, k].copy()
        for i, (c, s) in enumerate(state.givens):
            col[i], col[i + 1] = c * col[i] + s * col[i + 1], -s * col[i] + c * col[i + 1]
        a, bb = col[k], col[k + 1]
        r = math.hypot(a, bb)
        c, s = (1.0, 0.0) if r == 0.0 else (a / r, bb / r)
        state.givens.append((c, s))
        col[k], col[k + 1] = r, 0.0
        R[: k + 2, k] = col
        g[k], g[k + 1] = c * g[k], -s * g[k]
        n = k + 1
        rel = abs(g[k + 1]) / bnorm
        state.residual_history.append(rel)
        if rel <= tol or state.exact or n == N:
            break
    state.H = H[: n + 1, :n].copy()
    Rn = R[:n, :n]
    if np.all(np.abs(np.diag(Rn)) > 1e-300):
        y = np.zeros(n)
        for i in range(n - 1, -1, -1):
            y[i] = (g[i] - Rn[i, i + 1 :] @ y[i + 1 :]) / Rn[i, i]
    else:
        y = np.linalg.lstsq(state.H, g_e1(state.beta, n + 1), rcond=None)[0]
    if n == N or state.exact:
        rel = float(np.linalg.norm(apply_A(state.apply_Q(y)) - b)) / bnorm if n else rel
    return GmresResult(state, y, float(rel), bool(rel <= tol or state.exact))


# ---------------------------------------------------------------------------
# Hookstep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Hookstep:
    coefficients: np.ndarray  # step in the Krylov basis
    mu: float
    interior: bool  # the subspace Newton step fits inside the radius


def _hook_terms(state: KrylovState):
    U, sig, Vt = state.svd()
    c = U.T @ state.model()[1]  # U^T g; beta U[0, :] for the GMRES model
    keep = sig > 1e-14 * (sig[0] if sig.size else 0.0)
    return sig, c, Vt, keep


def hook_coefficients(state: KrylovState, mu: float) -> np.ndarray:
    """q(mu) = V (Sigma^2 + mu)^-1 Sigma U^T (beta e1); pseudo-inverse at mu = 0."""
    sig, c, Vt, keep = _hook_terms(state)
    denom = sig**2 + mu
    weights = np.zeros_like(sig)
    ok = keep if mu == 0.0 else denom > 0
    weights[ok] = sig[ok] * c[ok] / denom[ok]
    return Vt.T @ weights


def hookstep(state: KrylovState, delta: float) -> Hookstep:
    """Trust-region step of length <= delta in the Krylov subspace.

    Returns the subspace Newton step when it fits. Otherwise finds mu > 0 with
    ||q(mu)|| = delta by Newton's method on 1/||q(mu)|| - 1/delta, safeguarded
    by bisection on a bracket where the norm is known to straddle delta.
    """
    if delta <= 0:
        raise ValueError("trust radius must be positive")
    q0 = hook_coefficients(state, 0.0)
    if np.linalg.norm(q0) <= delta:
        return Hookstep(q0, 0.0, True)
    sig, c, Vt, _ = _hook_terms(state)
    sc2 = (sig * c) ** 2

    def norm_and_slope(mu):
        d = sig**2 + mu
        n2 = float(np.sum(sc2 / d**2))
        dn2 = float(-2.0 * np.sum(sc2 / d**3))
        nq = math.sqrt(n2)
        return nq, dn2 / (2.0 * nq) if nq > 0 else 0.0

    lo, hi = 0.0, float(np.sqrt(np.sum(sc2))) / delta
    mu = 0.5 * hi
    for _ in range(200):
        nq, dnq = norm_and_slope(mu)
        if abs(nq - delta) <= 1e-10 * delta:
            break
        if nq > delta:
            lo = mu
        else:
            hi = mu
        phi = 1.0 / nq - 1.0 / delta
        dphi = -dnq / nq**2
        step_ok = dphi > 0
        new = mu - phi / dphi if step_ok else None
        mu = new if (new is not None and lo < new < hi) else 0.5 * (lo + hi)
    q = hook_coefficients(state, mu)
    return Hookstep(q, float(mu), False)


def model_residual_norm(state: KrylovState, q: np.ndarray) -> float:
    """||F + A s|| for s = Q q, computed in the subspace as ||B q - g||."""
    B, g = state.model()
    return float(np.linalg.norm(B @ q - g))


# ---------------------------------------------------------------------------
# Finite differences and preconditioning
# ---------------------------------------------------------------------------


def fd_step(x: np.ndarray, s: np.ndarray, order: int) -> float:
    """eps^(1/(order+1)) max(1, ||x||) / ||s||; order 1 gives the usual sqrt(eps) rule."""
    exponent = {1: 0.5, 2: 1.0 / 3.0, 4: 0.2}[order]
    return EPS**exponent * max(1.0, float(np.linalg.norm(x))) / float(np.linalg.norm(s))


def directional_derivative(F: Callable, x: np.ndarray, s: np.ndarray, order: int = 1, F0: np.ndarray | None = None) -> np.ndarray:
    """Approximate (DF)(x) s with a forward (order 1) or central (2, 4) stencil."""
    if order not in (1, 2, 4):
        raise ValueError("order must be 1, 2 or 4")
    x = np.asarray(x, float)
    s = np.asarray(s, float)
    if not np.any(s):
        return np.zeros_like(np.asarray(F0 if F0 is not None else F(x), float))
    h = fd_step(x, s, order)
    if order == 1:
        base = F(x) if F0 is None else F0
        return (F(x + h * s) - base) / h
    if order == 2:
        return (F(x + h * s) - F(x - h * s)) / (2.0 * h)
    return (-F(x + 2 * h * s) + 8.0 * F(x + h * s) - 8.0 * F(x - h * s) + F(x - 2 * h * s)) / (12.0 * h)


def preconditioned_tolerance(grad: np.ndarray, lam: np.ndarray, delta: float) -> float:
    """GMRES tolerance for the Lam^-1 scaled system that implies ||F + A s|| <= delta ||F||."""
    grad = np.asarray(grad, float)
    lam = np.asarray(lam, float)
    if np.any(lam == 0):
        raise ZeroDivisionError("zero own-price derivative on the live set; truncate first")
    gnorm = float(np.linalg.norm(grad))
    if gnorm == 0:
        return float(delta)
    scaled = float(np.linalg.norm(grad / lam))
    return float(gnorm / (np.max(np.abs(lam)) * scaled) * delta)


# ---------------------------------------------------------------------------
# Trust-region driver
# ---------------------------------------------------------------------------


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    STEP_TOO_SMALL = "StepTooSmall"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class TrustRegionConfig:
    rho: float = 1e-4
    alpha: float = 2.0
    beta1: float = 0.5  # upper shrink factor
    beta2: float = 0.25  # lower shrink factor
    delta0: float | None = None  # None: max(1, ||x0||_inf) / 10
    delta_min: float = 1e-12
    gmres_tol: float = 1e-4
    max_krylov: int | None = None  # None: min(N, 50)
    max_iter: int = 75
    pure_newton: bool = False  # full GMRES solve, every step accepted

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (0, 1)")
        if not self.alpha > 1.0:
            raise ValueError("alpha must exceed 1")
        if not (0.0 < self.beta2 <= self.beta1 < 1.0):
            raise ValueError("shrink factors need 0 < beta2 <= beta1 < 1")
        if self.delta_min <= 0 or self.gmres_tol < 0 or self.max_iter < 0:
            raise ValueError("tolerances and limits must be positive")


@dataclass
class Linearization:
    """Residual at x and the action of its Jacobian.

    With ``scale`` set, GMRES works on ``diag(scale) A s = -diag(scale) F`` to
    tolerance ``tol``; the trust-region test still uses the unscaled residual.
    """

    F: np.ndarray
    apply_A: Callable[[np.ndarray], np.ndarray]
    scale: np.ndarray | None = None
    tol: float | None = None


class NewtonProblem(Protocol):
    def linearize(self, x: np.ndarray) -> Linearization: ...

    def trial_residual(self, x: np.ndarray, base: Linearization) -> np.ndarray: ...

    def converged(self, x: np.ndarray, F: np.ndarray) -> bool: ...

    def stationarity(self, x: np.ndarray) -> float: ...


@dataclass
class TraceRecord:
    iteration: int
    residual_norm: float
    fo_norm: float
    delta: float
    krylov_dim: int
    step_norm: float
    accepted: bool

    def as_row(self) -> dict:
        return {
            "iteration": self.iteration,
            "residual_norm": repr(float(self.residual_norm)),
            "fo_norm": repr(float(self.fo_norm)),
            "delta": repr(float(self.delta)),
            "krylov_dim": self.krylov_dim,
            "step_norm": repr(float(self.step_norm)),
            "accepted": int(self.accepted),
        }


@dataclass
class EngineResult:
    x: np.ndarray
    status: Status
    iterations: int
    trace: list
    message: str = ""
    wall_time: float = 0.0


def _shrink_factor(f0: float, slope: float, f1: float, lo: float, hi: float) -> float:
    """Minimizer of the quadratic through f(0), f'(0), f(1), clamped to [lo, hi]."""
    if not np.isfinite(f1):
        return lo
    curv = f1 - f0 - slope
    if curv <= 0:
        return lo
    return float(min(hi, max(lo, -slope / (2.0 * curv))))


def trust_region_solve(problem: NewtonProblem, x0, config: TrustRegionConfig = TrustRegionConfig()) -> EngineResult:
    """Globalized inexact Newton with hooksteps on the GMRES subspace.

    A trial step s is accepted when
    ``||F(x)||^2 - ||F(x+s)||^2 >= rho (||F(x)||^2 - ||F(x) + A s||^2)``.
    Accepted steps that reach the boundary double the radius; rejected steps
    shrink it by a quadratic-interpolation factor in ``[beta2, beta1]`` and
    re-solve the hookstep with the same Krylov factorization.
    """
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float)
    N = x.size
    delta = config.delta0 if config.delta0 is not None else max(1.0, float(np.max(np.abs(x)))) / 10.0
    max_dim = config.max_krylov if config.max_krylov is not None else min(N, 50)
    if config.pure_newton:
        max_dim = N
    trace: list[TraceRecord] = []

    def finish(status, it, msg=""):
        return EngineResult(x, status, it, trace, msg, time.perf_counter() - t0)

    try:
        lin = problem.linearize(x)
    except (ValueError, ZeroDivisionError, np.linalg.LinAlgError, FloatingPointError) as err:
        trace.append(TraceRecord(0, float("nan"), float("nan"), delta, 0, 0.0, True))
        return finish(Status.NUMERICAL_FAILURE, 0, str(err))
    fnorm = float(np.linalg.norm(lin.F))
    trace.append(TraceRecord(0, fnorm, problem.stationarity(x), delta, 0, 0.0, True))
    if not np.isfinite(fnorm):
        return finish(Status.NUMERICAL_FAILURE, 0, "non-finite residual at the initial point")

    it = 0
    while True:
        if problem.converged(x, lin.F):
            return finish(Status.CONVERGED, it)
        if it >= config.max_iter:
            return finish(Status.MAX_ITERATIONS, it)
        it += 1

        scale = lin.scale
        if scale is None:
            A, b = lin.apply_A, -lin.F
        else:
            A = (lambda v, _A=lin.apply_A, _s=scale: _s * _A(v))
            b = -scale * lin.F
        tol = 0.0 if config.pure_newton else (lin.tol if lin.tol is not None else config.gmres_tol)
        gm = gmres(A, b, tol, max_dim)
        state = gm.state
        if scale is not None and state.n:
            # A Q_n = diag(scale)^-1 Q_{n+1} H, so the unscaled model is exact in the subspace
            QH = state.basis(min(state.n + 1, N)) @ state.H[: min(state.n + 1, N)]
            state.set_model(QH / scale[:, None], -lin.F)

        if config.pure_newton:
            s = gm.solution()
            x = x + s
            try:
                lin = problem.linearize(x)
            except (ValueError, ZeroDivisionError, np.linalg.LinAlgError, FloatingPointError) as err:
                trace.append(TraceRecord(it, float("nan"), float("nan"), delta, state.n, float(np.linalg.norm(s)), True))
                return finish(Status.NUMERICAL_FAILURE, it, str(err))
            fnorm = float(np.linalg.norm(lin.F))
            trace.append(TraceRecord(it, fnorm, problem.stationarity(x), delta, state.n, float(np.linalg.norm(s)), True))
            if not np.isfinite(fnorm):
                return finish(Status.NUMERICAL_FAILURE, it, "non-finite residual")
            continue

        f0 = fnorm**2
        while True:
            hook = hookstep(state, delta)
            s = state.apply_Q(hook.coefficients)
            snorm = float(np.linalg.norm(s))
            if snorm <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
                trace.append(TraceRecord(it, fnorm, problem.stationarity(x), delta, state.n, snorm, False))
                return finish(Status.STEP_TOO_SMALL, it, "relative step too small")
            B, g = state.model()
            Bq = B @ hook.coefficients
            model = float(np.linalg.norm(Bq - g)) ** 2
            slope = -2.0 * float(g @ Bq)
            pred = f0 - model
            x_trial = x + s
            try:
                F_trial = problem.trial_residual(x_trial, lin)
            except (ValueError, ZeroDivisionError, np.linalg.LinAlgError, FloatingPointError):
                F_trial = np.full(N, np.nan)
            f1 = float(np.linalg.norm(F_trial)) ** 2 if np.all(np.isfinite(F_trial)) else float("inf")
            if pred > 0 and np.isfinite(f1) and f0 - f1 >= config.rho * pred:
                x = x_trial
                if snorm >= 0.99 * delta:
                    delta *= config.alpha
                try:
                    lin = problem.linearize(x)
                except (ValueError, ZeroDivisionError, np.linalg.LinAlgError, FloatingPointError) as err:
                    trace.append(TraceRecord(it, float("nan"), float("nan"), delta, state.n, snorm, True))
                    return finish(Status.NUMERICAL_FAILURE, it, str(err))
                fnorm = float(np.linalg.norm(lin.F))
                trace.append(TraceRecord(it, fnorm, problem.stationarity(x), delta, state.n, snorm, True))
                break
            factor = _shrink_factor(f0, slope, f1, config.beta2, config.beta1)
            delta = factor * min(delta, snorm)
            if delta < config.delta_min:
                trace.append(TraceRecord(it, fnorm, problem.stationarity(x), delta, state.n, snorm, False))
                return finish(Status.STEP_TOO_SMALL, it, "trust radius collapsed")


# ---------------------------------------------------------------------------
# Dense reference globalizations (used by the pathology oracles and tests)
# ---------------------------------------------------------------------------


def dogleg_step(F: np.ndarray, Jm: np.ndarray, delta: float) -> np.ndarray:
    """Powell dogleg on a dense Jacobian."""
    newton = np.linalg.solve(Jm, -F)
    if np.linalg.norm(newton) <= delta:
        return newton
    g = Jm.T @ F
    Jg = Jm @ g
    cauchy = -(g @ g) / (Jg @ Jg) * g
    cn = np.linalg.norm(cauchy)
    if cn >= delta:
        return cauchy * (delta / cn)
    d = newton - cauchy
    a, b, c = d @ d, 2 * cauchy @ d, cauchy @ cauchy - delta**2
    t = (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)
    return cauchy + t * d


def cauchy_step(F: np.ndarray, Jm: np.ndarray) -> np.ndarray:
    """Minimizer of ||F + Jm s||^2 along the steepest-descent direction -Jm^T F."""
    g = Jm.T @ F
    Jg = Jm @ g
    return -(g @ g) / (Jg @ Jg) * g


def backtracking_line_search(F: Callable, x: np.ndarray, s: np.ndarray, c1: float = 1e-4, shrink: float = 0.5, max_halvings: int = 60):
    """Armijo backtracking on 0.5 ||F||^2 along s; returns (step length, new x)."""
    f0 = 0.5 * float(np.linalg.norm(F(x))) ** 2
    t = 1.0
    for _ in range(max_halvings):
        xt = x + t * s
        ft = 0.5 * float(np.linalg.norm(F(xt))) ** 2
        if ft <= (1.0 - 2.0 * c1 * t) * f0:
            return t, xt
        t *= shrink
    return 0.0, x
