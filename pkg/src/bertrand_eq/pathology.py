"""Closed-form oracle: the field F(x) = x / (1 + ||x||^2).

Its only finite zero is the origin, yet ||F|| -> 0 as ||x|| -> infinity, so
every Newton globalization that trusts ||F|| is pulled outward once ||x|| > 1.
The helpers here give exact answers the engine is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .newton_krylov import EngineResult, Linearization, TrustRegionConfig, cauchy_step as _dense_cauchy, trust_region_solve

CONTRACTION_RADIUS = 1.0 / math.sqrt(3.0)


def field_eval(x) -> np.ndarray:
    x = np.asarray(x, float)
    return x / (1.0 + x @ x)


def jac_eval(x) -> np.ndarray:
    x = np.asarray(x, float)
    d = 1.0 + x @ x
    return (np.eye(x.size) - (2.0 / d) * np.outer(x, x)) / d


def exact_newton_point(x) -> np.ndarray:
    """x + s^N = -(2 r^2 / (1 - r^2)) x with r = ||x||."""
    x = np.asarray(x, float)
    r2 = float(x @ x)
    if abs(1.0 - r2) < 1e-14:
        raise ValueError("the Jacobian is singular on the unit sphere")
    return -(2.0 * r2 / (1.0 - r2)) * x


def newton_step(x) -> np.ndarray:
    return exact_newton_point(x) - np.asarray(x, float)


def newton_norm_map(r: float) -> float:
    """Norm of the Newton point as a function of the current norm."""
    return 2.0 * r**3 / abs(1.0 - r * r)


def cauchy_step(x) -> np.ndarray:
    x = np.asarray(x, float)
    return _dense_cauchy(field_eval(x), jac_eval(x))


def lm_step(x, mu: float) -> np.ndarray:
    """Levenberg-Marquardt step -(J^T J + mu I)^-1 J^T F."""
    x = np.asarray(x, float)
    Jm = jac_eval(x)
    return -np.linalg.solve(Jm.T @ Jm + mu * np.eye(x.size), Jm.T @ field_eval(x))


def zero_landing_step_length(x) -> float:
    """Step length t with x + t s^N = 0; its sign is that of (1 + r^2)/(1 - r^2)."""
    r2 = float(np.asarray(x, float) @ np.asarray(x, float))
    return (1.0 - r2) / (1.0 + r2)


@dataclass
class SimpleFieldProblem:
    """The field wrapped as a NewtonProblem; remembers every linearization point."""

    tol: float = 1e-12
    visited: list = field(default_factory=list)

    def linearize(self, x):
        x = np.asarray(x, float)
        self.visited.append(x.copy())
        Jm = jac_eval(x)
        return Linearization(F=field_eval(x), apply_A=lambda v: Jm @ v)

    def trial_residual(self, x, base):
        return field_eval(x)

    def converged(self, x, F):
        return float(np.linalg.norm(F)) <= self.tol

    def stationarity(self, x):
        return float(np.max(np.abs(field_eval(x))))


def run_engine(x0, pure_newton: bool, max_iter: int, delta0: float | None = None) -> tuple[EngineResult, list]:
    problem = SimpleFieldProblem()
    cfg = TrustRegionConfig(pure_newton=pure_newton, max_iter=max_iter, delta0=delta0)
    result = trust_region_solve(problem, np.asarray(x0, float), cfg)
    return result, problem.visited


def predicted_class(r0: float, tol: float = 1e-12) -> str:
    if abs(r0 - CONTRACTION_RADIUS) <= tol:
        return "sign-alternates"
    return "converges-to-zero" if r0 < CONTRACTION_RADIUS else "diverges"


def classify_iterates(iterates, window: int = 8, tol: float = 1e-6) -> str:
    """Label a pure-Newton iterate sequence by the behaviour of its norms.

    The oscillating orbit at r = 1/sqrt(3) is unstable (the norm map has slope
    4 there), so only the first ``window`` iterates are compared against it.
    """
    xs = [np.asarray(x, float) for x in iterates]
    norms = np.array([np.linalg.norm(x) for x in xs])
    head = min(window, len(xs) - 1)
    if head >= 2 and np.all(np.abs(norms[: head + 1] - norms[0]) <= tol):
        flips = all(np.allclose(xs[i + 1], -xs[i], atol=tol) for i in range(head))
        if flips:
            return "sign-alternates"
    if norms[-1] <= 1e-8 or (norms[-1] < norms[0] and norms[-1] < 1e-3):
        return "converges-to-zero"
    if np.all(np.diff(norms[: head + 1]) > 0):
        return "diverges"
    return "unclassified"


def contraction_threshold_check(x0, iterates) -> tuple[str, str, bool]:
    """(observed, predicted, match) for a pure-Newton run from x0."""
    observed = classify_iterates(iterates)
    predicted = predicted_class(float(np.linalg.norm(x0)))
    return observed, predicted, observed == predicted
