"""Utility models, consumer draws and per-draw Logit probabilities.

A finite-sample Mixed Logit model is a list of S consumer draws, each
carrying its own taste coefficients. Every market-level quantity downstream
is an equally weighted average over those draws.
"""

from __future__ import annotations

import csv
import io
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .market_model import Market, validate_prices

_STD_NORMAL = NormalDist()
_TWO53 = float(2**53)

# Income log-mean used by default for the BLP-style model, written as
# 10 - 3 log 10 (median income of about 22 thousand dollars).
BLP_INCOME_LOGMEAN = 10.0 - 3.0 * math.log(10.0)


def standard_normals(n_rows: int, n_cols: int, seed: int) -> np.ndarray:
    """Deterministic standard normal draws, shape ``(n_rows, n_cols)``.

    Uniforms come from numpy's PCG64 as 53-bit integers mapped to the open
    interval (0, 1); each uniform is pushed through the inverse normal CDF of
    :class:`statistics.NormalDist` (Wichura's AS241 rational approximation).
    Row ``s`` only depends on the first ``(s + 1) * n_cols`` integers of the
    stream, so growing S keeps earlier draws unchanged.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    ints = rng.integers(0, 2**53, size=(n_rows, n_cols), dtype=np.int64)
    u = (ints.astype(np.float64) + 0.5) / _TWO53
    inv = _STD_NORMAL.inv_cdf
    return np.array([[inv(x) for x in row] for row in u], dtype=float).reshape(n_rows, n_cols)


@dataclass(frozen=True)
class SampleSet:
    """S consumer draws; ``draws`` maps coefficient names to arrays with leading dim S."""

    draws: dict
    seed: int | None = None

    def __post_init__(self):
        sizes = {np.asarray(v).shape[0] for v in self.draws.values()}
        if len(sizes) != 1:
            raise ValueError("every coefficient needs the same number of draws")
        clean = {}
        for name, value in self.draws.items():
            arr = np.array(value, dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"draws for {name} are not finite")
            arr.setflags(write=False)
            clean[name] = arr
        object.__setattr__(self, "draws", clean)
        if self.S < 1:
            raise ValueError("need at least one draw")

    @property
    def S(self) -> int:
        return int(next(iter(self.draws.values())).shape[0])

    def __getitem__(self, name):
        return self.draws[name]

    def columns(self) -> list[tuple[str, np.ndarray]]:
        cols = []
        for name, arr in self.draws.items():
            if arr.ndim == 1:
                cols.append((name, arr))
            else:
                for k in range(arr.shape[1]):
                    cols.append((f"{name}_{k + 1}", arr[:, k]))
        return cols

    def to_csv(self) -> str:
        cols = self.columns()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([name for name, _ in cols])
        for s in range(self.S):
            writer.writerow([repr(float(arr[s])) for _, arr in cols])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int | None = None) -> "SampleSet":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], np.array([[float(x) for x in r] for r in rows[1:] if r])
        groups: dict[str, list[int]] = {}
        for i, name in enumerate(header):
            base, _, idx = name.rpartition("_")
            key = base if idx.isdigit() and base else name
            groups.setdefault(key, []).append(i)
        draws = {}
        for key, idx in groups.items():
            if len(idx) == 1 and header[idx[0]] == key:
                draws[key] = body[:, idx[0]]
            else:
                draws[key] = body[:, idx]
        return cls(draws, seed)


@dataclass(frozen=True)
class PriceTerms:
    """Price part of utility for every (draw, product) pair."""

    w: np.ndarray  # price utility where alive, undefined elsewhere
    dw: np.ndarray
    d2w: np.ndarray
    alive: np.ndarray  # p_j < reservation price of the draw


class UtilityModel(ABC):
    """Mixed Logit utility u = w(theta, p) + v(theta, x) with outside value theta0."""

    has_outside_good: bool = True
    finite_reservation: bool = False
    name: str = "abstract"

    @abstractmethod
    def sample(self, S: int, seed: int) -> SampleSet: ...

    @abstractmethod
    def price_terms(self, samples: SampleSet, p: np.ndarray) -> PriceTerms: ...

    @abstractmethod
    def nonprice_utility(self, samples: SampleSet, market: Market) -> np.ndarray: ...

    @abstractmethod
    def outside_utility(self, samples: SampleSet) -> np.ndarray: ...

    @abstractmethod
    def reservation_prices(self, samples: SampleSet) -> np.ndarray: ...

    def params(self) -> dict:
        return {}


def _lognormal(logmean, logstd, z):
    return np.exp(np.asarray(logmean, float) + np.asarray(logstd, float) * z)


@dataclass(frozen=True)
class LinearUtility(UtilityModel):
    """u = -alpha p + sum_k sign_k beta_k x_k with lognormal (alpha, beta).

    With ``outside=None`` there is no outside good and reservation prices are
    infinite. A finite ``outside`` gives every draw that outside utility,
    which is how the single-draw Logit examples are built.
    """

    alpha_logmean: float
    alpha_logstd: float
    beta_logmean: tuple = ()
    beta_logstd: tuple = ()
    signs: tuple = ()
    outside: float | None = None
    name: str = "linear"

    def __post_init__(self):
        K = len(self.beta_logmean)
        if len(self.beta_logstd) != K:
            raise ValueError("beta log-mean and log-std lengths differ")
        if self.alpha_logstd < 0 or any(s < 0 for s in self.beta_logstd):
            raise ValueError("standard deviations must be non-negative")
        if not self.signs:
            object.__setattr__(self, "signs", (1.0,) * K)
        if len(self.signs) != K:
            raise ValueError("need one sign per characteristic")

    @property
    def has_outside_good(self):  # type: ignore[override]
        return self.outside is not None

    def sample(self, S: int, seed: int) -> SampleSet:
        if S < 1:
            raise ValueError("S must be positive")
        K = len(self.beta_logmean)
        z = standard_normals(S, 1 + K, seed)
        alpha = _lognormal(self.alpha_logmean, self.alpha_logstd, z[:, 0])
        beta = _lognormal(self.beta_logmean, self.beta_logstd, z[:, 1:]) if K else np.zeros((S, 0))
        return SampleSet({"alpha": alpha, "beta": beta}, seed)

    def price_terms(self, samples, p):
        alpha = samples["alpha"][:, None]
        w = -alpha * p[None, :]
        dw = np.broadcast_to(-alpha, w.shape).copy()
        return PriceTerms(w, dw, np.zeros_like(w), np.ones(w.shape, dtype=bool))

    def nonprice_utility(self, samples, market):
        x = market.characteristics * np.asarray(self.signs, float)[None, :]
        return samples["beta"] @ x.T

    def outside_utility(self, samples):
        value = -np.inf if self.outside is None else float(self.outside)
        return np.full(samples.S, value)

    def reservation_prices(self, samples):
        return np.full(samples.S, np.inf)

    def params(self):
        return {
            "alpha_logmean": self.alpha_logmean,
            "alpha_logstd": self.alpha_logstd,
            "beta_logmean": list(self.beta_logmean),
            "beta_logstd": list(self.beta_logstd),
            "signs": list(self.signs),
            "outside": self.outside,
        }


@dataclass(frozen=True)
class LogIncomeUtility(UtilityModel):
    """u = alpha log(income - p) + beta'x, outside value alpha log(income) + beta0.

    Income is lognormal; beta and beta0 are independent normals. A draw
    cannot buy a product priced at or above its income.
    """

    alpha: float = 43.501
    income_logmean: float = BLP_INCOME_LOGMEAN
    income_logstd: float = 1.0
    beta_mean: tuple = (-0.122, 3.460, 2.883)
    beta_std: tuple = (1.05, 2.056, 4.628)
    beta0_mean: float = -8.582
    beta0_std: float = 1.794
    name: str = "log-income"
    finite_reservation: bool = True
    has_outside_good: bool = True

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError("the income coefficient alpha must exceed 1 for differentiable demand")
        if len(self.beta_mean) != len(self.beta_std):
            raise ValueError("beta mean and std lengths differ")
        if self.income_logstd < 0 or self.beta0_std < 0 or any(s < 0 for s in self.beta_std):
            raise ValueError("standard deviations must be non-negative")

    def sample(self, S: int, seed: int) -> SampleSet:
        if S < 1:
            raise ValueError("S must be positive")
        K = len(self.beta_mean)
        z = standard_normals(S, 2 + K, seed)
        income = _lognormal(self.income_logmean, self.income_logstd, z[:, 0])
        beta = np.asarray(self.beta_mean, float) + np.asarray(self.beta_std, float) * z[:, 1 : 1 + K]
        beta0 = self.beta0_mean + self.beta0_std * z[:, 1 + K]
        return SampleSet({"income": income, "beta": beta, "beta0": beta0}, seed)

    def price_terms(self, samples, p):
        income = samples["income"][:, None]
        gap = income - p[None, :]
        alive = gap > 0
        safe = np.where(alive, gap, 1.0)
        w = self.alpha * np.log(safe)
        dw = np.where(alive, -self.alpha / safe, 0.0)
        d2w = np.where(alive, -self.alpha / safe**2, 0.0)
        return PriceTerms(w, dw, d2w, alive)

    def nonprice_utility(self, samples, market):
        return samples["beta"] @ market.characteristics.T

    def outside_utility(self, samples):
        return self.alpha * np.log(samples["income"]) + samples["beta0"]

    def reservation_prices(self, samples):
        return np.asarray(samples["income"], float).copy()

    def params(self):
        return {
            "alpha": self.alpha,
            "income_logmean": self.income_logmean,
            "income_logstd": self.income_logstd,
            "beta_mean": list(self.beta_mean),
            "beta_std": list(self.beta_std),
            "beta0_mean": self.beta0_mean,
            "beta0_std": self.beta0_std,
        }


def sample(model: UtilityModel, S: int, seed: int) -> SampleSet:
    return model.sample(S, seed)


@dataclass(frozen=True)
class LogitMatrix:
    """Per-draw Logit probabilities and price-utility derivatives at one price vector."""

    L: np.ndarray  # S x J choice probabilities
    out: np.ndarray  # S outside-good probabilities
    D: np.ndarray  # S x J Dw, zero where the draw cannot buy
    D2: np.ndarray  # S x J second derivative of w, zero where dead
    logL: np.ndarray  # S x J log probabilities, -inf where dead
    alive: np.ndarray  # S x J, price below the draw's reservation price
    dead_rows: np.ndarray  # S, draws with every option at -inf utility
    utility: np.ndarray = field(repr=False, default=None)

    @property
    def S(self):
        return self.L.shape[0]


def _utilities(model: UtilityModel, samples: SampleSet, market: Market, p: np.ndarray):
    terms = model.price_terms(samples, p)
    v = model.nonprice_utility(samples, market)
    U = np.where(terms.alive, terms.w + v, -np.inf)
    return terms, U, model.outside_utility(samples)


def logit_eval(model: UtilityModel, samples: SampleSet, market: Market, p) -> LogitMatrix:
    """Logit choice probabilities for every draw at prices ``p``.

    Options with -inf utility are handled through an explicit mask, and each
    row is shifted by its largest finite utility before exponentiating.
    """
    p = validate_prices(market, p)
    terms, U, theta = _utilities(model, samples, market, p)
    alive = terms.alive
    outside_ok = np.isfinite(theta)
    row_max = np.max(np.where(alive, U, -np.inf), axis=1)
    row_max = np.maximum(row_max, np.where(outside_ok, theta, -np.inf))
    dead_rows = ~np.isfinite(row_max)
    shift = np.where(dead_rows, 0.0, row_max)
    expU = np.exp(np.where(alive, U - shift[:, None], -np.inf))
    expO = np.exp(np.where(outside_ok, theta - shift, -np.inf))
    denom = expO + expU.sum(axis=1)
    safe = np.where(dead_rows, 1.0, denom)
    L = expU / safe[:, None]
    out = expO / safe
    log_denom = np.log(safe) + shift
    logL = np.where(alive & ~dead_rows[:, None], U - log_denom[:, None], -np.inf)
    D = np.where(alive, terms.dw, 0.0)
    D2 = np.where(alive, terms.d2w, 0.0)
    return LogitMatrix(L=L, out=out, D=D, D2=D2, logL=logL, alive=alive, dead_rows=dead_rows, utility=U)


def inclusive_value(model: UtilityModel, samples: SampleSet, market: Market, p) -> float:
    """Sample average of log(exp(theta0) + sum_j exp(u_j))."""
    p = validate_prices(market, p)
    _, U, theta = _utilities(model, samples, market, p)
    stacked = np.concatenate([theta[:, None], U], axis=1)
    top = np.max(stacked, axis=1)
    if np.any(~np.isfinite(top)):
        return -np.inf
    lse = top + np.log(np.exp(stacked - top[:, None]).sum(axis=1))
    return float(lse.mean())


@dataclass(frozen=True)
class ReservationOrder:
    values: np.ndarray  # ascending reservation prices
    order: np.ndarray  # draw indices in that order (ties by draw index)
    top: float  # largest reservation price
    top_index: int  # draw attaining it (last in the stable order)
    has_ties: bool


def reservation_order(model: UtilityModel, samples: SampleSet) -> ReservationOrder:
    res = model.reservation_prices(samples)
    order = np.argsort(res, kind="stable")
    values = res[order]
    ties = bool(np.any(np.diff(values) == 0)) if values.size > 1 else False
    return ReservationOrder(values, order, float(values[-1]), int(order[-1]), ties)
