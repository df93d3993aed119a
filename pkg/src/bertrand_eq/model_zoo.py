"""Scenario builders: the two vehicle-demand models, synthetic desk markets and small Logit examples.

A :class:`Scenario` bundles a market, a utility model and default sampling
settings, and round-trips through a single JSON document.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .market_model import Market
from .mixed_logit import BLP_INCOME_LOGMEAN, LinearUtility, LogIncomeUtility, SampleSet, UtilityModel

# 2.50 USD in 2005 is 1.27 USD in 1983; the operating-cost characteristic uses it.
FUEL_PRICE_1983 = 1.27

# Lognormal coefficient table of the linear-in-price model (alpha, beta_1..3).
BOYD80_LOGMEAN = (-7.96, 0.589, -1.75, -1.28)
BOYD80_LOGSTD = (1.18, 0.622, 1.34, 0.001)
BOYD80_SIGNS = (1.0, 1.0, -1.0)

# Normal coefficient table of the log-income model.
BLP95_ALPHA = 43.501
BLP95_BETA_MEAN = (-0.122, 3.460, 2.883)
BLP95_BETA_STD = (1.05, 2.056, 4.628)
BLP95_BETA0 = (-8.582, 1.794)


@dataclass(frozen=True)
class Scenario:
    name: str
    market: Market
    model: UtilityModel
    S: int = 500
    seed: int = 1
    metadata: dict = field(default_factory=dict)

    def samples(self, S: int | None = None, seed: int | None = None) -> SampleSet:
        return self.model.sample(self.S if S is None else S, self.seed if seed is None else seed)

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "model": {"type": _model_type(self.model), "params": self.model.params()},
                "S": self.S,
                "seed": self.seed,
                "products": self.market.to_records(),
                "metadata": self.metadata,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        doc = json.loads(text)
        for key in ("model", "products"):
            if key not in doc:
                raise ValueError(f"scenario file is missing {key!r}")
        return cls(
            name=str(doc.get("name", "scenario")),
            market=Market.from_records(doc["products"]),
            model=model_from_spec(doc["model"]),
            S=int(doc.get("S", 500)),
            seed=int(doc.get("seed", 1)),
            metadata=dict(doc.get("metadata", {})),
        )


def _model_type(model: UtilityModel) -> str:
    if isinstance(model, LogIncomeUtility):
        return "log-income"
    if isinstance(model, LinearUtility):
        return "linear"
    raise ValueError(f"cannot serialise model {type(model).__name__}")


def model_from_spec(spec: dict) -> UtilityModel:
    kind = spec.get("type")
    params = dict(spec.get("params", {}))
    tuples = ("beta_logmean", "beta_logstd", "signs", "beta_mean", "beta_std")
    for key in tuples:
        if key in params:
            params[key] = tuple(float(x) for x in params[key])
    if kind in ("linear", "boyd80"):
        return LinearUtility(**params) if kind == "linear" else boyd80_model()
    if kind in ("log-income", "blp95"):
        return LogIncomeUtility(**params) if kind == "log-income" else blp95_model()
    raise ValueError(f"unknown model type {kind!r}; expected linear or log-income")


# ---------------------------------------------------------------------------
# The two vehicle-demand models
# ---------------------------------------------------------------------------


def boyd80_model() -> LinearUtility:
    return LinearUtility(
        alpha_logmean=BOYD80_LOGMEAN[0],
        alpha_logstd=BOYD80_LOGSTD[0],
        beta_logmean=BOYD80_LOGMEAN[1:],
        beta_logstd=BOYD80_LOGSTD[1:],
        signs=BOYD80_SIGNS,
        name="boyd80",
    )


def blp95_model(income_logmean: float = BLP_INCOME_LOGMEAN) -> LogIncomeUtility:
    return LogIncomeUtility(
        alpha=BLP95_ALPHA,
        income_logmean=income_logmean,
        income_logstd=1.0,
        beta_mean=BLP95_BETA_MEAN,
        beta_std=BLP95_BETA_STD,
        beta0_mean=BLP95_BETA0[0],
        beta0_std=BLP95_BETA0[1],
        name="blp95",
    )


def boyd80(S: int, seed: int, products: Market | None = None):
    """Linear-in-price model with no outside good; prices in 1980 USD."""
    model = boyd80_model()
    return model, model.sample(S, seed)


def blp95(S: int, seed: int, products: Market | None = None, income_logmean_choice: str = "thousands"):
    """Log-income model; prices, costs and income in thousands of 1983 USD.

    ``income_logmean_choice="dollars"`` uses log-mean 10 with prices in
    dollars. Income minus price then scales by 1000 and the log shift cancels
    against the outside good, so both choices describe the same demand.
    """
    if income_logmean_choice == "thousands":
        model = blp95_model(BLP_INCOME_LOGMEAN)
    elif income_logmean_choice == "dollars":
        model = blp95_model(10.0)
    else:
        raise ValueError("income_logmean_choice must be 'thousands' or 'dollars'")
    return model, model.sample(S, seed)


# ---------------------------------------------------------------------------
# Synthetic products
# ---------------------------------------------------------------------------

# Uniform boxes for each characteristic and for unit costs.
BLP_BOXES = {
    "operating cost (10 mi per USD)": (1.5, 3.0),
    "hp per 10 lb": (0.30, 0.60),
    "length x width (100 in^2)": (1.10, 1.60),
}
BLP_COST_BOX = (4.0, 9.0)
BOYD_BOXES = {
    "size (100 in)": (2.0, 2.8),
    "acceleration (60 / seconds)": (4.0, 8.0),
    "fuel consumption (100 gal/mi)": (3.0, 6.0),
}
BOYD_COST_BOX = (4000.0, 10000.0)


def synthetic_products(J: int, F: int, seed: int, model: str = "blp95") -> Market:
    """J products split into F contiguous firm blocks, characteristics and costs uniform in boxes."""
    if not (1 <= F <= J):
        raise ValueError("need 1 <= F <= J")
    boxes, cost_box = (BLP_BOXES, BLP_COST_BOX) if model == "blp95" else (BOYD_BOXES, BOYD_COST_BOX)
    rng = np.random.Generator(np.random.PCG64(seed))
    lo = np.array([b[0] for b in boxes.values()])
    hi = np.array([b[1] for b in boxes.values()])
    chars = lo + (hi - lo) * rng.random((J, len(boxes)))
    costs = cost_box[0] + (cost_box[1] - cost_box[0]) * rng.random(J)
    owner = np.concatenate([np.full(len(b), f) for f, b in enumerate(np.array_split(np.arange(J), F))])
    labels = tuple(f"product-{j + 1}" for j in range(J))
    return Market(owner=owner, costs=costs, characteristics=chars, labels=labels)


def desk_scenario(model: str = "blp95", J: int = 10, F: int = 3, S: int = 500, seed: int = 1, product_seed: int = 7) -> Scenario:
    market = synthetic_products(J, F, product_seed, model)
    if model == "blp95":
        meta = {"currency": "thousands of 1983 USD", "fuel_price": FUEL_PRICE_1983, "box_init": [0.0, 19.0]}
        return Scenario("blp95", market, blp95_model(), S, seed, meta)
    meta = {"currency": "1980 USD"}
    return Scenario("boyd80", market, boyd80_model(), S, seed, meta)


# ---------------------------------------------------------------------------
# Small Logit examples
# ---------------------------------------------------------------------------


def logit_monopoly_convexam(alpha: float, v, theta: float, cost: float = 1.0, name: str = "convexam") -> Scenario:
    """Single-firm simple Logit: u_j = -alpha p + v_j, outside utility theta, one draw."""
    v = np.atleast_1d(np.asarray(v, float))
    model = LinearUtility(math.log(alpha), 0.0, (0.0,), (0.0,), (1.0,), outside=float(theta), name=name)
    market = Market(owner=np.zeros(v.size, int), costs=np.full(v.size, float(cost)), characteristics=v[:, None])
    return Scenario(name, market, model, S=1, seed=0, metadata={"alpha": alpha, "v": v.tolist(), "theta": theta})


def convexam_spectral_radius(scenario: Scenario, p) -> float:
    """sum_j exp(u_j(p) - theta) for a simple Logit monopoly."""
    alpha = scenario.metadata["alpha"]
    v = np.asarray(scenario.metadata["v"], float)
    return float(np.sum(np.exp(-alpha * np.asarray(p, float) + v - scenario.metadata["theta"])))


def blp_vi_example(varsigma: float = 10.0, c: float = 1.0, v1: float = 0.0, v2: float = 0.0, alpha: float = 2.0, theta: float = 0.0) -> Scenario:
    """Two-product monopoly with u_j = alpha log(varsigma - p_j) + v_j and outside utility theta."""
    if not varsigma > c:
        raise ValueError("need varsigma > c")
    model = LogIncomeUtility(
        alpha=alpha,
        income_logmean=math.log(varsigma),
        income_logstd=0.0,
        beta_mean=(1.0,),
        beta_std=(0.0,),
        beta0_mean=theta - alpha * math.log(varsigma),
        beta0_std=0.0,
        name="viexample",
    )
    market = Market(owner=[0, 0], costs=[c, c], characteristics=[[v1], [v2]])
    meta = {"varsigma": varsigma, "alpha": alpha, "theta": theta}
    return Scenario("viexample", market, model, S=1, seed=0, metadata=meta)


def _convexam_with_radius(radius: float, name: str) -> Scenario:
    """Symmetric two-product monopoly (alpha = 1, c = 1, theta = 0) tuned so that
    sum_j exp(u_j(p*) - theta) equals ``radius``.

    The optimal markup of a one-draw Logit monopoly is (1 + radius) / alpha, so
    p* = 2 + radius and v = p* + log(radius / 2) puts the radius exactly there.
    """
    p_star = 2.0 + radius
    v = p_star + math.log(radius / 2.0)
    return logit_monopoly_convexam(1.0, [v, v], 0.0, 1.0, name)


PRESETS: dict[str, Callable[[], Scenario]] = {
    "blp95": lambda: desk_scenario("blp95"),
    "boyd80": lambda: desk_scenario("boyd80"),
    "convexam-strong-outside": lambda: _convexam_with_radius(0.3, "convexam-strong-outside"),
    "convexam-weak-outside": lambda: _convexam_with_radius(3.0, "convexam-weak-outside"),
    "convexam-single": lambda: logit_monopoly_convexam(1.0, [1.0], 0.0, 1.0, "convexam-single"),
    "viexample": lambda: blp_vi_example(),
}


def preset(name: str) -> Scenario:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


def load_scenario(ref: str) -> Scenario:
    """A preset name or a path to a scenario JSON file."""
    if ref in PRESETS:
        return preset(ref)
    path = Path(ref)
    if not path.exists():
        raise ValueError(f"{ref!r} is neither a preset ({', '.join(PRESETS)}) nor an existing file")
    return Scenario.from_json(path.read_text())
