"""Bertrand-Nash equilibrium prices under finite-sample Mixed Logit demand."""

from .market_model import Market
from .markup_maps import Kind, ResidualSystem
from .mixed_logit import LinearUtility, LogIncomeUtility, SampleSet
from .model_zoo import Scenario, load_scenario, preset
from .newton_krylov import Status, TrustRegionConfig
from .solvers import InitStrategy, Method, SolverConfig, SolverRun, solve, verify

__all__ = [
    "InitStrategy",
    "Kind",
    "LinearUtility",
    "LogIncomeUtility",
    "Market",
    "Method",
    "ResidualSystem",
    "SampleSet",
    "Scenario",
    "SolverConfig",
    "SolverRun",
    "Status",
    "TrustRegionConfig",
    "load_scenario",
    "preset",
    "solve",
    "verify",
]
