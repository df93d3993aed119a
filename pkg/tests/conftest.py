import numpy as np
import pytest

from bertrand_eq.market_model import Market
from bertrand_eq.mixed_logit import LinearUtility, LogIncomeUtility

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def random_instance(rng, J=None, F=None, S=None, kind=None):
    """Small random market with either a linear or a log-income model.

    Linear instances without an outside good always have at least two firms,
    otherwise the monopolist's markup system is singular.
    """
    J = int(rng.integers(2, 7)) if J is None else J
    kind = kind or ("linear" if rng.random() < 0.5 else "log-income")
    outside = None
    if kind == "linear":
        outside = None if rng.random() < 0.5 else float(rng.normal())
    F_max = min(3, J)
    F_min = 2 if (kind == "linear" and outside is None) else 1
    F = int(rng.integers(F_min, F_max + 1)) if F is None else F
    S = int(rng.integers(20, 101)) if S is None else S
    owner = np.concatenate([np.arange(F), rng.integers(0, F, J - F)])
    rng.shuffle(owner)
    costs = rng.uniform(0.5, 2.0, J)
    chars = rng.uniform(0.0, 1.0, (J, 2))
    market = Market(owner=owner, costs=costs, characteristics=chars)
    if kind == "linear":
        model = LinearUtility(0.0, 0.4, (0.3, 0.1), (0.3, 0.3), (1.0, -1.0), outside=outside)
        p = costs + rng.uniform(0.2, 2.5, J)
    else:
        model = LogIncomeUtility(
            alpha=4.0,
            income_logmean=float(np.log(8.0)),
            income_logstd=0.4,
            beta_mean=(1.0, 0.5),
            beta_std=(0.5, 0.5),
            beta0_mean=-1.0,
            beta0_std=0.5,
        )
        p = costs + rng.uniform(0.2, 2.5, J)
    samples = model.sample(S, int(rng.integers(0, 2**31)))
    return market, model, samples, p


def central_jacobian(fun, p, rel_step=1e-5):
    """Central differences with step 1e-5 * max(1, |p_j|) per coordinate."""
    p = np.asarray(p, float)
    f0 = np.asarray(fun(p), float)
    out = np.zeros((f0.size, p.size))
    for j in range(p.size):
        h = rel_step * max(1.0, abs(p[j]))
        e = np.zeros_like(p)
        e[j] = h
        out[:, j] = (np.asarray(fun(p + e)) - np.asarray(fun(p - e))) / (2 * h)
    return out


def rel_err(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
