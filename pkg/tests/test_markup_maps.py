import math

import mpmath
import numpy as np
import pytest

from bertrand_eq.demand_calculus import combined_gradient, evaluate
from bertrand_eq.market_model import Market
from bertrand_eq.markup_maps import (
    Kind,
    MarketDead,
    ResidualSystem,
    eta,
    eta_factors,
    residual,
    residual_jacobian,
    zeta,
    zeta_extended,
)
from bertrand_eq.mixed_logit import LogIncomeUtility
from bertrand_eq.model_zoo import blp_vi_example, logit_monopoly_convexam, preset
from bertrand_eq.solvers import SolverConfig, solve

from conftest import central_jacobian, random_instance, rel_err


def test_single_product_eta_example():
    # v = alpha * p puts the share at exactly one half
    sc = logit_monopoly_convexam(2.0, [3.0], 0.0, cost=0.5)
    p = np.array([1.5])
    _, ev = evaluate(sc.model, sc.samples(), sc.market, p)
    assert ev.P[0] == pytest.approx(0.5, abs=1e-15)
    assert eta(ev, sc.market, p)[0] == pytest.approx(1.0, abs=1e-14)


def test_eta_against_direct_markup_solve():
    rng = np.random.default_rng(3)
    market, model, samples, p = random_instance(rng, J=4, F=2, S=50, kind="log-income")
    _, ev = evaluate(model, samples, market, p)
    # dense direct solve of  dP_tilde^T eta = -P  on each firm block
    want = np.empty(4)
    for block in market.blocks:
        ix = np.ix_(block, block)
        want[block] = np.linalg.solve(ev.dP_tilde().T[ix], -ev.P[block])
    assert np.allclose(eta(ev, market, p), want, rtol=1e-12, atol=0)


def test_eta_skips_dead_firm():
    model = LogIncomeUtility(alpha=2.0, income_logmean=math.log(10.0), income_logstd=0.0, beta_mean=(0.0,), beta_std=(0.0,), beta0_std=0.0)
    market = Market(owner=[0, 1], costs=[1.0, 1.0], characteristics=[[0.0], [0.0]])
    p = np.array([5.0, 12.0])
    _, ev = evaluate(model, model.sample(1, 0), market, p)
    live = ev.P > 0
    out = eta(ev, market, p, live)
    assert np.isfinite(out[0]) and out[0] > 0
    assert np.isnan(out[1])


@pytest.mark.parametrize("alpha,v,p", [(1.0, [0.5, 1.0], [2.0, 3.0]), (2.5, [1.0], [0.7]), (0.5, [0.0, 0.0, 1.0], [4.0, 1.0, 2.0])])
def test_simple_logit_zeta_is_profit_plus_inverse_alpha(alpha, v, p):
    sc = logit_monopoly_convexam(alpha, v, 0.0, cost=0.2)
    p = np.asarray(p)
    _, ev = evaluate(sc.model, sc.samples(), sc.market, p)
    profit = float(ev.P @ (p - sc.market.costs))
    assert np.allclose(zeta(ev, sc.market, p), profit + 1.0 / alpha, rtol=1e-13, atol=0)


def test_zeta_at_costs_is_positive_share_ratio():
    rng = np.random.default_rng(4)
    market, model, samples, _ = random_instance(rng, J=4, F=2, S=50, kind="log-income")
    _, ev = evaluate(model, samples, market, market.costs)
    z = zeta(ev, market, market.costs)
    assert np.all(z > 0)
    assert np.allclose(z, -ev.P / ev.lam, rtol=1e-14)


def vi_limit_oracle(varsigma, alpha, theta, v2, p2, c2):
    """Logit share of product 2 for the single draw once product 1 is priced out."""
    mpmath.mp.dps = 50
    u2 = alpha * mpmath.log(varsigma - p2) + v2
    share = mpmath.e**u2 / (mpmath.e**theta + mpmath.e**u2)
    return float(share * (p2 - c2))


def test_extended_zeta_limit_for_two_product_monopoly():
    sc = blp_vi_example(varsigma=10.0, c=1.0, alpha=2.0, theta=0.0)
    samples = sc.samples()
    for p1 in (10.0, 12.0):
        ext = zeta_extended(sc.model, samples, sc.market, [p1, 5.0])
        assert ext[0] == pytest.approx(vi_limit_oracle(10.0, 2.0, 0.0, 0.0, 5.0, 1.0), rel=1e-13)
    assert vi_limit_oracle(10.0, 2.0, 0.0, 0.0, 5.0, 1.0) == pytest.approx(100.0 / 26.0, rel=1e-14)


def test_extended_zeta_is_continuous_at_top_income():
    sc = blp_vi_example()
    samples = sc.samples()
    limit = zeta_extended(sc.model, samples, sc.market, [10.0, 6.0])[0]
    near = zeta_extended(sc.model, samples, sc.market, [10.0 - 1e-6, 6.0])[0]
    assert near == pytest.approx(limit, rel=1e-3)


def test_extended_zeta_single_product_limit_is_zero():
    model = LogIncomeUtility(alpha=2.0, income_logmean=math.log(10.0), income_logstd=0.0, beta_mean=(0.0,), beta_std=(0.0,), beta0_std=0.0)
    market = Market(owner=[0], costs=[1.0], characteristics=[[0.0]])
    system = ResidualSystem(Kind.ZETA, market, model, model.sample(1, 0), extended=True)
    assert zeta_extended(model, system.samples, market, [10.0])[0] == pytest.approx(0.0, abs=1e-12)
    assert zeta_extended(model, system.samples, market, [10.5])[0] == 0.0
    assert residual(system, [10.5])[0] == 9.5


def test_extended_zeta_matches_plain_zeta_below_top_income():
    sc = preset("blp95")
    samples = sc.samples(S=100, seed=2)
    p = sc.market.costs * 1.3
    _, ev = evaluate(sc.model, samples, sc.market, p)
    ext = zeta_extended(sc.model, samples, sc.market, p)
    assert np.allclose(ext, zeta(ev, sc.market, p), rtol=1e-10, atol=0)


def test_extended_mode_restrictions():
    sc = preset("boyd80")
    with pytest.raises(ValueError):
        ResidualSystem(Kind.ZETA, sc.market, sc.model, sc.samples(S=10), extended=True)
    blp = preset("blp95")
    with pytest.raises(ValueError):
        ResidualSystem(Kind.ETA, blp.market, blp.model, blp.samples(S=10), extended=True)


def test_dead_components_of_residual_are_zero():
    model = LogIncomeUtility(alpha=2.0, income_logmean=math.log(10.0), income_logstd=0.0, beta_mean=(0.0,), beta_std=(0.0,), beta0_std=0.0)
    market = Market(owner=[0, 1], costs=[1.0, 1.0], characteristics=[[0.0], [0.0]])
    for kind in Kind:
        system = ResidualSystem(kind, market, model, model.sample(1, 0))
        F = residual(system, [5.0, 12.0])
        assert F[1] == 0.0 and F[0] != 0.0
        Jm = residual_jacobian(system, [5.0, 12.0])
        assert Jm[1, 1] == 1.0 and Jm[0, 1] == 0.0 and Jm[1, 0] == 0.0


@pytest.mark.parametrize("kind", list(Kind))
@pytest.mark.parametrize("model_kind", ["linear", "log-income"])
def test_residual_jacobians_match_differences(kind, model_kind):
    rng = np.random.default_rng(21)
    market, model, samples, p = random_instance(rng, J=4, F=2, S=60, kind=model_kind)
    system = ResidualSystem(kind, market, model, samples, eps_P=0.0)
    live = system.point(p).live
    fd = central_jacobian(lambda q: residual(system, q, live), p)
    assert rel_err(residual_jacobian(system, p, live), fd) < 1e-5


def test_extended_zeta_jacobian_matches_differences_beyond_top_income():
    sc = blp_vi_example()
    system = ResidualSystem(Kind.ZETA, sc.market, sc.model, sc.samples(), extended=True)
    p = np.array([11.0, 5.0])
    fd = central_jacobian(lambda q: residual(system, q), p)
    assert rel_err(residual_jacobian(system, p), fd) < 1e-5


def test_logit_monopoly_optimum_has_identity_zeta_jacobian():
    sc = preset("convexam-strong-outside")
    p_star = np.full(2, 2.3)
    system = ResidualSystem(Kind.ZETA, sc.market, sc.model, sc.samples())
    assert np.max(np.abs(residual(system, p_star))) < 1e-12
    assert np.allclose(residual_jacobian(system, p_star), np.eye(2), atol=1e-12)


def test_stationary_identity_between_zeta_and_gradient_jacobians():
    sc = preset("blp95")
    samples = sc.samples(S=80, seed=3)
    run = solve("zeta-nm", sc.market, sc.model, samples, sc.market.costs, SolverConfig(eps_T=1e-13))
    assert run.fo_norm <= 1e-12
    p = run.p_final
    zsys = ResidualSystem(Kind.ZETA, sc.market, sc.model, samples)
    csys = ResidualSystem(Kind.COMBINED_GRADIENT, sc.market, sc.model, samples)
    lam = zsys.point(p).demand.lam
    lhs = residual_jacobian(zsys, p)
    rhs = residual_jacobian(csys, p) / lam[:, None]
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_residual_identities_on_random_instance():
    rng = np.random.default_rng(22)
    market, model, samples, p = random_instance(rng, J=5, F=2, S=40, kind="log-income")
    systems = {k: ResidualSystem(k, market, model, samples, eps_P=0.0) for k in Kind}
    pt = systems[Kind.ZETA].point(p)
    ev = pt.demand
    Fp = residual(systems[Kind.COMBINED_GRADIENT], p)
    Fz = residual(systems[Kind.ZETA], p)
    Fe = residual(systems[Kind.ETA], p)
    assert np.allclose(Fp, ev.lam * Fz, atol=1e-10, rtol=0)
    assert np.allclose(Fp, ev.dP_tilde().T @ Fe, atol=1e-9, rtol=0)
    assert np.allclose(Fp, combined_gradient(ev, market, p), atol=0, rtol=0)


def test_singular_eta_system_reported():
    # one firm, linear utility, no outside good: rows of Omega sum to one
    from bertrand_eq.mixed_logit import LinearUtility

    model = LinearUtility(0.0, 0.0, (0.0,), (0.0,), (1.0,))
    market = Market(owner=[0, 0], costs=[1.0, 1.0], characteristics=[[0.0], [1.0]])
    _, ev = evaluate(model, model.sample(1, 0), market, [2.0, 2.0])
    with pytest.raises(np.linalg.LinAlgError):
        eta_factors(ev, market)


def test_market_dead_is_value_error():
    assert issubclass(MarketDead, ValueError)
