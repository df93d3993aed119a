import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bertrand_eq.newton_krylov import Status, backtracking_line_search
from bertrand_eq.pathology import (
    CONTRACTION_RADIUS,
    cauchy_step,
    classify_iterates,
    exact_newton_point,
    field_eval,
    jac_eval,
    lm_step,
    newton_norm_map,
    newton_step,
    predicted_class,
    run_engine,
    zero_landing_step_length,
)

from conftest import central_jacobian


def test_origin():
    assert np.array_equal(field_eval(np.zeros(3)), np.zeros(3))
    assert np.array_equal(jac_eval(np.zeros(3)), np.eye(3))


def test_jacobian_singular_on_unit_sphere():
    x = np.array([0.6, 0.8, 0.0])
    assert abs(np.linalg.det(jac_eval(x))) < 1e-12
    with pytest.raises(ValueError):
        exact_newton_point(x)


def test_jacobian_matches_differences():
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.normal(size=4)
        fd = central_jacobian(field_eval, x)
        assert np.max(np.abs(fd - jac_eval(x))) < 1e-7


def test_newton_point_examples():
    x = np.array([1.0, 1.0, 1.0]) / 3.0  # norm 1/sqrt(3)
    assert np.allclose(exact_newton_point(x), -x, atol=1e-15)
    assert np.allclose(exact_newton_point([0.5, 0.0]), [-1.0 / 3.0, 0.0], atol=1e-15)
    # the factor 8/3 multiplies x itself, so from 2 e1 the point is (16/3) e1
    assert np.allclose(exact_newton_point([2.0, 0.0]), [16.0 / 3.0, 0.0], atol=1e-15)


def test_newton_point_matches_dense_solve():
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = rng.normal(size=3)
        if abs(np.linalg.norm(x) - 1) < 1e-3:
            continue
        dense = x + np.linalg.solve(jac_eval(x), -field_eval(x))
        assert np.allclose(exact_newton_point(x), dense, rtol=1e-10, atol=1e-12)


def test_norm_map_threshold():
    assert newton_norm_map(CONTRACTION_RADIUS) == pytest.approx(CONTRACTION_RADIUS, rel=1e-14)
    assert newton_norm_map(0.5) < 0.5
    assert newton_norm_map(0.7) > 0.7
    assert predicted_class(0.5) == "converges-to-zero"
    assert predicted_class(0.7) == "diverges"
    assert predicted_class(CONTRACTION_RADIUS) == "sign-alternates"


def test_classifier_labels():
    x = np.array([CONTRACTION_RADIUS, 0.0])
    assert classify_iterates([x * (-1) ** k for k in range(10)]) == "sign-alternates"
    assert classify_iterates([x * 0.1**k for k in range(12)]) == "converges-to-zero"
    assert classify_iterates([x * 2.0**k for k in range(10)]) == "diverges"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=5))
def test_cauchy_step_is_newton_step(v):
    x = np.asarray(v)
    r = np.linalg.norm(x)
    if r < 1e-3 or abs(r - 1) < 1e-2:
        return
    assert np.allclose(cauchy_step(x), newton_step(x), rtol=1e-10, atol=1e-10 * max(1.0, r))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=4), st.floats(0.0, 1e3))
def test_lm_step_from_outside_unit_ball_moves_outward(v, mu):
    x = np.asarray(v)
    if np.linalg.norm(x) <= 1.0 + 1e-3:
        return
    assert np.linalg.norm(x + lm_step(x, mu)) > np.linalg.norm(x)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=4), st.floats(1e-6, 10.0))
def test_positive_steps_along_newton_direction_move_outward(v, t):
    x = np.asarray(v)
    if np.linalg.norm(x) <= 1.0 + 1e-3:
        return
    assert np.linalg.norm(x + t * newton_step(x)) > np.linalg.norm(x)


def test_zero_landing_step_sign():
    for r in (0.3, 0.9, 1.1, 3.0):
        x = np.array([r, 0.0])
        t = zero_landing_step_length(x)
        assert np.sign(t) == np.sign((1 + r * r) / (1 - r * r))
        assert np.allclose(x + t * newton_step(x), 0.0, atol=1e-12)


def test_line_search_from_outside_moves_away():
    x = np.array([2.0, 0.5])
    t, xt = backtracking_line_search(field_eval, x, newton_step(x))
    # any accepted step lengthens x: the merit function rewards running away
    assert t > 0
    assert np.linalg.norm(xt) > np.linalg.norm(x)


def test_pure_newton_runs_match_closed_form():
    x0 = np.array([0.5, 0.0])
    result, visited = run_engine(x0, pure_newton=True, max_iter=30)
    assert result.status is Status.CONVERGED
    r = 0.5
    for x in visited[1:4]:
        r = newton_norm_map(r)
        assert np.linalg.norm(x) == pytest.approx(r, rel=1e-10)


def test_hookstep_from_far_away_walks_outward():
    result, visited = run_engine(np.array([2.0, 0.0]), pure_newton=False, max_iter=8)
    norms = [np.linalg.norm(x) for x in visited]
    assert np.all(np.diff(norms) > 0)
    assert result.status is not Status.CONVERGED


def test_radius_constant():
    assert CONTRACTION_RADIUS == pytest.approx(1 / math.sqrt(3), rel=1e-16)
