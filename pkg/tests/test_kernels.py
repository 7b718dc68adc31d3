import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ofdma_reuse.kernels import (SERIES_CUTOFF, KernelDomainError, cap, cap_f, e_log, e_log_quad, e_ratio,
                                 e_ratio_quad, evaluate_levels, f, f_inv, f_prime, solve_level)
from oracles import quad_e_log, quad_e_ratio, quad_f

# frozen from the quadrature oracle: e * E1(1) and 1 - e * E1(1)
E_LOG_1 = 0.596347362323194
E_RATIO_1 = 0.403652637676806
F_1 = E_LOG_1 / E_RATIO_1 - 1.0


def test_e_log_values():
    assert e_log(0.0) == 0.0
    assert e_log(1.0) == pytest.approx(0.596347, abs=1e-5)
    assert e_log(1.0) == pytest.approx(quad_e_log(1.0), rel=1e-12)
    assert e_log(10.0) == pytest.approx(quad_e_log(10.0), rel=1e-8)


def test_e_ratio_values():
    assert e_ratio(0.0) == 1.0
    assert e_ratio(1.0) == pytest.approx(0.403653, abs=1e-5)
    assert e_ratio(1e6) < 1e-4


def test_f_values():
    assert f(0.0) == 0.0
    assert f(1.0) == pytest.approx(0.477397, abs=1e-4)
    assert f(1.0) == pytest.approx(F_1, rel=1e-12)
    assert f(2.0) > f(1.0)


def test_f_inv_values():
    assert f_inv(0.0) == 0.0
    assert f_inv(0.477397) == pytest.approx(1.0, abs=1e-3)
    for y in (0.01, 0.1, 1.0, 5.0):
        assert abs(f(f_inv(y)) - y) <= 1e-13 * max(1.0, y)


def test_cap_and_cap_f_values():
    assert cap(0.0) == 0.0
    assert cap(0.477397) == pytest.approx(0.596347, abs=1e-3)
    grid = np.linspace(0.1, 10.0, 100)
    assert np.all(np.diff(cap(grid)) > 0)
    assert cap_f(0.0) == 1.0
    assert cap_f(0.477397) == pytest.approx(0.403653, abs=1e-3)
    assert cap_f(5.0) < cap_f(1.0)


def test_against_quadrature_over_wide_range():
    xs = np.logspace(-6, 6, 61)
    want_l = np.array([quad_e_log(x) for x in xs])
    want_r = np.array([quad_e_ratio(x) for x in xs])
    np.testing.assert_allclose(e_log(xs), want_l, rtol=1e-10)
    np.testing.assert_allclose(e_ratio(xs), want_r, rtol=1e-10)


def test_f_against_quadrature_and_derivative():
    for x in (1e-3, 0.05, 0.7, 3.0, 40.0, 2e3):
        assert f(x) == pytest.approx(quad_f(x), rel=1e-8)
        h = 1e-5 * x
        assert f_prime(x) == pytest.approx((quad_f(x + h) - quad_f(x - h)) / (2 * h), rel=1e-6)


def test_series_branch_is_continuous():
    below, above = SERIES_CUTOFF * (1 - 1e-9), SERIES_CUTOFF * (1 + 1e-9)
    for fun in (e_log, e_ratio, f, f_prime):
        assert fun(below) == pytest.approx(fun(above), rel=1e-7)


def test_quadrature_route_matches_closed_form():
    xs = np.array([0.0, 0.01, 0.5, 1.0, 7.0, 300.0])
    np.testing.assert_allclose(e_log_quad(xs), e_log(xs), rtol=1e-11, atol=1e-300)
    np.testing.assert_allclose(e_ratio_quad(xs), e_ratio(xs), rtol=1e-11)


def test_domain_errors():
    with pytest.raises(KernelDomainError):
        e_log(-1.0)
    with pytest.raises(KernelDomainError):
        f_inv(float("nan"))
    with pytest.raises(KernelDomainError):
        solve_level([1.0], [-2.0], 1.0)


def test_vector_shapes_preserved():
    x = np.array([[0.1, 1.0], [10.0, 100.0]])
    assert e_log(x).shape == (2, 2)
    assert isinstance(e_log(1.0), float)
    lv = evaluate_levels(np.array([0.1, 2.0]))
    np.testing.assert_allclose(lv.cap, e_log(lv.snr), rtol=1e-14)
    np.testing.assert_allclose(lv.ratio, e_ratio(lv.snr), rtol=1e-14)


def test_solve_level_meets_budget():
    w = np.array([0.3, 0.1, 0.5])
    g = np.array([1e3, 40.0, 2.0])
    sol = solve_level(w, g, 0.4)
    assert math.fsum(w / cap(g * sol.beta)) == pytest.approx(0.4, rel=1e-12)
    zero = solve_level(np.zeros(3), g, 0.4)
    assert zero.beta == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-7, max_value=1e7))
def test_f_inv_inverts_f(x):
    assert f_inv(f(x)) == pytest.approx(x, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1e6), st.floats(min_value=1.0001, max_value=10.0))
def test_kernel_monotonicity_and_bounds(x, t):
    assert e_log(t * x) > e_log(x)
    assert e_ratio(t * x) < e_ratio(x)
    assert f(t * x) > f(x)
    # Jensen: E log(1 + xZ) <= log(1 + x)
    assert e_log(x) <= math.log1p(x) * (1 + 1e-14)
    assert 0 < cap_f(x) <= 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=1e-3, max_value=2.0), min_size=1, max_size=8),
       st.floats(min_value=0.05, max_value=1.0), st.integers(min_value=0, max_value=2**31))
def test_solve_level_property(w, budget, seed):
    w = np.array(w)
    g = np.random.default_rng(seed).uniform(0.1, 1e5, w.size)
    sol = solve_level(w, g, budget)
    assert math.fsum(w / cap(g * sol.beta)) == pytest.approx(budget, rel=1e-10)
