import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kestenmarket import tails
from kestenmarket.distributions import RngState, draw, pareto
from kestenmarket.errors import InsufficientDataError


def _pareto(mu, n, seed):
    return draw(pareto(mu, 1), RngState(seed), n)


def _exact_pareto(mu, n):
    # empirical P(X > x) equals x^-mu at every point but the maximum
    body = (np.arange(1, n) / n) ** (-1.0 / mu)
    return np.append(body, (0.5 / n) ** (-1.0 / mu))


def test_hill_hand_value():
    x = np.exp([3.0, 2.0, 1.0])
    orig = tails.MIN_ORDER
    try:
        tails.MIN_ORDER = 1
        est = tails.hill_estimator(x, 2)
    finally:
        tails.MIN_ORDER = orig
    assert est.exponent == pytest.approx(2 / 3, abs=1e-14)


@pytest.mark.parametrize("mu,tol", [(3.0, 0.15), (1.5, 0.1)])
def test_hill_synthetic_pareto(mu, tol):
    est = tails.hill_estimator(_pareto(mu, 100_000, 11), 1000)
    assert abs(est.exponent - mu) < tol


def test_hill_rejects_bad_input():
    with pytest.raises(ValueError):
        tails.hill_estimator(np.array([1.0, -2.0] * 50), 20)
    with pytest.raises(ValueError):
        tails.hill_estimator(np.ones(50), 60)


def test_ccdf_points_counting():
    x, p = tails.ccdf_points([1, 2, 4])
    assert list(x) == [1, 2, 4]
    assert np.allclose(p, [2 / 3, 1 / 3, 0])


def test_ccdf_points_constant():
    x, p = tails.ccdf_points([5, 5])
    assert list(x) == [5] and list(p) == [0]


def test_ccdf_points_empty():
    with pytest.raises(InsufficientDataError):
        tails.ccdf_points([])


@pytest.mark.parametrize("fraction", [0.01, 0.05, 0.2])
def test_rank_regression_exact_pareto(fraction):
    est = tails.rank_regression(_exact_pareto(2.5, 100_000), fraction)
    assert est.exponent == pytest.approx(2.5, abs=1e-9)


def test_rank_regression_synthetic_pareto():
    est = tails.rank_regression(_pareto(3.0, 1_000_000, 12), 0.01)
    assert abs(est.exponent - 3.0) < 0.2
    assert est.power_law


def test_rank_regression_exponential_flagged():
    x = np.random.default_rng(3).exponential(1.0, 1_000_000)
    shallow = tails.rank_regression(x, 0.1).exponent
    deep = tails.rank_regression(x, 0.001).exponent
    assert deep > shallow
    assert tails.rank_regression(x, 0.01).power_law is False


def test_hill_band_pareto():
    band = tails.hill_band(_pareto(2.0, 200_000, 4))
    assert band.contains(2.0) and band.power_law and not band.mild_suspected


def test_hill_band_counts_zeros():
    x = np.concatenate([_pareto(2.0, 10_000, 5), np.zeros(7)])
    assert tails.hill_band(x).zeros_dropped == 7


def test_wildness_compare():
    rng = np.random.default_rng(9)
    p15 = _pareto(1.5, 100_000, 6)
    p3 = _pareto(3.0, 100_000, 7)
    gauss = np.abs(rng.normal(size=100_000))
    expo = rng.exponential(size=100_000)
    assert tails.wildness_compare(p15, gauss) == "x_wilder"
    assert tails.wildness_compare(p3, p15) == "y_wilder"
    assert tails.wildness_compare(gauss, expo) == "both_mild"


def test_moment_probe():
    rng = np.random.default_rng(1)
    assert tails.moment_probe(_pareto(1.7, 1_000_000, 8), 2) == "divergent_suspected"
    assert tails.moment_probe(rng.normal(size=1_000_000), 4) == "finite"
    assert tails.moment_probe(_pareto(3.0, 1_000_000, 9), 2) == "finite"


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_hill_scale_invariant(scale, seed):
    x = _pareto(2.0, 2_000, seed)
    a = tails.hill_estimator(x, 100).exponent
    b = tails.hill_estimator(scale * x, 100).exponent
    assert a == pytest.approx(b, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(mu=st.floats(0.5, 6), n=st.integers(2_000, 20_000))
def test_rank_regression_exact_for_any_exponent(mu, n):
    est = tails.rank_regression(_exact_pareto(mu, n), 0.1)
    assert est.exponent == pytest.approx(mu, rel=1e-9)


@pytest.mark.parametrize("mu", [1.5, 3.0])
def test_hill_and_rank_regression_agree(mu):
    x = _pareto(mu, 200_000, 21)
    h = tails.hill_estimator(x, 2000)
    r = tails.rank_regression(x, 0.01)
    assert abs(h.exponent - r.exponent) <= 2 * math.hypot(h.std_error, r.std_error)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200))
def test_ccdf_monotone(sample):
    x, p = tails.ccdf_points(sample)
    assert np.all(np.diff(x) > 0) and np.all(np.diff(p) <= 0)
    assert p[-1] == 0 and np.all((p >= 0) & (p < 1))


def test_tail_constant_estimates():
    assert tails.rank_regression(_exact_pareto(2.0, 100_000), 0.05).constant == pytest.approx(1.0, rel=1e-9)
    x = draw(pareto(2.0, 3.0), RngState(30), 1_000_000)
    est = tails.hill_estimator(x, 2000)
    # ln C inherits the exponent error scaled by ln(threshold)
    se_log_c = math.log(est.x_min) * est.std_error
    assert abs(math.log(est.constant) - math.log(9.0)) < 3 * se_log_c
