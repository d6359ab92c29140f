import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kestenmarket import distributions as dist
from kestenmarket import kesten, matrix, tails
from kestenmarket.distributions import RngState
from kestenmarket.errors import ConfigurationError, SingularMultiplierError
from kestenmarket.matrix import MatrixRecurrenceSpec, WeightMatrix

OFF = np.array([[0, 0.4], [0.4, 0]])
JITTERED = dist.jittered(dist.two_point(2, 0.2, 0.5), 0.01)


def _ring(n, w=0.9):
    m = np.zeros((n, n))
    m[np.arange(n), (np.arange(n) + 1) % n] = w
    return m


def test_strong_connectivity():
    assert matrix.strong_connectivity(OFF)
    block = np.zeros((4, 4))
    block[0, 1] = block[1, 0] = block[2, 3] = block[3, 2] = 0.5
    assert not matrix.strong_connectivity(block)
    assert matrix.strong_connectivity(_ring(5))


def test_spectral_radius_examples():
    assert matrix.spectral_radius(OFF) == pytest.approx(0.4, abs=1e-12)
    assert matrix.spectral_radius(np.zeros((3, 3))) == 0.0
    m = np.full((4, 4), 0.3)
    np.fill_diagonal(m, 0)
    assert matrix.spectral_radius(m) == pytest.approx(0.9, abs=1e-12)


def test_spectral_radius_ring():
    assert matrix.spectral_radius(_ring(5)) == pytest.approx(0.9, abs=1e-12)


def test_spectral_radius_signed_matrix():
    m = np.array([[0.2, -0.5], [0.5, 0.2]])
    assert matrix.spectral_radius(m) == pytest.approx(max(abs(np.linalg.eigvals(m))), abs=1e-12)


def test_spectral_radius_row_sum_bound_random():
    gen = np.random.default_rng(0)
    for _ in range(1000):
        n = int(gen.integers(2, 9))
        m = gen.random((n, n)) * (gen.random((n, n)) < 0.6)
        np.fill_diagonal(m, 0)
        rows = m.sum(axis=1)
        bound = rows.max()
        rho = matrix.spectral_radius(m)
        assert rho <= bound + 1e-10
        assert rho >= rows.min() - 1e-10
        assert rho == pytest.approx(max(abs(np.linalg.eigvals(m))), abs=1e-8)


def test_operator_norm_matches_svd():
    gen = np.random.default_rng(1)
    for _ in range(50):
        m = gen.normal(size=(4, 4))
        assert matrix.operator_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-9)


def test_multiplier_matrix_examples():
    assert np.array_equal(matrix.multiplier_matrix(np.zeros((3, 3))), np.eye(3))
    k = matrix.multiplier_matrix(OFF)
    assert np.allclose(k, [[1 / 0.84, 0.4 / 0.84], [0.4 / 0.84, 1 / 0.84]], atol=1e-12)


def test_multiplier_matrix_singular():
    with pytest.raises(SingularMultiplierError):
        matrix.multiplier_matrix(np.array([[0, 1.0], [1.0, 0]]))


def test_weight_matrix_validation():
    with pytest.raises(ConfigurationError):
        WeightMatrix(np.array([[0.1, 0.2], [0.2, 0]]))
    with pytest.raises(ConfigurationError):
        WeightMatrix(np.array([[0, -0.2], [0.2, 0]]))
    with pytest.raises(ConfigurationError):
        WeightMatrix(np.array([[0, 1.0], [1.0, 0]]))
    with pytest.raises(ConfigurationError):
        WeightMatrix(np.ones((2, 3)), "cross_asset")
    WeightMatrix(np.array([[0.5, -0.2], [0.2, 0.5]]), "cross_asset")


def test_network_draws_keep_invariants():
    base = WeightMatrix(np.array([[0, 0.5, 0.4], [0.3, 0, 0.3], [0.2, 0.2, 0]]))
    spec = MatrixRecurrenceSpec(base, (dist.normal(0, 1),), jitter_sd=0.7)
    mats = spec.draw_matrices(RngState(0).generator, 500)
    assert np.allclose(mats.sum(axis=2), base.entries.sum(axis=1))
    assert np.all(mats >= 0)
    assert np.all(np.diagonal(mats, axis1=1, axis2=2) == 0)


def test_vector_path_without_feedback():
    base = WeightMatrix(np.zeros((3, 3)), "cross_asset")
    spec = MatrixRecurrenceSpec(base, (dist.constant(2.0),))
    path = matrix.simulate_vector_path(spec, 10, burn_in=0, rng=RngState(0))
    assert np.all(path.components == 2.0)


def test_vector_path_contracts_without_input():
    base = WeightMatrix(OFF * 1.25, "opinion_network")
    spec = MatrixRecurrenceSpec(base, (dist.constant(0.0),))
    path = matrix.simulate_vector_path(spec, 60, burn_in=0, rng=RngState(0), x0=[1.0, 1.0])
    norms = np.linalg.norm(path.components, axis=1)
    assert np.allclose(norms[1:] / norms[:-1], 0.5)


def test_diagonal_reduction_tail():
    spec = matrix.diagonal_spec(dist.uniform(0, 2), dist.normal(0, 1))
    path = matrix.simulate_vector_path(spec, 1_000_000, rng=RngState(0))
    for band in matrix.component_tails(path):
        assert abs(band.exponent - 1.0) < 3 * band.central_se
    assert abs(matrix.average_opinion_tail(path).exponent - 1.0) < 0.15


def test_zero_feedback_average_is_mild():
    base = WeightMatrix(np.zeros((4, 4)), "opinion_network")
    spec = MatrixRecurrenceSpec(base, (dist.normal(0, 1),))
    path = matrix.simulate_vector_path(spec, 200_000, burn_in=0, rng=RngState(4))
    assert not matrix.average_opinion_tail(path).power_law


@pytest.mark.filterwarnings("ignore:E\\|\\|A\\|\\|:RuntimeWarning")
def test_cross_asset_per_component_roots():
    base = WeightMatrix(np.array([[0, 0.01], [0.01, 0]]), "cross_asset")
    laws = (dist.uniform(0, 2), JITTERED)
    spec = MatrixRecurrenceSpec(base, (dist.normal(0, 1),), diag_laws=laws)
    path = matrix.simulate_vector_path(spec, 2_000_000, rng=RngState(5))
    bands = matrix.component_tails(path)
    # the wilder component leaks into the other through the spillover
    assert bands[0].contains(kesten.solve_exponent(laws[0]))
    assert bands[1].exponent > bands[0].exponent


@pytest.mark.parametrize("law,root", [(dist.uniform(0, 2), 1.0), (JITTERED, 2.0)])
def test_matrix_exponent_diagonal_reduction(law, root):
    spec = matrix.diagonal_spec(law, dist.normal(0, 1))
    est = matrix.estimate_matrix_exponent(spec, rng=RngState(6))
    assert est == pytest.approx(kesten.solve_exponent(law), abs=0.1)
    assert est == pytest.approx(root, abs=0.1)


def test_matrix_exponent_constant_contraction():
    spec = MatrixRecurrenceSpec(WeightMatrix(OFF * 1.25, "cross_asset"), (dist.normal(0, 1),))
    assert matrix.estimate_matrix_exponent(spec, rng=RngState(7)) is None


def test_matrix_exponent_network_has_no_root():
    base = WeightMatrix(np.array([[0, 0.9], [0.8, 0]]))
    spec = MatrixRecurrenceSpec(base, (dist.normal(0, 1),), jitter_sd=0.5)
    assert matrix.estimate_matrix_exponent(spec, rng=RngState(8)) is None


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 6), seed=st.integers(0, 10_000), scale=st.floats(0.05, 0.9))
def test_neumann_series_matches_multiplier(n, seed, scale):
    gen = np.random.default_rng(seed)
    m = gen.random((n, n))
    np.fill_diagonal(m, 0)
    m *= scale / m.sum(axis=1).max()
    k = matrix.multiplier_matrix(m)
    terms = int(np.ceil(np.log(1e-12) / np.log(scale))) + 5
    assert np.allclose(k, matrix.neumann_series(m, terms), atol=1e-8, rtol=0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 10_000), density=st.floats(0.2, 1.0))
def test_spectral_radius_within_row_sum_bounds(n, seed, density):
    gen = np.random.default_rng(seed)
    m = gen.random((n, n)) * (gen.random((n, n)) < density)
    rows = m.sum(axis=1)
    rho = matrix.spectral_radius(m)
    assert rows.min() - 1e-10 <= rho <= rows.max() + 1e-10


def test_multiplier_exceeds_identity_when_irreducible():
    gen = np.random.default_rng(2)
    for _ in range(100):
        n = int(gen.integers(2, 7))
        m = gen.random((n, n)) * (gen.random((n, n)) < 0.5)
        np.fill_diagonal(m, 0)
        m[np.arange(n), (np.arange(n) + 1) % n] += 0.1
        m *= 0.9 / m.sum(axis=1).max()
        assert matrix.strong_connectivity(m)
        assert np.all(matrix.multiplier_matrix(m) > np.eye(n))


def test_indirect_influence_decays_with_spectral_radius():
    gen = np.random.default_rng(3)
    for _ in range(50):
        m = gen.random((4, 4))
        m = (m + m.T) / 2
        np.fill_diagonal(m, 0)
        m *= 0.8 / m.sum(axis=1).max()
        rho = matrix.spectral_radius(m)
        power = np.eye(4)
        for lam in range(1, 40):
            power = power @ m
            assert np.linalg.norm(power, 2) <= rho**lam * (1 + 1e-9)
