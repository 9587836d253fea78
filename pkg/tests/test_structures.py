import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optbalance.errors import InputError, SingularCovarianceError
from optbalance.imbalance import batch_mp_quadratic, mm_rkhs
from optbalance.assignments import enumerate_canonical
from optbalance.structures import (
    RKHS,
    DistanceMetric,
    FiniteDimQ,
    Kernel,
    LInfinity,
    Lipschitz,
    LipschitzCapped,
    MahalanobisLinear,
    basis_matrix,
    caliper_metric,
    gram_matrix,
    kernel_eval,
    monomial_basis,
    normalize_covariates,
    pairwise_distances,
    sample_covariance,
    structure_from_dict,
    structure_to_dict,
    validate_distance_matrix,
)
from optbalance.imbalance import p_matrix_cr


def test_kernel_eval_examples():
    assert kernel_eval(Kernel(), [1, 2], [3, 4]) == 11
    assert kernel_eval(Kernel.gaussian(), [0.3, -2], [0.3, -2]) == 1
    assert kernel_eval(Kernel.polynomial(2), [1, 0], [0, 5]) == 1


def test_kernel_formulas():
    x, y = np.array([0.5, -1.0]), np.array([2.0, 0.25])
    assert math.isclose(kernel_eval(Kernel.polynomial(3), x, y), (1 + (x @ y) / 3) ** 3)
    assert math.isclose(kernel_eval(Kernel.gaussian(2.0), x, y), math.exp(-np.sum((x - y) ** 2) / 4))
    assert math.isclose(kernel_eval(Kernel.exponential(), x, y), math.exp(x @ y))


def test_kernel_dimension_mismatch():
    with pytest.raises(InputError):
        kernel_eval(Kernel(), [1, 2], [1, 2, 3])


@pytest.mark.parametrize("bad", [("polynomial", 1.5), ("gaussian", 0.0), ("exponential", -1.0), ("cosine", 1.0)])
def test_kernel_validation(bad):
    with pytest.raises(InputError):
        Kernel(*bad)


def test_gram_examples():
    np.testing.assert_array_equal(gram_matrix(Kernel(), [[1.0], [-1.0]]), [[1, -1], [-1, 1]])
    X = np.random.default_rng(0).standard_normal((6, 3))
    np.testing.assert_allclose(np.diag(gram_matrix(Kernel.gaussian(), X)), 1.0)
    np.testing.assert_array_equal(gram_matrix(Kernel.exponential(), [[0.0], [0.0]]), np.ones((2, 2)))


def test_gram_diagonal_matches_eval(rng):
    X = rng.standard_normal((5, 2))
    for k in (Kernel(), Kernel.polynomial(2), Kernel.gaussian(0.7), Kernel.exponential(2.0)):
        G = gram_matrix(k, X)
        assert np.array_equal(G, G.T)
        for i in range(5):
            assert math.isclose(G[i, i], kernel_eval(k, X[i], X[i]), rel_tol=1e-12)
            assert math.isclose(G[i, (i + 1) % 5], kernel_eval(k, X[i], X[(i + 1) % 5]), rel_tol=1e-12)


@pytest.mark.parametrize("kernel", [Kernel(), Kernel.polynomial(2), Kernel.polynomial(3), Kernel.gaussian(),
                                    Kernel.exponential(2.0)])
def test_gram_psd(kernel):
    r = np.random.default_rng(7)
    for _ in range(100):
        n = int(r.integers(2, 31))
        G = gram_matrix(kernel, r.uniform(-1, 1, (n, 2)))
        w = np.linalg.eigvalsh(G)
        assert w[0] >= -1e-8 * w[-1]


def test_distance_examples():
    D = pairwise_distances(DistanceMetric("euclidean"), [[0.0], [3.0]])
    assert D[0, 1] == 3 and D[0, 0] == 0


def test_mahalanobis_on_white_data_is_euclidean(rng):
    X = normalize_covariates(rng.standard_normal((30, 3)))
    np.testing.assert_allclose(pairwise_distances(DistanceMetric("mahalanobis"), X),
                               pairwise_distances(DistanceMetric("euclidean"), X), atol=1e-10)


def test_mahalanobis_affine_invariant(rng):
    X = rng.standard_normal((12, 3))
    A = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    Y = X @ A.T + rng.standard_normal(3)
    D1 = pairwise_distances(DistanceMetric("mahalanobis"), X)
    D2 = pairwise_distances(DistanceMetric("mahalanobis"), Y)
    np.testing.assert_allclose(D1, D2, atol=1e-6)


def test_custom_metric_validation():
    ok = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
    assert np.array_equal(validate_distance_matrix(ok), ok)
    bad = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float)
    with pytest.raises(InputError):
        DistanceMetric("custom", bad)
    with pytest.raises(InputError):
        validate_distance_matrix(np.array([[0, -1], [-1, 0]], dtype=float))
    with pytest.raises(InputError):
        validate_distance_matrix(np.array([[1, 1], [1, 0]], dtype=float))


def test_caliper_metric():
    D = np.array([[0, 0.5, 3], [0.5, 0, 2], [3, 2, 0]], dtype=float)
    C = caliper_metric(D, 1.0)
    np.testing.assert_array_equal(C, [[0, 1, 3], [1, 0, 2], [3, 2, 0]])


def test_basis_examples():
    np.testing.assert_array_equal(basis_matrix(monomial_basis(1, 1), [[2.0]]), [[1, 2]])
    np.testing.assert_array_equal(basis_matrix(monomial_basis(1, 2), [[3.0]]), [[1, 3, 9]])
    assert len(monomial_basis(2, 2)) == math.comb(4, 2)
    # s-scaling: degree-k monomials carry s**(1-k)
    np.testing.assert_allclose(basis_matrix(monomial_basis(1, 2, scaled=True), [[3.0]]), [[2, 3, 4.5]])


def test_normalize_examples():
    r = np.random.default_rng(1)
    X = normalize_covariates(r.standard_normal((50, 2)))
    np.testing.assert_allclose(normalize_covariates(X), X, atol=1e-10)
    np.testing.assert_allclose(normalize_covariates([[0.0], [2.0]], divisor=4.0), [[-0.25], [0.25]])
    with pytest.raises(SingularCovarianceError):
        normalize_covariates([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])


@settings(max_examples=30, deadline=None)
@given(n=st.integers(5, 30), d=st.integers(1, 4), div=st.floats(0.5, 10), seed=st.integers(0, 10**6))
def test_normalize_moments(n, d, div, seed):
    X = np.random.default_rng(seed).standard_normal((n, d)) * 3 + 1
    Z = normalize_covariates(X, divisor=div) * div
    assert np.abs(Z.mean(axis=0)).max() <= 1e-10
    assert np.abs(sample_covariance(Z) - np.eye(d)).max() <= 1e-8


@settings(max_examples=30, deadline=None)
@given(n=st.sampled_from([4, 6, 8]), c=st.floats(-5, 5), seed=st.integers(0, 10**6))
def test_constant_shift_invariance(n, c, seed):
    r = np.random.default_rng(seed)
    B = r.standard_normal((n, n))
    K = B @ B.T
    rows = enumerate_canonical(n, 2)
    a = batch_mp_quadratic(rows, K, 2)
    b = batch_mp_quadratic(rows, K + c, 2)
    assert np.abs(a - b).max() <= 1e-8 * (1 + np.abs(K).max())
    # the mixed metric needs a PSD matrix, so only nonnegative shifts apply there
    P = p_matrix_cr(n)
    assert abs(mm_rkhs(P, K) - mm_rkhs(P, K + abs(c))) <= 1e-8 * (1 + np.abs(K).max() + abs(c))


@pytest.mark.parametrize("s", [RKHS(Kernel.polynomial(3)), RKHS(Kernel.gaussian(0.5)), Lipschitz(),
                               LipschitzCapped(DistanceMetric("euclidean"), 0.3), LInfinity(),
                               FiniteDimQ(monomial_basis(2, 2), math.inf), FiniteDimQ(monomial_basis(1, 3), 1.0),
                               MahalanobisLinear()])
def test_structure_round_trip(s):
    t = structure_from_dict(structure_to_dict(s))
    assert type(t) is type(s)
    assert structure_to_dict(t) == structure_to_dict(s)


def test_structure_errors():
    with pytest.raises(InputError):
        structure_from_dict({"type": "sobolev"})
    with pytest.raises(InputError):
        LipschitzCapped(delta0=0.0)
    with pytest.raises(InputError):
        FiniteDimQ(monomial_basis(1, 1), 3.0)
