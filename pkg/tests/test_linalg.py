import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optbalance.errors import InputError, NotPSDError
from optbalance.linalg import cholesky_psd, lambda_max, psd_sqrt, sym_eigen

from helpers import random_psd


def test_eigen_identity():
    w, _ = sym_eigen(np.eye(3))
    np.testing.assert_allclose(w, [1, 1, 1])


def test_eigen_diagonal_axes():
    w, v = sym_eigen(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(w, [3, 1])
    np.testing.assert_allclose(np.abs(v), np.eye(2))


def test_eigen_two_by_two():
    w, _ = sym_eigen([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(w, [3, 1])


def test_eigen_rejects_nonfinite():
    with pytest.raises(InputError):
        sym_eigen([[np.nan, 0], [0, 1]])


def test_sqrt_examples():
    np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12)
    x = np.array([1.0, 1.0])
    np.testing.assert_allclose(psd_sqrt(np.outer(x, x)), np.outer(x, x) / np.sqrt(2), atol=1e-8)


def test_sqrt_rejects_indefinite():
    with pytest.raises(NotPSDError):
        psd_sqrt(np.diag([1.0, -0.5]))


def test_cholesky_examples():
    np.testing.assert_allclose(cholesky_psd(np.eye(2)), np.eye(2))
    L = cholesky_psd(np.diag([4.0, 0.0]))
    np.testing.assert_allclose(L @ L.T, np.diag([4.0, 0.0]), atol=1e-12)
    L = cholesky_psd([[2.0, 1.0], [1.0, 2.0]])
    assert np.isclose(abs(L[0, 0]), np.sqrt(2))
    np.testing.assert_allclose(L @ L.T, [[2, 1], [1, 2]], atol=1e-12)


def test_lambda_max():
    assert np.isclose(lambda_max([[2.0, 1.0], [1.0, 2.0]]), 3.0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 20), seed=st.integers(0, 2**31 - 1))
def test_reconstruction(n, seed):
    r = np.random.default_rng(seed)
    A = r.standard_normal((n, n))
    A = A + A.T
    w, v = sym_eigen(A)
    assert np.all(np.diff(w) <= 1e-12)
    scale = 1 + np.abs(A).max()
    assert np.abs(v @ np.diag(w) @ v.T - A).max() <= 1e-8 * scale
    assert np.abs(v.T @ v - np.eye(n)).max() <= 1e-8


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 15), rank=st.integers(1, 15), seed=st.integers(0, 2**31 - 1))
def test_psd_roots(n, rank, seed):
    A = random_psd(np.random.default_rng(seed), n, min(rank, n))
    scale = 1 + np.abs(A).max()
    R = psd_sqrt(A)
    assert np.abs(R - R.T).max() == 0
    assert np.abs(R @ R - A).max() <= 1e-6 * scale
    L = cholesky_psd(A)
    assert np.abs(L @ L.T - A).max() <= 1e-6 * scale
