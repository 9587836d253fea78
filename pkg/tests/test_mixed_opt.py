import math

import cvxpy as cp
import numpy as np
import pytest

from optbalance.assignments import canonical, to_signs
from optbalance.errors import InfeasibleError, InputError
from optbalance.imbalance import mm_rkhs, p_matrix_cr, p_matrix_of_design
from optbalance.linalg import psd_sqrt
from optbalance.mixed_opt import (
    algorithm1_design,
    algorithm1_pmatrix,
    algorithm2_weights,
    algorithm3_design,
    sample_sign_gaussian,
)
from optbalance.pure_opt import quadratic_pure_opt, top_t_solutions
from optbalance.structures import Kernel, gram_matrix

from helpers import random_psd


def sdp_weights_oracle(K, U, rho):
    """min lambda_max(sum_t theta_t R u_t u_t^T R) s.t. (1 - 1/n) lambda_max(sum_t theta_t u_t u_t^T) <= rho."""
    n = K.shape[0]
    R = psd_sqrt(K)
    theta = cp.Variable(U.shape[0], nonneg=True)
    A = sum(theta[t] * np.outer(R @ U[t], R @ U[t]) for t in range(U.shape[0]))
    P = sum(theta[t] * np.outer(U[t], U[t]) for t in range(U.shape[0]))
    cons = [cp.sum(theta) == 1]
    if not math.isinf(rho):
        cons.append((1 - 1 / n) * cp.lambda_max(P) <= rho)
    prob = cp.Problem(cp.Minimize(cp.lambda_max(A)), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def sdp_pmatrix_oracle(K, rho):
    n = K.shape[0]
    R = psd_sqrt(K)
    P = cp.Variable((n, n), PSD=True)
    cons = [cp.diag(P) == 1, P @ np.ones(n) == 0]
    if not math.isinf(rho):
        cons.append((1 - 1 / n) * cp.lambda_max(P) <= rho)
    prob = cp.Problem(cp.Minimize(cp.lambda_max(R @ P @ R)), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


# --- weights over fixed partitions ----------------------------------------------


def test_single_partition():
    K = np.eye(4)
    w = algorithm2_weights(K, [[1, -1, 1, -1]])
    np.testing.assert_array_equal(w.theta, [1.0])


def test_identity_two_orthogonal_partitions():
    n = 4
    U = np.array([[1, 1, -1, -1], [1, -1, 1, -1]], dtype=float)
    w = algorithm2_weights(np.eye(n), U)
    # vertices score n; the uniform mixture scores n/2
    assert math.isclose(w.objective, n / 2, rel_tol=1e-6)
    np.testing.assert_allclose(w.theta, [0.5, 0.5], atol=1e-3)


def test_rho_below_one_infeasible():
    with pytest.raises(InfeasibleError):
        algorithm2_weights(np.eye(4), [[1, 1, -1, -1]], rho=0.5)


def test_rho_one_with_few_partitions_infeasible():
    U = np.array([[1, 1, -1, -1], [1, -1, 1, -1]], dtype=float)
    with pytest.raises(InfeasibleError):
        algorithm2_weights(np.eye(4), U, rho=1.0)


def test_unbalanced_sign_vectors_rejected():
    with pytest.raises(InputError):
        algorithm2_weights(np.eye(4), [[1, 1, 1, -1]])


@pytest.mark.parametrize("rho", [math.inf, 3.0, 2.0])
def test_weights_match_sdp(rho, rng):
    n = 8
    K = gram_matrix(Kernel.gaussian(), rng.standard_normal((n, 2)))
    U = np.array([u for u, _ in top_t_solutions(K, 8)])
    w = algorithm2_weights(K, U, rho)
    oracle = sdp_weights_oracle(K, U, rho)
    assert w.ratio <= rho + 1e-6
    assert w.objective >= oracle - 1e-6 * (1 + oracle)
    assert w.objective <= oracle * (1 + 5e-3) + 1e-6


# --- top-T mixture --------------------------------------------------------------


def test_algorithm3_zero_vertex():
    K = gram_matrix(Kernel(), np.array([[1.0], [2.0], [3.0], [4.0]]))
    sigma = algorithm3_design(K, 2)
    assert sigma.support.shape[0] == 1
    assert tuple(canonical(sigma.support[0])) == (0, 1, 1, 0)
    assert sigma.meta["m_m_squared"] == pytest.approx(0, abs=1e-12)


def test_algorithm3_single_is_pure_optimum(rng):
    K = random_psd(rng, 8)
    sigma = algorithm3_design(K, 1)
    assert math.isclose(sigma.meta["m_m_squared"], quadratic_pure_opt(K).value, rel_tol=1e-9)
    assert math.isclose(sigma.meta["worst_case_ratio"], 7.0, rel_tol=1e-9)


def test_algorithm3_identity_strictly_mixes():
    n = 6
    sigma = algorithm3_design(np.eye(n), 2)
    assert sigma.support.shape[0] == 2
    vert = 4.0 * n / n**2
    assert sigma.meta["m_m_squared"] < vert - 1e-6
    # the stored metric agrees with the P-matrix of the returned design
    P = p_matrix_of_design(sigma)
    assert math.isclose(mm_rkhs(P, np.eye(n)), sigma.meta["m_m_squared"], rel_tol=1e-6)


# --- full P-matrix relaxation ---------------------------------------------------


def test_pmatrix_identity_kernel():
    n = 6
    res = algorithm1_pmatrix(np.eye(n))
    assert math.isclose(res.objective, n / (n - 1), rel_tol=1e-6)


def test_pmatrix_rho_one_is_cr(rng):
    n = 6
    res = algorithm1_pmatrix(random_psd(rng, n), rho=1.0)
    np.testing.assert_allclose(res.P, p_matrix_cr(n), atol=1e-8)


@pytest.mark.parametrize("rho", [math.inf, 2.0])
def test_pmatrix_matches_sdp(rho, rng):
    n = 6
    x = rng.standard_normal(n)
    for K in (np.outer(x, x), gram_matrix(Kernel.gaussian(), rng.standard_normal((n, 2)))):
        res = algorithm1_pmatrix(K, rho)
        P = res.P
        # feasibility of the returned matrix
        np.testing.assert_allclose(np.diag(P), 1.0, atol=1e-6)
        np.testing.assert_allclose(P @ np.ones(n), 0.0, atol=1e-6)
        assert np.linalg.eigvalsh(P)[0] >= -1e-8
        assert res.ratio <= rho + 1e-6
        oracle = sdp_pmatrix_oracle(K, rho)
        assert res.objective >= oracle - 1e-6 * (1 + oracle)
        assert res.objective <= oracle + 2e-2 * max(oracle, 1e-3 * np.trace(K))
        # never worse than complete randomization
        R = psd_sqrt(K)
        assert res.objective <= np.linalg.eigvalsh(R @ p_matrix_cr(n) @ R)[-1] + 1e-9


def test_pmatrix_rho_infeasible():
    with pytest.raises(InfeasibleError):
        algorithm1_pmatrix(np.eye(4), rho=0.9)


# --- sign-Gaussian rounding -----------------------------------------------------


def test_sign_gaussian_point_mass(rng):
    u = np.array([1.0, -1.0, -1.0, 1.0, 1.0, -1.0])
    draws = sample_sign_gaussian(np.outer(u, u), rng, 200)
    for w in draws:
        assert abs(to_signs(w) @ u) == 6


def test_sign_gaussian_balanced_and_symmetric(rng):
    draws = sample_sign_gaussian(p_matrix_cr(2), rng, 4000)
    assert np.all(draws.sum(axis=1) == 1)
    assert abs(np.mean(draws[:, 0]) - 0.5) < 3 * 0.5 / math.sqrt(4000)
    P = p_matrix_cr(8)
    draws = sample_sign_gaussian(P, rng, 500)
    assert np.all(draws.sum(axis=1) == 4)


def test_algorithm1_design_realized_pmatrix(rng):
    n = 6
    K = gram_matrix(Kernel.gaussian(), rng.standard_normal((n, 2)))
    sigma = algorithm1_design(K, rng=rng, check_draws=20_000)
    Pr = sigma.meta["p_realized"]
    np.testing.assert_allclose(np.diag(Pr), 1.0)
    np.testing.assert_allclose(Pr.sum(axis=1), 0.0, atol=1e-12)
    assert np.all(sigma.sample(rng, 100).sum(axis=1) == n // 2)
