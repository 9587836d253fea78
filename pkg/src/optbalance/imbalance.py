"""Imbalance metrics for single assignments and for designs.

Squared values are the canonical output.  ``mp_linf``, ``mp_lipschitz`` and
``mp_finite_q`` return the unsquared metric because that is the natural quantity
for those norms; :func:`evaluate` squares them for the report.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from .assignments import to_signs, validate_assignment
from .distribution import DesignDistribution
from .errors import InputError, UnsupportedError
from .linalg import as_symmetric, lambda_max, psd_sqrt, sym_eigen
from .structures import (
    FiniteDimQ,
    Lipschitz,
    LipschitzCapped,
    LInfinity,
    MahalanobisLinear,
    RKHS,
    Structure,
    as_covariates,
    basis_matrix,
    distinct_rows,
    dual_exponent,
    gram_matrix,
    mahalanobis_gram,
    pairwise_distances,
    sample_covariance,
    structure_to_dict,
)

# LP dual potentials are only attached to Lipschitz reports below this size.
_LP_CERTIFICATE_MAX_N = 80


def _check_order(mat: np.ndarray, n: int, name: str):
    if mat.shape[0] != n:
        raise InputError(f"{name} has order {mat.shape[0]} but the assignment has {n} subjects", module="imbalance")


def _group_pairs(m: int):
    return list(itertools.combinations(range(m), 2))


def pair_differences(labels: np.ndarray, m: int) -> np.ndarray:
    """``w_k - w_k'`` for every treatment pair; shape ``(..., n_pairs, n)``."""
    labels = np.asarray(labels)
    onehot = (labels[..., None, :] == np.arange(m)[:, None]).astype(float)
    return np.stack([onehot[..., k, :] - onehot[..., j, :] for k, j in _group_pairs(m)], axis=-2)


# ---------------------------------------------------------------------------
# RKHS


def mp_rkhs(W, K, m: int | None = None) -> float:
    """Squared pure-strategy metric (1/p^2) max_{k<k'} d^T K d with d = w_k - w_k'."""
    w = validate_assignment(W, m)
    m = m or int(w.max()) + 1
    K = as_symmetric(K, "K")
    _check_order(K, w.size, "K")
    return float(batch_mp_quadratic(w[None, :], K, m)[0])


def batch_mp_quadratic(labels: np.ndarray, K: np.ndarray, m: int = 2) -> np.ndarray:
    """Squared RKHS metric for every row of a label matrix (no validation)."""
    labels = np.asarray(labels)
    n = labels.shape[1]
    p = n // m
    if m == 2:
        U = np.where(labels == 0, 1.0, -1.0)
        return ((U @ K) * U).sum(axis=1) * (4.0 / n**2)
    diffs = pair_differences(labels, m)
    quad = ((diffs @ K) * diffs).sum(axis=-1)
    return quad.max(axis=1) / p**2


def mm_rkhs(P, K, n: int | None = None, p: float | None = None) -> float:
    """Squared mixed-strategy metric 2/(n p) * lambda_max(sqrt(K) P sqrt(K))."""
    P = as_symmetric(P, "P")
    K = as_symmetric(K, "K")
    n = n or P.shape[0]
    _check_order(K, P.shape[0], "K")
    p = p if p is not None else n / 2
    R = psd_sqrt(K)
    return max(2.0 / (n * p) * lambda_max(R @ P @ R), 0.0)


def _rkhs_pure_certificate(w, K, m):
    n = w.size
    p = n // m
    best, arg = -1.0, None
    for (k, j), d in zip(_group_pairs(m), pair_differences(w, m)):
        val = float(d @ K @ d)
        if val > best:
            best, arg = val, (k, j, d)
    k, j, d = arg
    scale = math.sqrt(best) if best > 0 else 1.0
    # f = sum_i beta_i K(X_i, .) with unit RKHS norm attains the maximum
    return {"pair": [k + 1, j + 1], "coefficients": (d / scale).tolist()}, best / p**2


# ---------------------------------------------------------------------------
# P-matrix


def p_matrix_from_support(support: np.ndarray, weights: np.ndarray, m: int = 2) -> np.ndarray:
    """Weighted pair statistic Pr(same) - Pr(different)/(m-1) of an explicit support."""
    support = np.atleast_2d(np.asarray(support))
    weights = np.asarray(weights, dtype=float)
    if m == 2:
        U = np.where(support == 0, 1.0, -1.0)
        P = (U * weights[:, None]).T @ U
    else:
        n = support.shape[1]
        same = np.zeros((n, n))
        for k in range(m):
            E = (support == k).astype(float)
            same += (E * weights[:, None]).T @ E
        P = same * (m / (m - 1.0)) - weights.sum() / (m - 1.0)
    return 0.5 * (P + P.T)


def p_matrix_cr(n: int, m: int = 2) -> np.ndarray:
    """P-matrix of complete randomization."""
    # Pr(same) = (p-1)/(n-1), which gives -1/(n-1) off the diagonal for every m
    P = np.full((n, n), -1.0 / (n - 1))
    np.fill_diagonal(P, 1.0)
    return P


def p_matrix_of_design(sigma: DesignDistribution) -> np.ndarray:
    """Exact P-matrix of a design (explicit support or a known closed form)."""
    if sigma.p_matrix is not None:
        return np.array(sigma.p_matrix, dtype=float)
    if not sigma.explicit:
        raise UnsupportedError(
            f"design {sigma.name!r} has no explicit support; use estimate_p_matrix", module="imbalance"
        )
    return p_matrix_from_support(sigma.support, sigma.weights, sigma.m)


def estimate_p_matrix(sigma: DesignDistribution, rng: np.random.Generator, draws: int = 10_000) -> np.ndarray:
    """Monte Carlo estimate of the P-matrix from sampled assignments."""
    rows = sigma.sample(rng, draws)
    return p_matrix_from_support(rows, np.full(draws, 1.0 / draws), sigma.m)


def worst_case_ratio(sigma) -> float:
    """(1 - 1/n) lambda_max(P): worst-case variance relative to complete randomization."""
    P = sigma if isinstance(sigma, np.ndarray) else p_matrix_of_design(sigma)
    P = as_symmetric(P, "P")
    n = P.shape[0]
    return (1.0 - 1.0 / n) * lambda_max(P)


# ---------------------------------------------------------------------------
# L-infinity (exact matching)


def exact_match_count(W, X) -> int:
    """Largest number of cross-group pairs with identical covariate rows."""
    w = validate_assignment(W, 2)
    X = as_covariates(X)
    if X.shape[0] != w.size:
        raise InputError("covariates and assignment differ in length", module="imbalance")
    return int(batch_exact_match_count(w[None, :], distinct_rows(X))[0])


def batch_exact_match_count(labels: np.ndarray, codes: np.ndarray) -> np.ndarray:
    ncodes = int(codes.max()) + 1
    onehot = np.zeros((codes.size, ncodes))
    onehot[np.arange(codes.size), codes] = 1.0
    total = onehot.sum(axis=0)
    in0 = (np.asarray(labels) == 0).astype(float) @ onehot
    return np.minimum(in0, total - in0).sum(axis=1).round().astype(np.int64)


def mp_linf(W, X) -> float:
    """Unsquared metric 2 - 4q/n for the sup-norm ball, two treatments only."""
    w = np.asarray(W)
    if w.max() > 1:
        raise UnsupportedError("the sup-norm metric is only defined for two treatments", module="imbalance")
    q = exact_match_count(w, X)
    return 2.0 - 4.0 * q / w.size


# ---------------------------------------------------------------------------
# Lipschitz


def bipartite_matching_cost(D: np.ndarray, left, right) -> tuple[float, np.ndarray]:
    """Minimum-cost perfect matching between two equal-size index sets."""
    sub = D[np.ix_(left, right)]
    r, c = linear_sum_assignment(sub)
    pairs = np.column_stack([np.asarray(left)[r], np.asarray(right)[c]])
    return float(sub[r, c].sum()), pairs


def capped_distances(D, delta0: float) -> np.ndarray:
    """Shortest-path metric after adding a hub at distance delta0 from every subject."""
    D = np.minimum(np.asarray(D, dtype=float), 2.0 * delta0)
    np.fill_diagonal(D, 0.0)
    return D


def mp_lipschitz(W, D, m: int | None = None) -> float:
    """Unsquared Lipschitz metric: (1/p) max over treatment pairs of the matching cost."""
    w = validate_assignment(W, m)
    m = m or int(w.max()) + 1
    D = np.asarray(D, dtype=float)
    _check_order(D, w.size, "D")
    return _lipschitz_value(w, D, m)[0]


def _lipschitz_value(w, D, m):
    p = w.size // m
    best, arg = -1.0, None
    for k, j in _group_pairs(m):
        cost, pairs = bipartite_matching_cost(D, np.flatnonzero(w == k), np.flatnonzero(w == j))
        if cost > best:
            best, arg = cost, (k, j, pairs)
    return best / p, arg


def lipschitz_potentials(w, D, k: int = 0, j: int = 1) -> np.ndarray:
    """Dual potentials y maximizing (w_k - w_j)^T y subject to y_a - y_b <= D_ab."""
    n = w.size
    d = (w == k).astype(float) - (w == j).astype(float)
    rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    A = np.zeros((rows.size, n))
    A[np.arange(rows.size), rows] = 1.0
    A[np.arange(rows.size), cols] = -1.0
    bounds = [(0.0, 0.0)] + [(None, None)] * (n - 1)
    res = linprog(-d, A_ub=A, b_ub=D[rows, cols], bounds=bounds, method="highs")
    if res.status != 0:
        raise InputError(f"potential LP failed: {res.message}", module="imbalance")
    return res.x


# ---------------------------------------------------------------------------
# finite-dimensional q-norm and Mahalanobis


def mp_finite_q(W, Phi, q: float, m: int | None = None) -> float:
    """Unsquared metric max_{k<k'} ||(1/p) Phi^T (w_k - w_k')||_{q*}."""
    w = validate_assignment(W, m)
    m = m or int(w.max()) + 1
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim == 1:
        Phi = Phi[:, None]
    _check_order(Phi, w.size, "Phi")
    return float(batch_mp_finite_q(w[None, :], Phi, q, m)[0])


def batch_mp_finite_q(labels: np.ndarray, Phi: np.ndarray, q: float, m: int = 2) -> np.ndarray:
    labels = np.asarray(labels)
    p = labels.shape[1] // m
    qstar = dual_exponent(q)
    moments = pair_differences(labels, m) @ Phi / p
    return np.linalg.norm(moments, ord=qstar, axis=-1).max(axis=-1)


def mahalanobis_imbalance(W, X, ridge: bool = True) -> float:
    """Squared group-wise Mahalanobis distance between the two group means."""
    w = validate_assignment(W, 2)
    X = as_covariates(X)
    if X.shape[0] != w.size:
        raise InputError("covariates and assignment differ in length", module="imbalance")
    return float(batch_mp_quadratic(w[None, :], mahalanobis_gram(X, ridge=ridge), 2)[0])


def _mahalanobis_certificate(w, X):
    u = to_signs(w)
    delta = 2.0 / w.size * (u @ X)
    cov = sample_covariance(X)
    beta = np.linalg.lstsq(cov, delta, rcond=None)[0]
    norm = math.sqrt(max(float(delta @ beta), 0.0))
    return {"coefficients": (beta / norm if norm > 0 else beta).tolist()}


# ---------------------------------------------------------------------------
# reports


@dataclass
class ImbalanceReport:
    structure: dict
    value_squared: float
    mixed: bool = False
    certificate: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return math.sqrt(max(self.value_squared, 0.0))

    def to_dict(self) -> dict:
        key = "m_m_squared" if self.mixed else "m_p_squared"
        unsq = "m_m" if self.mixed else "m_p"
        return {
            "structure": self.structure,
            key: self.value_squared,
            unsq: self.value,
            "certificate": self.certificate,
        }


def batch_mp_squared(labels: np.ndarray, structure: Structure, X, m: int = 2, cache: dict | None = None) -> np.ndarray:
    """Squared pure metric for every row of a label matrix under ``structure``.

    ``cache`` lets callers evaluating many chunks reuse Gram/distance matrices.
    """
    cache = {} if cache is None else cache
    labels = np.asarray(labels)
    if isinstance(structure, (RKHS, MahalanobisLinear)):
        if "K" not in cache:
            cache["K"] = gram_matrix(structure.kernel, X) if isinstance(structure, RKHS) else mahalanobis_gram(X)
        return batch_mp_quadratic(labels, cache["K"], m)
    if isinstance(structure, FiniteDimQ):
        if "Phi" not in cache:
            cache["Phi"] = basis_matrix(structure.basis, X)
        return batch_mp_finite_q(labels, cache["Phi"], structure.q, m) ** 2
    if isinstance(structure, LInfinity):
        if m != 2:
            raise UnsupportedError("the sup-norm metric is only defined for two treatments", module="imbalance")
        if "codes" not in cache:
            cache["codes"] = distinct_rows(as_covariates(X))
        q = batch_exact_match_count(labels, cache["codes"])
        return (2.0 - 4.0 * q / labels.shape[1]) ** 2
    if isinstance(structure, (Lipschitz, LipschitzCapped)):
        if "D" not in cache:
            D = pairwise_distances(structure.metric, X)
            if isinstance(structure, LipschitzCapped):
                D = capped_distances(D, structure.delta0)
            cache["D"] = D
        D = cache["D"]
        return np.array([_lipschitz_value(row, D, m)[0] ** 2 for row in labels.astype(np.int64)])
    raise UnsupportedError(f"unknown structure {structure!r}", module="imbalance")


def evaluate(W, structure: Structure, X, m: int | None = None) -> ImbalanceReport:
    """Squared pure-strategy metric of one assignment plus a maximizing-function certificate."""
    w = validate_assignment(W, m)
    m = m or int(w.max()) + 1
    if X is not None:
        X = as_covariates(X)
    sdict = _structure_label(structure)
    if isinstance(structure, RKHS):
        cert, val = _rkhs_pure_certificate(w, gram_matrix(structure.kernel, X), m)
        return ImbalanceReport(sdict, val, certificate=cert)
    if isinstance(structure, MahalanobisLinear):
        if m != 2:
            raise UnsupportedError("the Mahalanobis metric is defined for two treatments", module="imbalance")
        val = mahalanobis_imbalance(w, X)
        return ImbalanceReport(sdict, val, certificate=_mahalanobis_certificate(w, X))
    if isinstance(structure, FiniteDimQ):
        Phi = basis_matrix(structure.basis, X)
        val = mp_finite_q(w, Phi, structure.q, m)
        cert = _finite_q_certificate(w, Phi, structure.q, m)
        return ImbalanceReport(sdict, val**2, certificate=cert)
    if isinstance(structure, LInfinity):
        val = mp_linf(w, X)
        codes = distinct_rows(X)
        # f = +1 on values over-represented in group 1, -1 elsewhere
        sign = np.zeros(codes.max() + 1)
        for c in range(codes.max() + 1):
            sel = codes == c
            sign[c] = 1.0 if np.sum(w[sel] == 0) >= np.sum(w[sel] == 1) else -1.0
        return ImbalanceReport(sdict, val**2, certificate={"values": sign[codes].tolist()})
    if isinstance(structure, (Lipschitz, LipschitzCapped)):
        D = pairwise_distances(structure.metric, X)
        if isinstance(structure, LipschitzCapped):
            D = capped_distances(D, structure.delta0)
        val, (k, j, pairs) = _lipschitz_value(w, D, m)
        cert = {"pair": [k + 1, j + 1], "matching": (pairs + 1).tolist()}
        if w.size <= _LP_CERTIFICATE_MAX_N:
            cert["potentials"] = lipschitz_potentials(w, D, k, j).tolist()
        return ImbalanceReport(sdict, val**2, certificate=cert)
    raise UnsupportedError(f"unknown structure {structure!r}", module="imbalance")


def _finite_q_certificate(w, Phi, q, m):
    p = w.size // m
    diffs = pair_differences(w, m)
    moments = diffs @ Phi / p
    qstar = dual_exponent(q)
    norms = np.linalg.norm(moments, ord=qstar, axis=-1)
    idx = int(np.argmax(norms))
    v = moments[idx]
    # beta in the unit q-ball with beta^T v = ||v||_{q*}
    if math.isinf(q):
        beta = np.sign(v)
    elif q == 1:
        beta = np.zeros_like(v)
        beta[np.argmax(np.abs(v))] = np.sign(v[np.argmax(np.abs(v))])
    else:
        beta = v / norms[idx] if norms[idx] > 0 else v
    k, j = _group_pairs(m)[idx]
    return {"pair": [k + 1, j + 1], "coefficients": beta.tolist()}


def evaluate_design(sigma: DesignDistribution, structure: Structure, X) -> ImbalanceReport:
    """Squared mixed-strategy metric of a two-treatment design for quadratic structures."""
    if sigma.m != 2:
        raise UnsupportedError("mixed-strategy metrics are for two treatments", module="imbalance")
    if isinstance(structure, RKHS):
        K = gram_matrix(structure.kernel, X)
    elif isinstance(structure, MahalanobisLinear):
        K = mahalanobis_gram(X)
    elif isinstance(structure, FiniteDimQ) and structure.q == 2:
        Phi = basis_matrix(structure.basis, X)
        K = Phi @ Phi.T
    else:
        raise UnsupportedError(
            f"mixed-strategy metric has no closed form for {structure.name}", module="imbalance"
        )
    P = p_matrix_of_design(sigma)
    R = psd_sqrt(K)
    spec = sym_eigen(R @ P @ R)
    n = P.shape[0]
    val = max(2.0 / (n * (n / 2)) * float(spec.eigenvalues[0]), 0.0)
    cert = {"eigenvector": spec.eigenvectors[:, 0].tolist(), "worst_case_ratio": worst_case_ratio(P)}
    return ImbalanceReport(_structure_label(structure), val, mixed=True, certificate=cert)


def _structure_label(structure: Structure) -> dict:
    try:
        return structure_to_dict(structure)
    except InputError:
        return {"type": structure.name}
