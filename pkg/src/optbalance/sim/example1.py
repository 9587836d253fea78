"""Adversarial instance on which minimizing the Mahalanobis imbalance is the worst choice."""

from __future__ import annotations

import numpy as np

from ..assignments import enumerate_canonical, to_signs
from ..errors import InputError
from ..imbalance import batch_mp_quadratic
from ..structures import mahalanobis_gram

UNIQUENESS_CHECK_MAX_B = 4


def _perturbations(h: int) -> np.ndarray:
    """Offsets for the positive members; their alternating sum is exactly zero."""
    a = 2.0 ** np.arange(h)
    a[-1] = -(2.0 ** (h - 1) - 1)
    delta = 2.0 ** -(h + 2)
    return delta * (-1.0) ** np.arange(h) * a


def example1_construct(b: int, check: bool | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Covariates and outcomes for n = 2**b subjects.

    Subjects 1..n/2 sit at -1, -2, ..., -2**(n/2-1) and subjects n/2+1..n at
    1, 2, ..., 2**(n/2-1) plus a tiny offset. The offsets make the alternating
    assignment (1, 2, 1, 2, ...) the unique exact zero of the group-mean difference,
    while Y_i = (-1)**i is perfectly anti-aligned with that assignment.

    ``check`` runs the exhaustive uniqueness check; by default it runs for b <= 4.
    """
    if int(b) != b or b < 2:
        raise InputError("b must be an integer >= 2", module="sim_harness")
    b = int(b)
    n = 2**b
    h = n // 2
    mags = 2.0 ** np.arange(h)
    x = np.concatenate([-mags, mags + _perturbations(h)])
    i = np.arange(1, n + 1)
    y = (-1.0) ** i
    X = x[:, None]
    if check is None:
        check = b <= UNIQUENESS_CHECK_MAX_B
    if check:
        verify_example1(X)
    return X, y


def alternating_assignment(n: int) -> np.ndarray:
    """Labels (0, 1, 0, 1, ...): treatment 1 for odd subjects, treatment 2 for even ones."""
    return np.arange(n) % 2


def verify_example1(X) -> None:
    """Raise unless the alternating assignment is the unique Mahalanobis minimizer."""
    n = X.shape[0]
    rows = enumerate_canonical(n, 2)
    u = to_signs(rows).astype(float)
    # the raw group-sum difference is exact in floating point for these dyadic values
    sums = np.abs(u @ X[:, 0])
    best = np.flatnonzero(sums == sums.min())
    alt = alternating_assignment(n)
    if best.size != 1 or not np.array_equal(rows[best[0]], alt):
        raise AssertionError("alternating assignment is not the unique Mahalanobis minimizer")
    vals = batch_mp_quadratic(rows, mahalanobis_gram(X), 2)
    if int(np.argmin(vals)) != best[0]:
        raise AssertionError("whitened metric disagrees with the raw group-sum difference")


def example1_closed_forms(n: int) -> dict[str, float]:
    """Conditional variances of the mean-difference estimator on the adversarial instance."""
    return {
        "complete_randomization": 4.0 / (n - 1),
        "blocking_rank_bins": 4.0 / (n - 8),
        "pairwise_matching": 8.0 / n,
        "pure_optimal_mahalanobis": 4.0,
        "rerandomization_infinitesimal": 4.0,
    }
