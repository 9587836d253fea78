"""Effect estimation and tests of the sharp null hypothesis."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .assignments import validate_assignment
from .designs import PureOptimal, build_design
from .distribution import DesignDistribution
from .errors import InputError, OptBalanceError, UnsupportedError
from .structures import as_covariates

BOOTSTRAP_MAX_N = 32
_RETRIES = 3


@dataclass
class OutcomeTable:
    """Observed outcome of each subject under its realized assignment (labels 0..m-1)."""

    outcomes: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=float).ravel()
        self.labels = validate_assignment(self.labels)
        if self.outcomes.shape != self.labels.shape:
            raise InputError("one outcome per subject is required", module="inference")
        if not np.all(np.isfinite(self.outcomes)):
            raise InputError("outcomes must be finite", module="inference")


@dataclass
class TestResult:
    estimate: float
    p_value: float
    T: int
    alpha: float
    reject: bool

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "p_value": self.p_value, "T": self.T, "alpha": self.alpha,
                "reject": self.reject}


def mean_difference(outcomes, labels, k: int = 0, k2: int = 1) -> float:
    """Mean outcome of group k minus mean outcome of group k2."""
    y = np.asarray(outcomes, dtype=float)
    w = np.asarray(labels)
    a, b = w == k, w == k2
    if not a.any() or not b.any():
        raise InputError("both groups must be nonempty", module="inference")
    return float(y[a].mean() - y[b].mean())


def batch_mean_difference(y, labels, k: int = 0, k2: int = 1) -> np.ndarray:
    """Mean difference for each row of a label matrix; ``y`` is (n,) or per-row (N, n)."""
    labels = np.asarray(labels)
    y = np.broadcast_to(np.asarray(y, dtype=float), labels.shape)
    a = labels == k
    b = labels == k2
    return (y * a).sum(axis=1) / a.sum(axis=1) - (y * b).sum(axis=1) / b.sum(axis=1)


def _exceed(stats, est) -> np.ndarray:
    # ties count toward the numerator; the slack absorbs rounding in the mean differences
    return np.abs(stats) >= abs(est) - 1e-12 * (1.0 + abs(est))


def _mc_p_value(stats, est, T) -> float:
    return (1.0 + float(np.count_nonzero(_exceed(stats, est)))) / (1.0 + T)


def _result(est, p, T, alpha) -> TestResult:
    return TestResult(float(est), float(p), int(T), float(alpha), bool(p <= alpha))


def bootstrap_test(X, spec: PureOptimal, outcomes: OutcomeTable, T: int = 99, alpha: float = 0.05,
                   rng: np.random.Generator | None = None, threads: int = 1) -> TestResult:
    """Bootstrap test for pure-strategy optimal designs.

    Each replicate resamples subjects with replacement, re-solves the optimal design on
    the resampled covariates, draws an assignment from it, and recomputes the estimate
    from the resampled subjects' observed outcomes.
    """
    if not isinstance(spec, PureOptimal):
        raise InputError("the bootstrap test is for pure-strategy optimal designs", module="inference")
    if T < 0:
        raise InputError("T must be nonnegative", module="inference")
    X = as_covariates(X)
    n = X.shape[0]
    if n > BOOTSTRAP_MAX_N:
        raise InputError(f"bootstrap re-solves are limited to n <= {BOOTSTRAP_MAX_N}", module="inference")
    if X.shape[0] != outcomes.outcomes.size:
        raise InputError("covariates and outcomes differ in length", module="inference")
    est = mean_difference(outcomes.outcomes, outcomes.labels)
    if T == 0:
        return _result(est, 1.0, 0, alpha)
    rng = rng if rng is not None else np.random.default_rng()
    streams = rng.spawn(T)
    y = outcomes.outcomes
    m = int(outcomes.labels.max()) + 1

    def replicate(r: np.random.Generator) -> float:
        last = None
        for _ in range(_RETRIES):
            idx = r.integers(0, n, n)
            try:
                design = build_design(spec, X[idx], m=m)
            except OptBalanceError as exc:
                last = exc
                continue
            w = design.sample(r)
            return mean_difference(y[idx], w)
        raise OptBalanceError(f"bootstrap replicate failed {_RETRIES} times: {last}", module="inference")

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            stats = np.array(list(pool.map(replicate, streams)))
    else:
        stats = np.array([replicate(r) for r in streams])
    return _result(est, _mc_p_value(stats, est, T), T, alpha)


def _labeled_support(sigma: DesignDistribution):
    """Every labeled assignment of an explicit support with its probability."""
    m = sigma.m
    perms = list(itertools.permutations(range(m)))
    rows = np.concatenate([np.asarray(p)[sigma.support] for p in perms])
    weights = np.concatenate([sigma.weights] * len(perms)) / len(perms)
    return rows, weights


def exact_permutation_test(sigma: DesignDistribution, outcomes: OutcomeTable, alpha: float = 0.05) -> TestResult:
    """Exact p-value: the design probability of a statistic at least as extreme as observed."""
    if not sigma.explicit:
        raise UnsupportedError("exact test needs an explicit design support; use randomization_test",
                               module="inference")
    est = mean_difference(outcomes.outcomes, outcomes.labels)
    rows, weights = _labeled_support(sigma)
    stats = batch_mean_difference(outcomes.outcomes, rows)
    p = math.fsum(weights[_exceed(stats, est)])
    p = min(max(p, 0.0), 1.0)
    return TestResult(est, p, int(rows.shape[0]), float(alpha), bool(p <= alpha))


def randomization_test(sigma: DesignDistribution, outcomes: OutcomeTable, T: int = 999, alpha: float = 0.05,
                       rng: np.random.Generator | None = None) -> TestResult:
    """Monte Carlo randomization test drawing fresh assignments from the design."""
    if T < 0:
        raise InputError("T must be nonnegative", module="inference")
    est = mean_difference(outcomes.outcomes, outcomes.labels)
    if T == 0:
        return _result(est, 1.0, 0, alpha)
    rng = rng if rng is not None else np.random.default_rng()
    rows = sigma.sample(rng, T)
    stats = batch_mean_difference(outcomes.outcomes, rows)
    return _result(est, _mc_p_value(stats, est, T), T, alpha)


def rejection_rate(rejections: int, sims: int) -> tuple[float, float]:
    """Rejection frequency and its binomial standard error."""
    rate = rejections / sims
    return rate, math.sqrt(max(rate * (1 - rate), 1e-300) / sims)
