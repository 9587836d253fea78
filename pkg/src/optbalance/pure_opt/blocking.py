"""Incomplete blocking on exactly equal covariate rows (two treatments)."""

from __future__ import annotations

import itertools

import numpy as np

from ..assignments import canonical
from ..errors import InstanceTooLargeError
from ..structures import as_covariates, distinct_rows

SUPPORT_LIMIT = 10**6


def max_exact_matches(X) -> int:
    """q_max: the sum over distinct rows of floor(count / 2)."""
    counts = np.bincount(distinct_rows(as_covariates(X)))
    return int((counts // 2).sum())


def blocking_assign(X, rng: np.random.Generator) -> np.ndarray:
    """One draw of the blocking design: split each equal-covariate pair, randomize leftovers."""
    codes = distinct_rows(as_covariates(X))
    n = codes.size
    labels = np.empty(n, dtype=np.int64)
    leftovers = []
    for c in range(codes.max() + 1):
        members = rng.permutation(np.flatnonzero(codes == c))
        npairs = members.size // 2
        for k in range(npairs):
            flip = rng.integers(2)
            labels[members[2 * k]] = flip
            labels[members[2 * k + 1]] = 1 - flip
        if members.size % 2:
            leftovers.append(members[-1])
    leftovers = rng.permutation(np.array(leftovers, dtype=np.int64))
    half = leftovers.size // 2
    labels[leftovers[:half]] = 0
    labels[leftovers[half:]] = 1
    return labels


def blocking_sampler(X):
    """Vectorized sampler ``(rng, size) -> (size, n)`` for the blocking design."""
    codes = distinct_rows(as_covariates(X))
    groups = [np.flatnonzero(codes == c) for c in range(codes.max() + 1)]
    n = codes.size
    odd_slot = {}
    for k, g in enumerate(groups):
        if g.size % 2:
            odd_slot[k] = len(odd_slot)

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty((size, n), dtype=np.int64)
        # half of the odd-sized groups give their leftover subject to label 0
        extra = np.argsort(rng.random((size, len(odd_slot))), axis=1) < len(odd_slot) // 2
        for k, g in enumerate(groups):
            k0 = np.full(size, g.size // 2)
            if k in odd_slot:
                k0 = k0 + extra[:, odd_slot[k]]
            # a uniform subset of size k0 gets label 0
            ranks = np.argsort(np.argsort(rng.random((size, g.size)), axis=1), axis=1)
            out[:, g] = np.where(ranks < k0[:, None], 0, 1)
        return out

    return sample


def blocking_support(X, limit: int = SUPPORT_LIMIT) -> np.ndarray:
    """Every canonical assignment attaining q_max exact cross-group matches."""
    codes = distinct_rows(as_covariates(X))
    n = codes.size
    groups = [np.flatnonzero(codes == c) for c in range(codes.max() + 1)]
    odd = [k for k, g in enumerate(groups) if g.size % 2]
    rows = []
    count = 0
    for up in itertools.combinations(odd, len(odd) // 2):
        sizes = [g.size // 2 + (1 if k in up else 0) for k, g in enumerate(groups)]
        choices = [list(itertools.combinations(g.tolist(), s)) for g, s in zip(groups, sizes)]
        for pick in itertools.product(*choices):
            count += 1
            if count > limit:
                raise InstanceTooLargeError(f"blocking support exceeds {limit} assignments")
            w = np.ones(n, dtype=np.int64)
            for sub in pick:
                w[list(sub)] = 0
            rows.append(canonical(w))
    support = np.unique(np.array(rows), axis=0)
    return support
