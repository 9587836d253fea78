"""Assignment vectors: validation, sign-vector conversion and enumeration.

Labels are integers ``0..m-1`` internally (treatment ``k`` in files is label ``k-1``).
For two treatments the sign vector is ``u = +1`` for label 0 and ``-1`` for label 1.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterator

import numpy as np

from .errors import InputError, InstanceTooLargeError

ENUMERATION_LIMIT = 10**7
_CACHE_ROWS = 200_000


def validate_assignment(labels, m: int | None = None) -> np.ndarray:
    """Return labels as an int array after checking every group has n/m subjects."""
    w = np.asarray(labels)
    if w.ndim != 1 or w.size == 0:
        raise InputError("assignment must be a non-empty 1-D vector", module="imbalance")
    if not np.issubdtype(w.dtype, np.integer):
        if not np.all(np.equal(np.mod(w, 1), 0)):
            raise InputError("assignment labels must be integers", module="imbalance")
    w = w.astype(np.int64)
    if m is None:
        m = int(w.max()) + 1
    n = w.size
    if m < 2 or n % m:
        raise InputError(f"n={n} is not divisible by m={m}", module="imbalance")
    if w.min() < 0 or w.max() >= m:
        raise InputError(f"labels must lie in 0..{m - 1}", module="imbalance")
    counts = np.bincount(w, minlength=m)
    if np.any(counts != n // m):
        raise InputError(f"unbalanced assignment, group sizes {counts.tolist()}", module="imbalance")
    return w


def to_signs(labels) -> np.ndarray:
    """Sign vector for two treatments (works row-wise on 2-D input)."""
    w = np.asarray(labels)
    return np.where(w == 0, 1.0, -1.0)


def from_signs(u) -> np.ndarray:
    u = np.asarray(u)
    if not np.all(np.abs(u) == 1):
        raise InputError("sign vector entries must be +1 or -1", module="imbalance")
    if u.ndim == 1 and u.sum() != 0:
        raise InputError("sign vector must sum to zero", module="imbalance")
    return np.where(u > 0, 0, 1).astype(np.int64)


def canonical(labels) -> np.ndarray:
    """Relabel so labels appear in order of first occurrence (one representative per permutation class)."""
    w = np.asarray(labels)
    _, first = np.unique(w, return_index=True)
    order = np.argsort(first)
    remap = np.empty(w.max() + 1, dtype=np.int64)
    remap[np.unique(w)[order]] = np.arange(order.size)
    return remap[w]


def count_canonical(n: int, m: int) -> int:
    """Number of balanced partitions of n subjects into m unlabeled groups of n/m."""
    if n % m:
        raise InputError(f"n={n} is not divisible by m={m}")
    p = n // m
    return math.factorial(n) // (math.factorial(p) ** m * math.factorial(m))


def _iter_partitions(remaining: tuple[int, ...], p: int) -> Iterator[list[tuple[int, ...]]]:
    if not remaining:
        yield []
        return
    head, rest = remaining[0], remaining[1:]
    for others in itertools.combinations(rest, p - 1):
        block = (head,) + others
        left = tuple(i for i in rest if i not in others)
        for tail in _iter_partitions(left, p):
            yield [block] + tail


def iter_canonical(n: int, m: int, chunk: int = 65536) -> Iterator[np.ndarray]:
    """Yield chunks of canonical label matrices covering every balanced partition once."""
    if n % m:
        raise InputError(f"n={n} is not divisible by m={m}")
    p = n // m
    if m == 2:
        combos = itertools.combinations(range(1, n), p - 1)
        while True:
            block = list(itertools.islice(combos, chunk))
            if not block:
                return
            idx = np.array(block, dtype=np.int64).reshape(len(block), p - 1)
            out = np.ones((len(block), n), dtype=np.int8)
            out[:, 0] = 0
            rows = np.repeat(np.arange(len(block)), p - 1)
            out[rows, idx.ravel()] = 0
            yield out
    else:
        gen = _iter_partitions(tuple(range(n)), p)
        while True:
            parts = list(itertools.islice(gen, chunk))
            if not parts:
                return
            out = np.empty((len(parts), n), dtype=np.int8)
            for r, blocks in enumerate(parts):
                for k, block in enumerate(blocks):
                    out[r, list(block)] = k
            yield out


@lru_cache(maxsize=24)
def _cached_canonical(n: int, m: int) -> np.ndarray:
    out = np.concatenate(list(iter_canonical(n, m)), axis=0)
    out.setflags(write=False)
    return out


def enumerate_canonical(n: int, m: int = 2, limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    """All canonical balanced assignments as an ``(N, n)`` int8 array."""
    total = count_canonical(n, m)
    if total > limit:
        raise InstanceTooLargeError(f"{total} assignments exceed the enumeration limit {limit}")
    if total <= _CACHE_ROWS:
        return _cached_canonical(n, m)
    return np.concatenate(list(iter_canonical(n, m)), axis=0)


def permute_labels(labels: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Apply an independent uniformly random label permutation to each row."""
    labels = np.asarray(labels)
    if labels.ndim == 1:
        return rng.permutation(m)[labels]
    perms = np.argsort(rng.random((labels.shape[0], m)), axis=1)
    return np.take_along_axis(perms, labels.astype(np.int64), axis=1)
