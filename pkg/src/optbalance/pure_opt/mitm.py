"""Exact meet-in-the-middle solver for low-rank balanced partition problems.

With K = L L^T of small rank r the objective u^T K u is the squared norm of
L^T u, a sum of two half-sample vectors.  Enumerating both halves and matching
each left sum with its nearest negated right sum (k-d tree, one tree per count
of +1 entries so the total stays balanced) gives the exact minimum.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..linalg import as_symmetric, sym_eigen

MAX_RANK = 8
MAX_N = 40
# eigenvalues below this fraction of the largest are treated as exact zeros
_RANK_TOL = 1e-13


def numerical_factor(K, max_rank: int = MAX_RANK):
    """Return L with L L^T = K if K is numerically of rank <= max_rank, else None."""
    w, v = sym_eigen(K)
    if w.size == 0 or w[0] <= 0:
        return np.zeros((K.shape[0], 1))
    keep = w > _RANK_TOL * w[0] * K.shape[0]
    if keep.sum() > max_rank or np.any(w[~keep] < -1e-8 * w[0]):
        return None
    if keep.sum() == 0:
        return np.zeros((K.shape[0], 1))
    return v[:, keep] * np.sqrt(w[keep])


def _half_signs(size: int, fix_first: bool) -> np.ndarray:
    free = size - 1 if fix_first else size
    codes = np.arange(2**free, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(free)) & 1).astype(np.int8)
    signs = 1 - 2 * bits
    if fix_first:
        signs = np.hstack([np.ones((signs.shape[0], 1), dtype=np.int8), signs])
    return signs


def solve_low_rank(K, L=None):
    """Minimize u^T K u over balanced u with u_0 = +1; returns (u, value) or None if K is not low rank."""
    K = as_symmetric(K, "K")
    n = K.shape[0]
    if L is None:
        L = numerical_factor(K)
        if L is None:
            return None
    h = n // 2
    A = _half_signs(h, fix_first=True)
    B = _half_signs(n - h, fix_first=False)
    SA = A @ L[:h]
    SB = B @ L[h:]
    cA = (A > 0).sum(axis=1)
    cB = (B > 0).sum(axis=1)
    best = (np.inf, None, None)
    for c in np.unique(cA):
        need = n // 2 - c
        right = np.flatnonzero(cB == need)
        if right.size == 0:
            continue
        left = np.flatnonzero(cA == c)
        tree = cKDTree(SB[right])
        dist, idx = tree.query(-SA[left], k=1)
        k = int(np.argmin(dist))
        if dist[k] < best[0]:
            best = (dist[k], left[k], right[idx[k]])
    u = np.concatenate([A[best[1]], B[best[2]]]).astype(float)
    return u, float(u @ K @ u)
