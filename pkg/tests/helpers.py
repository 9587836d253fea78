"""Shared test utilities and independent brute-force oracles."""

import itertools

import numpy as np

DATA_DIR = __import__("pathlib").Path(__file__).parent / "data"
DIABETES = DATA_DIR / "diabetes.tab.txt"


def random_psd(rng, n, rank=None):
    r = n if rank is None else rank
    B = rng.standard_normal((n, r))
    return B @ B.T


def all_balanced_signs(n):
    """Every balanced sign vector (both orientations), by brute force over subsets."""
    out = []
    for idx in itertools.combinations(range(n), n // 2):
        u = -np.ones(n)
        u[list(idx)] = 1.0
        out.append(u)
    return np.array(out)


def all_partitions_labels(n, m):
    """Every balanced labeled assignment via itertools (independent of the package enumerator)."""
    base = np.repeat(np.arange(m), n // m)
    return np.array(sorted(set(itertools.permutations(base))))


def brute_min_quadratic(K):
    U = all_balanced_signs(K.shape[0])
    vals = np.einsum("ri,ij,rj->r", U, K, U)
    return vals.min(), U[np.isclose(vals, vals.min(), rtol=1e-9, atol=1e-9)]
