"""Non-bipartite matchings on distance matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from ..errors import InputError


@dataclass
class Matching:
    """Disjoint pairs (0-based subject indices), their total distance, and unmatched subjects."""

    pairs: np.ndarray
    weight: float
    unmatched: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def to_dict(self) -> dict:
        return {
            "pairs": (self.pairs + 1).tolist(),
            "weight": self.weight,
            "unmatched": (self.unmatched + 1).tolist(),
        }


def _check(D) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InputError("distance matrix must be square", module="pure_opt")
    if D.shape[0] % 2:
        raise InputError("a perfect matching needs an even number of subjects", module="pure_opt")
    return D


def _sorted_pairs(pairs) -> np.ndarray:
    pairs = np.array([sorted(p) for p in pairs], dtype=np.int64).reshape(-1, 2)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))] if pairs.size else pairs


def blossom_matching(D) -> Matching:
    """Exact minimum-weight perfect matching (Edmonds' blossom algorithm via networkx)."""
    D = _check(D)
    n = D.shape[0]
    if n == 2:
        return Matching(np.array([[0, 1]]), float(D[0, 1]))
    G = nx.Graph()
    iu, ju = np.triu_indices(n, 1)
    G.add_weighted_edges_from(zip(iu.tolist(), ju.tolist(), D[iu, ju].tolist()))
    pairs = _sorted_pairs(nx.min_weight_matching(G))
    if pairs.shape[0] != n // 2:
        raise InputError("matching is not perfect", module="pure_opt")
    return Matching(pairs, float(D[pairs[:, 0], pairs[:, 1]].sum()))


def brute_force_matching(D) -> Matching:
    """Minimum-weight perfect matching by trying every pairing (n <= 12)."""
    D = _check(D)
    n = D.shape[0]
    if n > 12:
        raise InputError("brute-force matching is limited to 12 subjects", module="pure_opt")
    best = [np.inf, None]

    def rec(left, acc, cost):
        if cost >= best[0]:
            return
        if not left:
            best[0], best[1] = cost, list(acc)
            return
        i = left[0]
        for k in range(1, len(left)):
            j = left[k]
            acc.append((i, j))
            rec(left[1:k] + left[k + 1 :], acc, cost + D[i, j])
            acc.pop()

    rec(list(range(n)), [], 0.0)
    return Matching(_sorted_pairs(best[1]), float(best[0]))


def all_min_matchings(D, tol: float = 1e-9) -> list[Matching]:
    """Every perfect matching within ``tol`` of the minimum weight (n <= 12)."""
    D = _check(D)
    target = brute_force_matching(D).weight
    out = []

    def rec(left, acc, cost):
        if cost > target + tol:
            return
        if not left:
            out.append(Matching(_sorted_pairs(acc), cost))
            return
        i = left[0]
        for k in range(1, len(left)):
            j = left[k]
            acc.append((i, j))
            rec(left[1:k] + left[k + 1 :], acc, cost + D[i, j])
            acc.pop()

    rec(list(range(D.shape[0])), [], 0.0)
    return out


def penalty_matching(D, delta0: float) -> Matching:
    """Minimize the matched distance plus ``delta0`` per unmatched subject.

    Pairing two unmatched subjects costs 2*delta0, so this is a perfect matching on
    min(D, 2*delta0) whose pairs farther apart than 2*delta0 are dissolved.
    """
    if not delta0 > 0:
        raise InputError("delta0 must be positive", module="pure_opt")
    D = _check(D)
    full = blossom_matching(np.minimum(D, 2.0 * delta0))
    far = D[full.pairs[:, 0], full.pairs[:, 1]] > 2.0 * delta0
    kept = full.pairs[~far]
    unmatched = np.sort(full.pairs[far].ravel())
    weight = float(D[kept[:, 0], kept[:, 1]].sum())
    return Matching(kept, weight, unmatched)


def penalty_cost(m: Matching, delta0: float) -> float:
    return m.weight + delta0 * m.unmatched.size
