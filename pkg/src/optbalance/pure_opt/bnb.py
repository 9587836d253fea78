"""Depth-first branch-and-bound for min u^T K u over balanced sign vectors.

Two lower bounds are combined at every node.  With K = L L^T the objective is
sum_j (L^T u)_j^2, and each coordinate ranges over an interval that is easy to
bound once the number of remaining +1 entries is known (sorted prefix sums per
suffix of the branching order).  The second bound is the fixed-part quadratic plus
the smallest achievable linear cross term plus lambda_min of the free block times
its size.

The search is resumable: all DFS state lives in arrays owned by :class:`_Search`,
so the Python side can run it in node-limited slices and enforce a wall-clock
budget between slices.
"""

from __future__ import annotations

import time

import numba
import numpy as np

from ..errors import InputError
from ..linalg import as_symmetric, psd_factor

_INF = np.inf


@numba.njit(cache=True)
def _bound_interval(z, ps, tot, a, f):
    # ps[j, k] is the sum of the k largest entries of column j over the free set
    lb = 0.0
    for j in range(z.shape[0]):
        smax = 2.0 * ps[j, a] - tot[j]
        smin = tot[j] - 2.0 * ps[j, f - a]
        lo = z[j] + smin
        hi = z[j] + smax
        if lo > 0.0:
            lb += lo * lo
        elif hi < 0.0:
            lb += hi * hi
    return lb


@numba.njit(cache=True)
def _bound_eigen(q, g, order, t, n, a, lam, buf):
    f = n - t
    for k in range(f):
        buf[k] = g[order[t + k]]
    vals = np.sort(buf[:f])
    lin = 0.0
    for k in range(f):
        lin += vals[k] if k < a else -vals[k]
    return q + 2.0 * lin + lam * f


@numba.njit(cache=True)
def _cuts_ok(cdot, cneg, a, f, rhs):
    # smallest achievable c^T u given the fixed part and a remaining +1 entries
    for c in range(cdot.shape[0]):
        nneg = cneg[c]
        npos = f - nneg
        best = cdot[c] + 2 * a + nneg - npos - 4 * min(a, nneg)
        if best > rhs:
            return False
    return True


@numba.njit(cache=True)
def _run(K, L, order, PS, TOT, LAM, cuts, rhs, tol,
         depth, choice, first, u, g, z, q, apos, cdot, cneg,
         best, best_u, max_nodes):
    """Advance the DFS by at most ``max_nodes`` node expansions.

    Returns (finished, nodes_used).
    """
    n = K.shape[0]
    T = cuts.shape[0]
    buf = np.empty(n)
    nodes = 0
    while True:
        t = depth[0]
        if t == 0:
            return True, nodes
        if nodes >= max_nodes:
            return False, nodes
        # the node at depth t has variables order[:t] fixed; try its next child
        if t == n:
            if q[t] < best[0] - tol:
                ok = True
                for c in range(T):
                    if cdot[t, c] > rhs:
                        ok = False
                if ok:
                    best[0] = q[t]
                    for k in range(n):
                        best_u[k] = u[k]
            depth[0] = t - 1
            continue
        ch = choice[t]
        if ch >= 2:
            depth[0] = t - 1
            continue
        choice[t] = ch + 1
        i = order[t]
        if ch == 0:
            s = -1.0 if g[t, i] > 0 else 1.0
            first[t] = s
        else:
            s = -first[t]
        f = n - t
        a = apos[t]
        if s > 0 and a == 0:
            continue
        if s < 0 and a == f:
            continue
        nodes += 1
        t1 = t + 1
        a1 = a - 1 if s > 0 else a
        q[t1] = q[t] + 2.0 * s * g[t, i] + K[i, i]
        for k in range(n):
            g[t1, k] = g[t, k] + s * K[k, i]
        for j in range(L.shape[1]):
            z[t1, j] = z[t, j] + s * L[i, j]
        for c in range(T):
            cdot[t1, c] = cdot[t, c] + s * cuts[c, i]
            cneg[t1, c] = cneg[t, c] - (1 if cuts[c, i] < 0 else 0)
        apos[t1] = a1
        u[i] = s
        f1 = n - t1
        if T > 0 and not _cuts_ok(cdot[t1], cneg[t1], a1, f1, rhs):
            continue
        if f1 > 0:
            if _bound_interval(z[t1], PS[t1], TOT[t1], a1, f1) >= best[0] - tol:
                continue
            if _bound_eigen(q[t1], g[t1], order, t1, n, a1, LAM[t1], buf) >= best[0] - tol:
                continue
        choice[t1] = 0
        depth[0] = t1


def _suffix_tables(L, order):
    n, r = L.shape
    PS = np.zeros((n + 1, r, n + 1))
    TOT = np.zeros((n + 1, r))
    for t in range(n + 1):
        free = order[t:]
        if free.size == 0:
            continue
        vals = -np.sort(-L[free, :], axis=0)
        PS[t, :, 1 : free.size + 1] = np.cumsum(vals, axis=0).T
        TOT[t] = vals.sum(axis=0)
    return PS, TOT


def _suffix_lambda_min(K, order):
    n = K.shape[0]
    lam = np.zeros(n + 1)
    for t in range(n):
        free = order[t:]
        lam[t] = max(np.linalg.eigvalsh(K[np.ix_(free, free)])[0], 0.0)
    return lam


def greedy_local_search(K, rng: np.random.Generator | None = None, restarts: int = 4) -> np.ndarray:
    """Balanced sign vector from greedy construction followed by pairwise-swap descent."""
    n = K.shape[0]
    best_u, best_v = None, _INF
    starts = []
    # deterministic greedy start: place subjects in descending diagonal order
    order = np.argsort(-np.diag(K), kind="stable")
    u = np.zeros(n)
    g = np.zeros(n)
    npos = nneg = 0
    for i in order:
        if npos == n // 2:
            s = -1.0
        elif nneg == n // 2:
            s = 1.0
        else:
            s = -1.0 if g[i] > 0 else 1.0
        u[i] = s
        g += s * K[:, i]
        npos += s > 0
        nneg += s < 0
    starts.append(u)
    if rng is not None:
        for _ in range(restarts - 1):
            v = np.ones(n)
            v[rng.permutation(n)[: n // 2]] = -1.0
            starts.append(v)
    for u in starts:
        u = _swap_descent(K, u.copy())
        v = float(u @ K @ u)
        if v < best_v:
            best_u, best_v = u, v
    if best_u[0] < 0:
        best_u = -best_u
    return best_u


def _swap_descent(K, u):
    g = K @ u
    d = np.diag(K)
    while True:
        P = np.flatnonzero(u > 0)
        M = np.flatnonzero(u < 0)
        # change from swapping i in P with j in M
        delta = (-4.0 * g[P][:, None] + 4.0 * g[M][None, :]
                 + 4.0 * d[P][:, None] + 4.0 * d[M][None, :]
                 - 8.0 * K[np.ix_(P, M)])
        k = np.argmin(delta)
        if delta.flat[k] >= -1e-12 * (1.0 + abs(float(u @ g))):
            return u
        i, j = P[k // M.size], M[k % M.size]
        u[i], u[j] = -1.0, 1.0
        g += -2.0 * K[:, i] + 2.0 * K[:, j]


class _Search:
    def __init__(self, K, cuts=None, incumbent=None):
        K = as_symmetric(K, "K")
        n = K.shape[0]
        if n < 2 or n % 2:
            raise InputError("branch-and-bound needs an even number of subjects", module="pure_opt")
        self.K = np.ascontiguousarray(K)
        self.n = n
        L = psd_factor(K)
        if L.shape[1] == 0:
            L = np.zeros((n, 1))
        self.L = np.ascontiguousarray(L)
        rest = 1 + np.argsort(-np.diag(K)[1:], kind="stable")
        self.order = np.concatenate([[0], rest]).astype(np.int64)
        self.PS, self.TOT = _suffix_tables(self.L, self.order)
        self.LAM = _suffix_lambda_min(K, self.order)
        cuts = np.zeros((0, n)) if cuts is None or len(cuts) == 0 else np.asarray(cuts, dtype=float)
        self.cuts = np.ascontiguousarray(cuts)
        self.rhs = float(n - 4)
        self.tol = 1e-12 * float(np.abs(K).sum())
        T = self.cuts.shape[0]
        self.depth = np.array([1], dtype=np.int64)
        self.choice = np.zeros(n + 1, dtype=np.int64)
        self.first = np.zeros(n + 1)
        self.u = np.zeros(n)
        self.g = np.zeros((n + 1, n))
        self.z = np.zeros((n + 1, self.L.shape[1]))
        self.q = np.zeros(n + 1)
        self.apos = np.zeros(n + 1, dtype=np.int64)
        self.cdot = np.zeros((n + 1, T))
        self.cneg = np.zeros((n + 1, T), dtype=np.int64)
        # root: subject 0 fixed to +1
        self.u[0] = 1.0
        self.q[1] = K[0, 0]
        self.g[1] = K[:, 0]
        self.z[1] = self.L[0]
        self.apos[1] = n // 2 - 1
        for c in range(T):
            self.cdot[1, c] = self.cuts[c, 0]
            self.cneg[1, c] = int(np.sum(self.cuts[c, 1:] < 0))
        self.choice[1] = 0
        self.best = np.array([_INF])
        self.best_u = np.zeros(n)
        if incumbent is not None:
            inc = np.asarray(incumbent, dtype=float)
            if inc[0] < 0:
                inc = -inc
            if T == 0 or np.all(self.cuts @ inc <= self.rhs):
                self.best[0] = float(inc @ K @ inc)
                self.best_u[:] = inc
        self.nodes = 0
        self.finished = False

    def step(self, max_nodes: int) -> bool:
        done, used = _run(
            self.K, self.L, self.order, self.PS, self.TOT, self.LAM, self.cuts, self.rhs, self.tol,
            self.depth, self.choice, self.first, self.u, self.g, self.z, self.q, self.apos,
            self.cdot, self.cneg, self.best, self.best_u, int(max_nodes),
        )
        self.nodes += int(used)
        self.finished = bool(done)
        return self.finished


def solve_partition(K, cuts=None, time_budget: float | None = None, node_limit: int | None = None,
                    incumbent=None, chunk: int = 200_000):
    """Minimize u^T K u over balanced u with u_0 = +1 and optional cuts c^T u <= n - 4.

    Returns ``(u, value, nodes, optimal)``; ``u`` is None when the cuts leave nothing feasible.
    """
    search = _Search(K, cuts=cuts, incumbent=incumbent)
    start = time.perf_counter()
    while not search.finished:
        limit = chunk if node_limit is None else min(chunk, node_limit - search.nodes)
        if limit <= 0:
            break
        search.step(limit)
        if time_budget is not None and time.perf_counter() - start > time_budget:
            break
    if not np.isfinite(search.best[0]):
        return None, _INF, search.nodes, search.finished
    u = search.best_u.copy()
    return u, float(u @ search.K @ u), search.nodes, search.finished
