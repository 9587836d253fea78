"""Pure-strategy optimizers: exhaustive search and exact binary quadratic solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..assignments import ENUMERATION_LIMIT, count_canonical, enumerate_canonical, iter_canonical
from ..errors import InputError, InstanceTooLargeError
from ..imbalance import batch_mp_finite_q, batch_mp_quadratic, batch_mp_squared
from ..linalg import as_symmetric
from ..structures import (
    FiniteDimQ,
    LInfinity,
    Lipschitz,
    LipschitzCapped,
    Structure,
    as_covariates,
    basis_matrix,
    structure_gram,
)
from .bnb import greedy_local_search, solve_partition
from .mitm import MAX_N as MITM_MAX_N
from .mitm import numerical_factor, solve_low_rank

# exhaustive enumeration is the default quadratic solver up to this many subjects
EXHAUSTIVE_MAX_N = 16


@dataclass
class OptimizerResult:
    """Optimal assignments (labels 0..m-1, one row each) and the squared metric value.

    ``complete`` is True when every optimum is listed (exhaustive solvers); otherwise
    the rows are representatives and ``optimal`` says whether optimality was proved.
    """

    assignments: np.ndarray
    value: float
    nodes: int
    solver: str
    optimal: bool = True
    complete: bool = False
    m: int = 2
    meta: dict = field(default_factory=dict)

    @property
    def assignment(self) -> np.ndarray:
        return self.assignments[0]

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "solver": self.solver,
            "nodes": self.nodes,
            "optimal": self.optimal,
            "complete": self.complete,
            "assignments": (self.assignments + 1).tolist(),
        }


def _tie_tol(best: float, ref: float) -> float:
    return 1e-9 * abs(best) + 1e-12 * ref


def exhaustive_search(value_fn, n: int, m: int = 2, limit: int = ENUMERATION_LIMIT, ref: float = 0.0):
    """Minimize ``value_fn`` over every canonical balanced assignment, keeping all ties.

    ``value_fn`` maps an ``(N, n)`` label block to ``N`` squared metric values; ``ref``
    is a magnitude scale for the rounding tolerance on ties.
    """
    total = count_canonical(n, m)
    if total > limit:
        raise InstanceTooLargeError(f"{total} assignments exceed the enumeration limit {limit}")
    chunks = [enumerate_canonical(n, m, limit)] if total <= 200_000 else iter_canonical(n, m)
    best = np.inf
    top = 0.0
    keep: list[np.ndarray] = []
    keep_vals: list[np.ndarray] = []
    for block in chunks:
        vals = np.asarray(value_fn(block), dtype=float)
        top = max(top, float(vals.max()))
        low = float(vals.min())
        if low < best:
            best = low
        tol = _tie_tol(best, max(ref, top))
        sel = vals <= best + tol
        if sel.any():
            keep.append(np.array(block[sel], dtype=np.int64))
            keep_vals.append(vals[sel])
    vals = np.concatenate(keep_vals)
    rows = np.concatenate(keep)
    tol = _tie_tol(best, max(ref, top))
    sel = vals <= best + tol
    return rows[sel], float(best), total


def exhaustive_pure_opt(structure: Structure, X, m: int = 2, limit: int = ENUMERATION_LIMIT) -> OptimizerResult:
    """All minimizers of the squared pure-strategy metric by full enumeration."""
    if not (isinstance(structure, (Lipschitz, LipschitzCapped)) and structure.metric.kind == "custom"):
        X = as_covariates(X)
        n = X.shape[0]
    else:
        n = structure.metric.matrix.shape[0]
    if n % m:
        raise InputError(f"n={n} is not divisible by m={m}", module="pure_opt")
    cache: dict = {}
    ref = 0.0
    if isinstance(structure, LInfinity):
        ref = 4.0
    rows, best, total = exhaustive_search(
        lambda block: batch_mp_squared(block, structure, X, m, cache), n, m, limit, ref
    )
    return OptimizerResult(rows, best, total, "exhaustive", optimal=True, complete=True, m=m)


def _signs_to_labels(u) -> np.ndarray:
    return np.where(np.asarray(u) > 0, 0, 1).astype(np.int64)[None, :]


def bb_partition_quadratic(K, time_budget: float | None = None, node_limit: int | None = None, cuts=None) -> OptimizerResult:
    """Branch-and-bound for min u^T K u over balanced signs; value reported as (4/n^2) u^T K u."""
    K = as_symmetric(K, "K")
    n = K.shape[0]
    u, val, nodes, done = solve_partition(
        K, cuts=cuts, time_budget=time_budget, node_limit=node_limit, incumbent=greedy_local_search(K)
    )
    if u is None:
        raise InputError("no balanced assignment satisfies the cuts", module="pure_opt")
    return OptimizerResult(_signs_to_labels(u), 4.0 * val / n**2, nodes, "branch_and_bound", optimal=done)


def quadratic_pure_opt(K, time_budget: float | None = None, node_limit: int | None = None,
                       method: str = "auto") -> OptimizerResult:
    """Exact two-group quadratic partition with solver chosen by size and rank.

    ``auto`` enumerates for n <= 16 (all ties returned), uses the meet-in-the-middle
    solver when K is numerically low rank, and falls back to branch-and-bound.
    """
    K = as_symmetric(K, "K")
    n = K.shape[0]
    if n % 2:
        raise InputError("two equal groups need an even number of subjects", module="pure_opt")
    if method == "auto":
        if n <= EXHAUSTIVE_MAX_N:
            method = "exhaustive"
        elif n <= MITM_MAX_N and numerical_factor(K) is not None:
            method = "mitm"
        else:
            method = "bnb"
    if method == "exhaustive":
        ref = 4.0 / n**2 * float(np.abs(K).sum())
        rows, best, total = exhaustive_search(lambda b: batch_mp_quadratic(b, K, 2), n, 2, ref=ref)
        return OptimizerResult(rows, best, total, "exhaustive", optimal=True, complete=True)
    if method == "mitm":
        L = numerical_factor(K)
        if L is None:
            raise InputError("matrix is not numerically low rank", module="pure_opt")
        u, val = solve_low_rank(K, L)
        return OptimizerResult(_signs_to_labels(u), 4.0 * val / n**2, 0, "meet_in_middle")
    if method == "bnb":
        return bb_partition_quadratic(K, time_budget=time_budget, node_limit=node_limit)
    raise InputError(f"unknown method {method!r}", module="pure_opt")


def top_t_solutions(K, T: int, time_budget: float | None = None) -> list[tuple[np.ndarray, float]]:
    """The T best sign vectors (u_0 = +1), each found under cuts u_s^T u <= n - 4 for earlier u_s.

    Returns ``(u, u^T K u)`` pairs in nondecreasing order; fewer than T if the cuts
    exhaust the feasible set.
    """
    if T < 1:
        raise InputError("T must be at least 1", module="pure_opt")
    K = as_symmetric(K, "K")
    out: list[tuple[np.ndarray, float]] = []
    for _ in range(T):
        cuts = np.array([u for u, _ in out]) if out else None
        u, val, _, _ = solve_partition(K, cuts=cuts, time_budget=time_budget)
        if u is None:
            break
        out.append((u, val))
    return out


def finite_q_pure_opt(Phi, q: float, m: int = 2, **solver_opts) -> OptimizerResult:
    """Optimal assignment for the moment-matching metric with dual norm of q."""
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim == 1:
        Phi = Phi[:, None]
    n = Phi.shape[0]
    if q == 2 and m == 2:
        return quadratic_pure_opt(Phi @ Phi.T, **solver_opts)
    ref = (2.0 * np.abs(Phi).sum() / (n // m)) ** 2
    rows, best, total = exhaustive_search(
        lambda block: batch_mp_finite_q(block, Phi, q, m) ** 2, n, m, ref=ref
    )
    return OptimizerResult(rows, best, total, "exhaustive", optimal=True, complete=True, m=m)


def structure_pure_opt(structure: Structure, X, m: int = 2, **solver_opts) -> OptimizerResult:
    """Dispatch to the exact solver suited to a structure."""
    if m == 2:
        K = structure_gram(structure, X)
        if K is not None:
            return quadratic_pure_opt(K, **solver_opts)
        if isinstance(structure, FiniteDimQ):
            return finite_q_pure_opt(basis_matrix(structure.basis, X), structure.q, m)
    return exhaustive_pure_opt(structure, X, m)
