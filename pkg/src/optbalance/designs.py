"""Design construction: every design is returned as a samplable DesignDistribution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .assignments import count_canonical, enumerate_canonical
from .distribution import DesignDistribution
from .errors import InputError, UnsupportedError
from .imbalance import batch_mp_quadratic, p_matrix_cr
from .mixed_opt import algorithm1_design, algorithm3_design
from .pure_opt import (
    blocking_sampler,
    blocking_support,
    blossom_matching,
    exhaustive_pure_opt,
    finite_q_pure_opt,
    penalty_matching,
    quadratic_pure_opt,
)
from .structures import (
    DistanceMetric,
    FiniteDimQ,
    Kernel,
    LInfinity,
    Lipschitz,
    LipschitzCapped,
    Structure,
    as_covariates,
    basis_matrix,
    gram_matrix,
    mahalanobis_gram,
    pairwise_distances,
    structure_from_dict,
    structure_gram,
    structure_to_dict,
)

# explicit supports are materialized up to this many canonical assignments
EXPLICIT_LIMIT = 20_000
# exhaustive search is used for non-quadratic pure designs up to this size
EXHAUSTIVE_DESIGN_N = 16
REJECTION_CAP = 10**6


# ---------------------------------------------------------------------------
# specifications


@dataclass(frozen=True)
class CompleteRandomization:
    name = "complete_randomization"


@dataclass(frozen=True)
class Blocking:
    """Exact-match blocking, optionally after coarsening (``rank_bins`` or ``orthant``)."""

    coarsen: str | None = None
    bins: int = 8
    name = "blocking"


@dataclass(frozen=True)
class PairwiseMatching:
    metric: DistanceMetric = DistanceMetric("mahalanobis")
    name = "pairwise_matching"


@dataclass(frozen=True)
class Rerandomization:
    acceptance_prob: float = 0.01
    n_mc: int = 10_000
    exhaustive: bool = False
    name = "rerandomization"

    def __post_init__(self):
        if not 0 < self.acceptance_prob <= 1:
            raise InputError("acceptance_prob must lie in (0, 1]", module="designs")


@dataclass(frozen=True)
class PureOptimal:
    structure: Structure
    time_budget: float | None = None
    name = "pure_optimal"


@dataclass(frozen=True)
class MixedOptimal:
    kernel: Kernel = Kernel.gaussian()
    T: int = 10
    rho: float = math.inf
    method: str = "top_t"
    name = "mixed_optimal"


DesignSpec = Union[CompleteRandomization, Blocking, PairwiseMatching, Rerandomization, PureOptimal, MixedOptimal]


def design_from_dict(d: dict) -> DesignSpec:
    kind = d.get("type")
    if kind == "complete_randomization":
        return CompleteRandomization()
    if kind == "blocking":
        return Blocking(d.get("coarsen"), int(d.get("bins", 8)))
    if kind == "pairwise_matching":
        return PairwiseMatching(DistanceMetric.from_dict(d.get("metric", {})))
    if kind == "rerandomization":
        return Rerandomization(float(d.get("acceptance_prob", 0.01)), int(d.get("n_mc", 10_000)),
                               bool(d.get("exhaustive", False)))
    if kind == "pure_optimal":
        return PureOptimal(structure_from_dict(d["structure"]), d.get("time_budget"))
    if kind == "mixed_optimal":
        rho = d.get("rho", "inf")
        rho = math.inf if isinstance(rho, str) and rho.lower().startswith("inf") else float(rho)
        return MixedOptimal(Kernel.from_dict(d.get("kernel", {"kind": "gaussian"})), int(d.get("T", 10)), rho,
                            d.get("method", "top_t"))
    raise InputError(f"unknown design type {kind!r}", module="designs")


def design_to_dict(spec: DesignSpec) -> dict:
    out: dict = {"type": spec.name}
    if isinstance(spec, Blocking):
        out.update(coarsen=spec.coarsen, bins=spec.bins)
    elif isinstance(spec, PairwiseMatching):
        out["metric"] = spec.metric.to_dict()
    elif isinstance(spec, Rerandomization):
        out.update(acceptance_prob=spec.acceptance_prob, n_mc=spec.n_mc, exhaustive=spec.exhaustive)
    elif isinstance(spec, PureOptimal):
        out["structure"] = structure_to_dict(spec.structure)
        if spec.time_budget is not None:
            out["time_budget"] = spec.time_budget
    elif isinstance(spec, MixedOptimal):
        out.update(kernel=spec.kernel.to_dict(), T=spec.T, rho="inf" if math.isinf(spec.rho) else spec.rho,
                   method=spec.method)
    return out


# ---------------------------------------------------------------------------
# coarsening


def coarsen_rank_bins(X, bins: int) -> np.ndarray:
    """Equal-count consecutive intervals of a single covariate, coded 0..bins-1."""
    X = as_covariates(X)
    if X.shape[1] != 1:
        raise InputError("rank binning needs a single covariate", module="designs")
    n = X.shape[0]
    if n % bins:
        raise InputError(f"n={n} is not divisible into {bins} equal bins", module="designs")
    ranks = np.argsort(np.argsort(X[:, 0], kind="stable"), kind="stable")
    return (ranks // (n // bins)).astype(float)[:, None]


def coarsen_orthant(X) -> np.ndarray:
    """Sign pattern of each row (d two-level factors)."""
    return (as_covariates(X) > 0).astype(float)


def _coarsen(spec: Blocking, X) -> np.ndarray:
    if spec.coarsen is None:
        return as_covariates(X)
    if spec.coarsen == "rank_bins":
        return coarsen_rank_bins(X, spec.bins)
    if spec.coarsen == "orthant":
        return coarsen_orthant(X)
    raise InputError(f"unknown coarsening {spec.coarsen!r}", module="designs")


# ---------------------------------------------------------------------------
# samplers


def cr_sampler(n: int, m: int = 2):
    p = n // m

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        ranks = np.argsort(rng.random((size, n)), axis=1)
        out = np.empty((size, n), dtype=np.int64)
        np.put_along_axis(out, ranks, np.repeat(np.arange(m), p)[None, :].repeat(size, axis=0), axis=1)
        return out

    return sample


def _pairs_sampler(pairs: np.ndarray, n: int, rest: np.ndarray | None = None):
    """Split each pair at random; subjects in ``rest`` are completely randomized."""
    rest = np.zeros(0, dtype=np.int64) if rest is None else rest

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty((size, n), dtype=np.int64)
        flip = rng.integers(0, 2, size=(size, pairs.shape[0]))
        out[:, pairs[:, 0]] = flip
        out[:, pairs[:, 1]] = 1 - flip
        if rest.size:
            out[:, rest] = cr_sampler(rest.size)(rng, size)
        return out

    return sample


def _pairs_support(pairs: np.ndarray, n: int) -> np.ndarray:
    k = pairs.shape[0]
    codes = np.arange(2 ** (k - 1), dtype=np.int64)
    bits = (codes[:, None] >> np.arange(k - 1)) & 1
    flips = np.hstack([np.zeros((codes.size, 1), dtype=np.int64), bits])
    out = np.empty((codes.size, n), dtype=np.int64)
    out[:, pairs[:, 0]] = flips
    out[:, pairs[:, 1]] = 1 - flips
    # canonical: subject 0 in group 0
    return np.where(out[:, :1] == 0, out, 1 - out)


def _pairs_pmatrix(pairs: np.ndarray, n: int) -> np.ndarray:
    P = np.eye(n)
    P[pairs[:, 0], pairs[:, 1]] = -1.0
    P[pairs[:, 1], pairs[:, 0]] = -1.0
    return P


# ---------------------------------------------------------------------------
# re-randomization


def rerandomization_threshold(X, acceptance_prob: float, n_mc: int = 10_000, rng: np.random.Generator | None = None,
                              exhaustive: bool = False) -> float:
    """Acceptance threshold on the squared Mahalanobis imbalance under complete randomization.

    The empirical ``acceptance_prob`` quantile of ``n_mc`` random draws, or of the exact
    distribution over all balanced partitions when ``exhaustive`` is set.
    """
    if not 0 < acceptance_prob <= 1:
        raise InputError("acceptance_prob must lie in (0, 1]", module="designs")
    if acceptance_prob == 1:
        return math.inf
    X = as_covariates(X)
    n = X.shape[0]
    K = mahalanobis_gram(X)
    if exhaustive:
        vals = batch_mp_quadratic(enumerate_canonical(n, 2), K, 2)
    else:
        if n_mc < 100:
            raise InputError("n_mc must be at least 100", module="designs")
        if rng is None:
            raise InputError("a random generator is required for the Monte Carlo threshold", module="designs")
        vals = batch_mp_quadratic(cr_sampler(n)(rng, n_mc), K, 2)
    return float(np.quantile(vals, acceptance_prob, method="inverted_cdf"))


def _rerandomization(spec: Rerandomization, X, rng) -> DesignDistribution:
    X = as_covariates(X)
    n = X.shape[0]
    t = rerandomization_threshold(X, spec.acceptance_prob, spec.n_mc, rng, spec.exhaustive)
    meta = {"threshold": t, "acceptance_prob": spec.acceptance_prob, "capped": False}
    if math.isinf(t):
        return _complete_randomization(n, 2, name="rerandomization", meta=meta)
    K = mahalanobis_gram(X)
    support = None
    if count_canonical(n, 2) <= EXPLICIT_LIMIT:
        rows = enumerate_canonical(n, 2)
        vals = batch_mp_quadratic(rows, K, 2)
        support = np.array(rows[vals <= t], dtype=np.int64)
    draw_cr = cr_sampler(n)

    def sample(r: np.random.Generator, size: int) -> np.ndarray:
        if support is not None:
            return support[r.integers(0, support.shape[0], size)]
        out = []
        got = 0
        drawn = 0
        best_row, best_val = None, math.inf
        batch = int(min(max(4 * size / spec.acceptance_prob, 1000), 200_000))
        while got < size:
            if drawn >= REJECTION_CAP * size:
                meta["capped"] = True
                out.append(np.repeat(best_row[None, :], size - got, axis=0))
                break
            rows = draw_cr(r, batch)
            drawn += batch
            vals = batch_mp_quadratic(rows, K, 2)
            k = int(np.argmin(vals))
            if vals[k] < best_val:
                best_val, best_row = vals[k], rows[k]
            ok = rows[vals <= t][: size - got]
            out.append(ok)
            got += ok.shape[0]
        return np.concatenate(out)

    return DesignDistribution(n=n, m=2, support=support, sampler=sample, name="rerandomization", meta=meta)


# ---------------------------------------------------------------------------
# builders


def _complete_randomization(n: int, m: int, name="complete_randomization", meta=None) -> DesignDistribution:
    support = enumerate_canonical(n, m) if count_canonical(n, m) <= EXPLICIT_LIMIT else None
    return DesignDistribution(n=n, m=m, support=support, sampler=cr_sampler(n, m), name=name,
                              meta=meta or {}, p_matrix=p_matrix_cr(n, m))


def _blocking(Xc, name="blocking", meta=None) -> DesignDistribution:
    n = Xc.shape[0]
    try:
        support = blocking_support(Xc, limit=EXPLICIT_LIMIT)
    except InputError:
        support = None
    return DesignDistribution(n=n, m=2, support=support, sampler=blocking_sampler(Xc), name=name, meta=meta or {})


def _matching(D, name="pairwise_matching", meta=None) -> DesignDistribution:
    n = D.shape[0]
    match = blossom_matching(D)
    support = _pairs_support(match.pairs, n) if n // 2 <= 14 else None
    meta = dict(meta or {}, pairs=match.pairs, weight=match.weight)
    return DesignDistribution(n=n, m=2, support=support, sampler=_pairs_sampler(match.pairs, n), name=name,
                              meta=meta, p_matrix=_pairs_pmatrix(match.pairs, n))


def _from_result(res, n, m, name, meta) -> DesignDistribution:
    meta = dict(meta, value=res.value, solver=res.solver, optimal=res.optimal, complete=res.complete)
    support = np.asarray(res.assignments, dtype=np.int64)
    return DesignDistribution(n=n, m=m, support=support, name=name, meta=meta)


def _pure_optimal(spec: PureOptimal, X, m: int) -> DesignDistribution:
    s = spec.structure
    name = f"pure_optimal_{s.name}"
    meta = {"structure": s.name}
    if isinstance(s, (Lipschitz, LipschitzCapped)) and s.metric.kind == "custom":
        n = s.metric.matrix.shape[0]
    else:
        X = as_covariates(X)
        n = X.shape[0]
    if n % m:
        raise InputError(f"n={n} is not divisible by m={m}", module="designs")
    if m == 2:
        K = structure_gram(s, X)
        if K is not None:
            res = quadratic_pure_opt(K, time_budget=spec.time_budget)
            return _from_result(res, n, m, name, meta)
        if n > EXHAUSTIVE_DESIGN_N:
            if isinstance(s, LInfinity):
                return _blocking(X, name=name, meta=meta)
            if isinstance(s, Lipschitz):
                return _matching(pairwise_distances(s.metric, X), name=name, meta=meta)
            if isinstance(s, LipschitzCapped):
                D = pairwise_distances(s.metric, X)
                match = penalty_matching(D, s.delta0)
                meta.update(pairs=match.pairs, unmatched=match.unmatched)
                return DesignDistribution(n=n, m=2, sampler=_pairs_sampler(match.pairs, n, match.unmatched),
                                          name=name, meta=meta)
            if isinstance(s, FiniteDimQ):
                res = finite_q_pure_opt(basis_matrix(s.basis, X), s.q, m)
                return _from_result(res, n, m, name, meta)
    return _from_result(exhaustive_pure_opt(s, X, m), n, m, name, meta)


def build_design(spec: DesignSpec, X, m: int = 2, rng: np.random.Generator | None = None) -> DesignDistribution:
    """Build the design distribution for covariates X."""
    if isinstance(spec, PureOptimal):
        return _pure_optimal(spec, X, m)
    X = as_covariates(X)
    n = X.shape[0]
    if n % m:
        raise InputError(f"n={n} is not divisible by m={m}", module="designs")
    if isinstance(spec, CompleteRandomization):
        return _complete_randomization(n, m)
    if m != 2:
        raise UnsupportedError(f"{spec.name} is defined for two treatments", module="designs")
    if isinstance(spec, Blocking):
        return _blocking(_coarsen(spec, X), meta={"coarsen": spec.coarsen})
    if isinstance(spec, PairwiseMatching):
        return _matching(pairwise_distances(spec.metric, X))
    if isinstance(spec, Rerandomization):
        return _rerandomization(spec, X, rng if rng is not None else np.random.default_rng())
    if isinstance(spec, MixedOptimal):
        K = gram_matrix(spec.kernel, X)
        if spec.method == "top_t":
            return algorithm3_design(K, spec.T, spec.rho)
        if spec.method == "relaxation":
            return algorithm1_design(K, spec.rho)
        raise InputError(f"unknown mixed method {spec.method!r}", module="designs")
    raise InputError(f"unknown design spec {spec!r}", module="designs")


def sample_assignment(sigma: DesignDistribution, rng: np.random.Generator) -> np.ndarray:
    return sigma.sample(rng)


def sample_assignments(sigma: DesignDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    return sigma.sample(rng, size)
