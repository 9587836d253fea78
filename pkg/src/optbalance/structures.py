"""Kernels, distance metrics, bases and the structure choices that induce imbalance metrics.

A *structure* is the assumption placed on how outcomes depend on covariates.  Each
structure class below selects one imbalance metric in :mod:`optbalance.imbalance`
and one solver family in :mod:`optbalance.pure_opt`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import InputError, SingularCovarianceError
from .linalg import as_symmetric, sym_eigen

RIDGE = 1e-8
METRIC_TOL = 1e-9


def as_covariates(X) -> np.ndarray:
    """Coerce to an ``(n, d)`` float array with finite entries."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"covariates must be 2-D, got shape {X.shape}", module="structures")
    if not np.all(np.isfinite(X)):
        raise InputError("covariates contain non-finite values", module="structures")
    return X


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class Kernel:
    """Reproducing kernel.

    ``kind`` is one of ``linear``, ``polynomial``, ``gaussian``, ``exponential``.
    ``param`` is the degree ``s`` for polynomial, the bandwidth for gaussian and the
    scale for exponential; it is ignored for linear.
    """

    kind: str = "linear"
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "gaussian", "exponential"):
            raise InputError(f"unknown kernel kind {self.kind!r}", module="structures")
        if self.kind == "polynomial":
            if self.param < 1 or int(self.param) != self.param:
                raise InputError("polynomial degree must be a positive integer", module="structures")
        elif self.kind != "linear" and not self.param > 0:
            raise InputError(f"{self.kind} kernel parameter must be positive", module="structures")

    @classmethod
    def polynomial(cls, s: int = 2) -> "Kernel":
        return cls("polynomial", float(s))

    @classmethod
    def gaussian(cls, bandwidth: float = 1.0) -> "Kernel":
        return cls("gaussian", float(bandwidth))

    @classmethod
    def exponential(cls, scale: float = 1.0) -> "Kernel":
        return cls("exponential", float(scale))

    def _from_products(self, inner, sqdist):
        if self.kind == "linear":
            return inner
        if self.kind == "polynomial":
            s = self.param
            return (1.0 + inner / s) ** int(s)
        if self.kind == "gaussian":
            return np.exp(-sqdist / self.param**2)
        return np.exp(inner / self.param)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        key = {"polynomial": "degree", "gaussian": "bandwidth", "exponential": "scale"}.get(self.kind)
        if key:
            out[key] = int(self.param) if self.kind == "polynomial" else self.param
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Kernel":
        kind = d.get("kind", "linear")
        for key in ("degree", "s", "bandwidth", "scale", "param"):
            if key in d:
                return cls(kind, float(d[key]))
        return cls(kind, 2.0 if kind == "polynomial" else 1.0)


def kernel_eval(k: Kernel, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {y.shape}", module="structures")
    diff = x - y
    return float(k._from_products(float(x @ y), float(diff @ diff)))


def gram_matrix(k: Kernel, X) -> np.ndarray:
    X = as_covariates(X)
    inner = X @ X.T
    sq = np.diag(inner)
    sqdist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * inner, 0.0)
    np.fill_diagonal(sqdist, 0.0)
    return as_symmetric(k._from_products(inner, sqdist))


# ---------------------------------------------------------------------------
# covariance helpers


def sample_covariance(X) -> np.ndarray:
    """Sample covariance with the 1/n normalization used throughout the package."""
    X = as_covariates(X)
    Z = X - X.mean(axis=0)
    return Z.T @ Z / X.shape[0]


def _inverse_sqrt_covariance(X, ridge: bool) -> np.ndarray:
    cov = sample_covariance(X)
    d = cov.shape[0]
    w, v = sym_eigen(cov)
    scale = float(np.trace(cov)) / d
    singular = scale <= 0 or w[-1] <= 1e-12 * max(scale, 1e-300)
    if singular:
        if not ridge or scale <= 0:
            raise SingularCovarianceError("sample covariance is singular")
        cov = cov + RIDGE * scale * np.eye(d)
        w, v = sym_eigen(cov)
    return (v / np.sqrt(w)) @ v.T


def whiten(X, ridge: bool = True) -> np.ndarray:
    """Centre and rotate so the sample covariance becomes the identity."""
    X = as_covariates(X)
    return (X - X.mean(axis=0)) @ _inverse_sqrt_covariance(X, ridge)


def normalize_covariates(X, divisor: float = 1.0, ridge: bool = False) -> np.ndarray:
    """Zero sample mean, identity sample covariance, then divide every entry by ``divisor``."""
    X = as_covariates(X)
    if X.shape[0] <= X.shape[1]:
        raise SingularCovarianceError(
            f"need more subjects than covariates to normalize (n={X.shape[0]}, d={X.shape[1]})"
        )
    return whiten(X, ridge=ridge) / divisor


# ---------------------------------------------------------------------------
# distance metrics


@dataclass(frozen=True)
class DistanceMetric:
    """``euclidean``, ``mahalanobis`` (sample covariance of X) or ``custom`` (precomputed)."""

    kind: str = "mahalanobis"
    matrix: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("euclidean", "mahalanobis", "custom"):
            raise InputError(f"unknown metric kind {self.kind!r}", module="structures")
        if self.kind == "custom":
            if self.matrix is None:
                raise InputError("custom metric needs a distance matrix", module="structures")
            object.__setattr__(self, "matrix", validate_distance_matrix(self.matrix))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "custom":
            out["matrix"] = self.matrix.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DistanceMetric":
        kind = d.get("kind", "mahalanobis")
        matrix = d.get("matrix")
        return cls(kind, None if matrix is None else np.asarray(matrix, dtype=float))


def validate_distance_matrix(D, tol: float = METRIC_TOL) -> np.ndarray:
    """Check the metric axioms (triangle inequality to ``tol``)."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InputError("distance matrix must be square", module="structures")
    if not np.all(np.isfinite(D)):
        raise InputError("distance matrix has non-finite entries", module="structures")
    if np.any(D < 0):
        raise InputError("distance matrix has negative entries", module="structures")
    if np.any(np.diag(D) != 0):
        raise InputError("distance matrix must have a zero diagonal", module="structures")
    if not np.allclose(D, D.T, atol=tol, rtol=0):
        raise InputError("distance matrix is not symmetric", module="structures")
    D = 0.5 * (D + D.T)
    # D_ij <= D_ik + D_kj for all k
    through = (D[:, :, None] + D[None, :, :]).min(axis=1)
    if np.any(D > through + tol * (1.0 + D.max())):
        raise InputError("distance matrix violates the triangle inequality", module="structures")
    return D


def pairwise_distances(metric: DistanceMetric, X=None, ridge: bool = True) -> np.ndarray:
    if metric.kind == "custom":
        if X is not None and as_covariates(X).shape[0] != metric.matrix.shape[0]:
            raise InputError("custom distance matrix size does not match covariates", module="structures")
        return metric.matrix.copy()
    X = as_covariates(X)
    Z = whiten(X, ridge=ridge) if metric.kind == "mahalanobis" else X
    sq = np.einsum("ij,ij->i", Z, Z)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * Z @ Z.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    D = np.sqrt(d2)
    return 0.5 * (D + D.T)


def caliper_metric(D, delta0: float) -> np.ndarray:
    """Truncated metric max(D, delta0) off the diagonal; exact matches keep distance 0."""
    D = np.asarray(D, dtype=float)
    out = np.where(D > 0, np.maximum(D, delta0), 0.0)
    np.fill_diagonal(out, 0.0)
    return out


# ---------------------------------------------------------------------------
# finite-dimensional bases


@dataclass(frozen=True)
class BasisSet:
    """Named functions evaluated row-wise; each callable maps an ``(n, d)`` array to ``(n,)``."""

    names: tuple[str, ...]
    functions: tuple[Callable[[np.ndarray], np.ndarray], ...] = field(compare=False)
    spec: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.names) == 0 or len(self.names) != len(self.functions):
            raise InputError("basis must have at least one named function", module="structures")

    def __len__(self):
        return len(self.names)

    def to_dict(self) -> dict:
        if self.spec is None:
            raise InputError("only monomial bases serialize", module="structures")
        return dict(self.spec)

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSet":
        return monomial_basis(int(d["d"]), int(d.get("degree", d.get("s", 1))), bool(d.get("scaled", False)))


def monomial_exponents(d: int, s: int) -> list[tuple[int, ...]]:
    """All exponent vectors with total degree <= s, ordered by degree."""
    out = []
    for deg in range(s + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            theta = [0] * d
            for j in combo:
                theta[j] += 1
            out.append(tuple(theta))
    return out


def monomial_basis(d: int, s: int, scaled: bool = False) -> BasisSet:
    """Monomials up to degree ``s`` in ``d`` variables; ``C(d+s, s)`` of them.

    With ``scaled=True`` each monomial of degree k carries the factor ``s**(1-k)``.
    """
    if d < 1 or s < 0:
        raise InputError("need d >= 1 and s >= 0", module="structures")
    names, funcs = [], []
    for theta in monomial_exponents(d, s):
        deg = sum(theta)
        coef = float(s) ** (1 - deg) if scaled and s > 0 else 1.0
        label = "*".join(f"x{j + 1}^{t}" if t > 1 else f"x{j + 1}" for j, t in enumerate(theta) if t) or "1"
        names.append(label if coef == 1.0 else f"{coef:g}*{label}")
        expo = np.array(theta, dtype=float)
        funcs.append(lambda X, e=expo, c=coef: c * np.prod(X**e, axis=1))
    return BasisSet(tuple(names), tuple(funcs), {"kind": "monomial", "d": d, "degree": s, "scaled": scaled})


def basis_matrix(b: BasisSet, X) -> np.ndarray:
    X = as_covariates(X)
    cols = [np.broadcast_to(np.asarray(f(X), dtype=float), (X.shape[0],)) for f in b.functions]
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# structure choices


@dataclass(frozen=True)
class RKHS:
    kernel: Kernel = Kernel()
    name = "rkhs"


@dataclass(frozen=True)
class Lipschitz:
    metric: DistanceMetric = DistanceMetric()
    name = "lipschitz"


@dataclass(frozen=True)
class LipschitzCapped:
    """Lipschitz ball intersected with a sup-norm ball of radius ``delta0``."""

    metric: DistanceMetric = DistanceMetric()
    delta0: float = 1.0
    name = "lipschitz_capped"

    def __post_init__(self):
        if not self.delta0 > 0:
            raise InputError("delta0 must be positive", module="structures")


@dataclass(frozen=True)
class LInfinity:
    name = "linf"


@dataclass(frozen=True)
class FiniteDimQ:
    basis: BasisSet
    q: float = 2.0
    name = "finite_q"

    def __post_init__(self):
        if self.q not in (1.0, 2.0, math.inf):
            raise InputError("q must be 1, 2 or inf", module="structures")


@dataclass(frozen=True)
class MahalanobisLinear:
    name = "mahalanobis"


Structure = Union[RKHS, Lipschitz, LipschitzCapped, LInfinity, FiniteDimQ, MahalanobisLinear]


def _parse_q(q) -> float:
    if isinstance(q, str) and q.lower() in ("inf", "infinity"):
        return math.inf
    return float(q)


def structure_from_dict(d: dict) -> Structure:
    kind = d.get("type", d.get("kind"))
    if kind == "rkhs":
        return RKHS(Kernel.from_dict(d.get("kernel", {})))
    if kind == "lipschitz":
        return Lipschitz(DistanceMetric.from_dict(d.get("metric", {})))
    if kind == "lipschitz_capped":
        return LipschitzCapped(DistanceMetric.from_dict(d.get("metric", {})), float(d["delta0"]))
    if kind == "linf":
        return LInfinity()
    if kind == "finite_q":
        return FiniteDimQ(BasisSet.from_dict(d["basis"]), _parse_q(d.get("q", 2)))
    if kind == "mahalanobis":
        return MahalanobisLinear()
    raise InputError(f"unknown structure type {kind!r}", module="structures")


def structure_to_dict(s: Structure) -> dict:
    out: dict = {"type": s.name}
    if isinstance(s, RKHS):
        out["kernel"] = s.kernel.to_dict()
    elif isinstance(s, (Lipschitz, LipschitzCapped)):
        out["metric"] = s.metric.to_dict()
        if isinstance(s, LipschitzCapped):
            out["delta0"] = s.delta0
    elif isinstance(s, FiniteDimQ):
        out["basis"] = s.basis.to_dict()
        out["q"] = "inf" if math.isinf(s.q) else s.q
    return out


def dual_exponent(q: float) -> float:
    if q == 1:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


def mahalanobis_gram(X, ridge: bool = True) -> np.ndarray:
    """Gram matrix whose quadratic form gives the group-wise Mahalanobis metric."""
    Z = whiten(X, ridge=ridge)
    return as_symmetric(Z @ Z.T)


def structure_gram(structure: Structure, X) -> np.ndarray | None:
    """Gram matrix for structures whose squared metric is a quadratic form, else None."""
    if isinstance(structure, RKHS):
        return gram_matrix(structure.kernel, X)
    if isinstance(structure, MahalanobisLinear):
        return mahalanobis_gram(X)
    if isinstance(structure, FiniteDimQ) and structure.q == 2:
        Phi = basis_matrix(structure.basis, X)
        return as_symmetric(Phi @ Phi.T)
    return None


def distinct_rows(X) -> np.ndarray:
    """Integer code per row; equal rows share a code."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[:, None]
    _, codes = np.unique(X, axis=0, return_inverse=True)
    return codes.ravel()


def structure_metric_matrix(structure: Structure, X) -> np.ndarray:
    """Distance matrix for the Lipschitz-type structures."""
    if isinstance(structure, (Lipschitz, LipschitzCapped)):
        return pairwise_distances(structure.metric, X)
    raise InputError(f"{structure.name} has no distance matrix", module="structures")

