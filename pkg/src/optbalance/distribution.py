"""Distributions over balanced assignments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assignments import permute_labels
from .errors import InputError, UnsupportedError

WEIGHT_TOL = 1e-10

Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass
class DesignDistribution:
    """A design: explicit weighted support, a generative sampler, or both.

    Support rows are stored up to treatment relabeling; every draw gets a fresh
    uniformly random label permutation, so the realized distribution is symmetric
    in the treatment labels by construction.
    """

    n: int
    m: int = 2
    support: np.ndarray | None = None
    weights: np.ndarray | None = None
    sampler: Sampler | None = field(default=None, repr=False)
    name: str = "design"
    meta: dict = field(default_factory=dict)
    p_matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.support is None and self.sampler is None:
            raise InputError("a design needs a support or a sampler", module="designs")
        if self.support is not None:
            support = np.atleast_2d(np.asarray(self.support, dtype=np.int64))
            if support.shape[1] != self.n:
                raise InputError("support rows must have length n", module="designs")
            if self.n % self.m or support.min() < 0 or support.max() >= self.m:
                raise InputError("support rows must use labels 0..m-1 with n divisible by m", module="designs")
            counts = np.stack([(support == k).sum(axis=1) for k in range(self.m)], axis=1)
            if np.any(counts != self.n // self.m):
                raise InputError("every support row must be balanced", module="designs")
            if self.weights is None:
                weights = np.full(support.shape[0], 1.0 / support.shape[0])
            else:
                weights = np.asarray(self.weights, dtype=float).ravel()
            if weights.shape[0] != support.shape[0]:
                raise InputError("one weight per support row is required", module="designs")
            if np.any(weights < -WEIGHT_TOL) or abs(weights.sum() - 1.0) > WEIGHT_TOL:
                raise InputError("weights must be nonnegative and sum to 1", module="designs")
            self.support = support
            self.weights = np.clip(weights, 0.0, None)

    @property
    def explicit(self) -> bool:
        return self.support is not None

    def support_size(self) -> int:
        """Number of distinct labeled assignments with positive probability (upper bound)."""
        if not self.explicit:
            raise UnsupportedError("design has no explicit support", module="designs")
        return int(np.count_nonzero(self.weights > 0)) * math.factorial(self.m)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """One assignment (``size=None``) or a ``(size, n)`` array of assignments."""
        k = 1 if size is None else int(size)
        if self.sampler is not None:
            rows = np.asarray(self.sampler(rng, k), dtype=np.int64).reshape(k, self.n)
        else:
            idx = rng.choice(self.support.shape[0], size=k, p=self.weights)
            rows = self.support[idx]
        rows = permute_labels(rows, self.m, rng)
        return rows[0] if size is None else rows

    def labeled_support(self) -> tuple[np.ndarray, np.ndarray]:
        """Support with every label permutation listed explicitly (m = 2 only)."""
        if not self.explicit:
            raise UnsupportedError("design has no explicit support", module="designs")
        if self.m != 2:
            raise UnsupportedError("labeled support is only expanded for two treatments", module="designs")
        rows = np.concatenate([self.support, 1 - self.support])
        w = np.concatenate([self.weights, self.weights]) / 2.0
        return rows, w

    def to_dict(self) -> dict:
        out: dict = {"n": self.n, "m": self.m, "name": self.name, "meta": _jsonable(self.meta)}
        if self.explicit:
            out["support"] = [
                {"labels": (row + 1).tolist(), "weight": float(w)}
                for row, w in zip(self.support, self.weights)
                if w > 0
            ]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DesignDistribution":
        if "support" not in d:
            raise InputError("only designs with explicit support can be loaded", module="designs")
        labels = np.array([s["labels"] for s in d["support"]], dtype=np.int64) - 1
        weights = np.array([s["weight"] for s in d["support"]], dtype=float)
        weights = weights / weights.sum()
        return cls(
            n=labels.shape[1],
            m=int(d.get("m", labels.max() + 1)),
            support=labels,
            weights=weights,
            name=d.get("name", "design"),
            meta=d.get("meta", {}),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj
