"""Outcome models for the simulation studies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from ..errors import InputError

CEF_KINDS = ("linear", "quadratic", "cubic", "sinusoidal")


def example2_cef(kind: str, x) -> np.ndarray | float:
    """Conditional expectation functions of the benchmark suite.

    Only the first two coordinates of ``x`` are used; ``x`` may be a single point or
    an ``(n, d)`` array.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] < 2:
        raise InputError("the benchmark functions need at least two covariates", module="sim_harness")
    x1, x2 = X[:, 0], X[:, 1]
    if kind == "linear":
        out = x1 - x2
    elif kind == "quadratic":
        out = x1 - x2 + x1**2 + x2**2 - 2 * x1 * x2
    elif kind == "cubic":
        out = (x1 - x2 + x1**2 + x2**2 - 2 * x1 * x2
               + x1**3 - x2**3 - 3 * x1**2 * x2 + 3 * x1 * x2**3)
    elif kind == "sinusoidal":
        out = (np.sin(math.pi / 3 + math.pi * x1 / 3 - 2 * math.pi * x2 / 3)
               - 6 * np.sin(math.pi * x1 / 3 + math.pi * x2 / 4)
               + 6 * np.sin(math.pi * x1 / 3 + math.pi * x2 / 6))
    else:
        raise InputError(f"unknown conditional expectation {kind!r}; choose from {CEF_KINDS}",
                         module="sim_harness")
    return float(out[0]) if single else out


Cef = Union[str, Callable[[np.ndarray], np.ndarray]]


@dataclass
class OutcomeModel:
    """Two-arm model Y_ik = f_k(X_i) + eps_ik with f_1 = f + tau/2 and f_2 = f - tau/2.

    ``noise_sd`` is the standard deviation of the independent Gaussian noise of each arm.
    ``f_norm`` optionally records the norm of ``f`` (constants dropped) in a structure,
    which is what the imbalance bound on the design term needs.
    """

    cef: Cef = "linear"
    tau: float = 0.0
    noise_sd: float = 0.0
    f_norm: float | None = None

    def __post_init__(self):
        if self.noise_sd < 0:
            raise InputError("noise_sd must be nonnegative", module="sim_harness")
        if isinstance(self.cef, str) and self.cef not in CEF_KINDS:
            raise InputError(f"unknown conditional expectation {self.cef!r}", module="sim_harness")

    def fhat(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if isinstance(self.cef, str):
            return np.asarray(example2_cef(self.cef, X))
        return np.asarray(self.cef(X), dtype=float).ravel()

    def conditional_means(self, X) -> np.ndarray:
        """``(n, 2)`` matrix of f_1(X_i), f_2(X_i)."""
        f = self.fhat(X)
        return np.column_stack([f + self.tau / 2, f - self.tau / 2])

    def draw(self, X, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Potential outcomes ``(n, 2)`` and the noise that produced them."""
        F = self.conditional_means(X)
        eps = self.noise_sd * rng.standard_normal(F.shape) if self.noise_sd > 0 else np.zeros_like(F)
        return F + eps, eps

    def reference_variance(self, n: int) -> float:
        """V_n = Var(SATE) + Var(eps_1 + eps_2)/n for constant effects and independent noise."""
        return 4.0 * self.noise_sd**2 / n
