"""Decay of the optimal imbalance with group size for finite-dimensional bases."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..pure_opt import finite_q_pure_opt
from ..structures import BasisSet, basis_matrix, monomial_basis


@dataclass
class ConvergenceRow:
    p: int
    mean: float
    stderr: float
    reps: int

    @property
    def log2_mean(self) -> float:
        return math.log2(self.mean) if self.mean > 0 else -math.inf


def rem_convergence(basis: BasisSet | None, d: int, s: int, q: float = 2.0, m: int = 2, p_range=range(2, 8),
                    reps: int = 100, rng: np.random.Generator | None = None) -> list[ConvergenceRow]:
    """Mean optimal squared imbalance over fresh N(0, I_d) covariate draws for each p."""
    rng = rng if rng is not None else np.random.default_rng()
    basis = basis if basis is not None else monomial_basis(d, s)
    rows = []
    for p in p_range:
        n = m * p
        vals = np.empty(reps)
        for r in range(reps):
            X = rng.standard_normal((n, d))
            vals[r] = finite_q_pure_opt(basis_matrix(basis, X), q, m).value
        se = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
        rows.append(ConvergenceRow(int(p), float(vals.mean()), se, reps))
    return rows


def log2_linear_fit(rows: list[ConvergenceRow]) -> tuple[float, float]:
    """Least-squares slope of log2(mean) on p and the fit's R^2."""
    ps = np.array([r.p for r in rows], dtype=float)
    ys = np.array([r.log2_mean for r in rows])
    fit = stats.linregress(ps, ys)
    return float(fit.slope), float(fit.rvalue**2)
