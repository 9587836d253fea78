"""Diabetes progression data: loading and the relative-variance resampling study."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from ..designs import CompleteRandomization, DesignSpec, build_design
from ..errors import InputError, SingularCovarianceError
from ..structures import normalize_covariates
from .variance import VarianceReport, relative_variance

N_ROWS = 442
N_COVARIATES = 10
TOP_FOUR = (3, 9, 4, 7)  # 1-based covariate columns


def _is_number(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


def diabetes_load(path, subset=None) -> tuple[np.ndarray, np.ndarray]:
    """Read the whitespace- or comma-delimited table with a header row.

    Returns the ``(442, 10)`` covariates (or the 1-based ``subset`` of columns, in the
    given order) and the response vector.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"data file not found: {path}", module="sim_harness")
    text = path.read_text().strip().splitlines()
    if not text:
        raise InputError("data file is empty", module="sim_harness")
    dialect = "excel" if "," in text[0] else "excel-tab"
    rows = list(csv.reader(text, dialect=dialect)) if dialect == "excel" else [ln.split() for ln in text]
    header, body = rows[0], rows[1:]
    expect = f"a header row and {N_ROWS} rows of {N_COVARIATES} covariates plus the response"
    if all(_is_number(v) for v in header):
        raise InputError(f"missing header row; expected {expect}", module="sim_harness")
    if len(header) != N_COVARIATES + 1 or len(body) != N_ROWS:
        raise InputError(f"got {len(body)} rows of {len(header)} columns; expected {expect}", module="sim_harness")
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise InputError(f"non-numeric entry: {exc}", module="sim_harness") from None
    if data.shape != (N_ROWS, N_COVARIATES + 1):
        raise InputError(f"ragged rows; expected {expect}", module="sim_harness")
    X, y = data[:, :N_COVARIATES], data[:, N_COVARIATES]
    if subset is not None:
        idx = np.asarray(subset, dtype=int) - 1
        if idx.min() < 0 or idx.max() >= N_COVARIATES:
            raise InputError("subset columns are 1-based indices into the ten covariates", module="sim_harness")
        X = X[:, idx]
    return X, y


def _resample(X, n, rng, tries: int = 20):
    for _ in range(tries):
        idx = rng.integers(0, X.shape[0], n)
        try:
            return idx, normalize_covariates(X[idx], divisor=X.shape[1])
        except SingularCovarianceError:
            continue
    raise SingularCovarianceError("could not draw a resample with nonsingular covariance")


def relative_variance_experiment(dataset, designs: dict[str, DesignSpec], n: int, tau: float = 1.0,
                                 reps: int = 200, rng: np.random.Generator | None = None,
                                 keep_samples: bool = False) -> list[VarianceReport]:
    """Var(tau_hat) / Var(tau_hat under complete randomization) for each design.

    Every replicate draws n subjects with replacement, normalizes their covariates to
    zero mean and identity covariance divided by d, and applies every design to the
    same resample, so the ratios use paired squared errors.  ``keep_samples`` stores
    each design's squared errors in ``extra`` for further paired comparisons.
    """
    X, y = dataset
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if n > X.shape[0]:
        raise InputError("n exceeds the dataset size", module="sim_harness")
    rng = rng if rng is not None else np.random.default_rng()
    names = list(designs)
    if "complete_randomization" not in designs:
        names = ["complete_randomization"] + names
    specs = dict(designs, complete_randomization=designs.get("complete_randomization", CompleteRandomization()))
    sq = {k: np.empty(reps) for k in names}
    for r in range(reps):
        idx, Xn = _resample(X, n, rng)
        Y = np.column_stack([y[idx], y[idx] - tau])
        for k in names:
            sigma = build_design(specs[k], Xn, rng=rng)
            w = sigma.sample(rng)
            est = Y[w == 0, 0].mean() - Y[w == 1, 1].mean()
            sq[k][r] = (est - tau) ** 2
    out = []
    for k in names:
        if k == "complete_randomization":
            ratio, se = 1.0, 0.0
        else:
            ratio, se = relative_variance(sq[k], sq["complete_randomization"])
        var = float(sq[k].mean())
        extra = {"variance": var, "variance_stderr": float(sq[k].std(ddof=1) / math.sqrt(reps))}
        if keep_samples:
            extra["squared_errors"] = sq[k]
        out.append(VarianceReport(k, ratio, se, reps, extra=extra))
    return out


def r_squared_bound(dataset) -> float:
    """1 - R^2 of the population least-squares fit of the response on the covariates."""
    X, y = dataset
    A = np.column_stack([np.ones(len(y)), X])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(resid.var() / y.var())

