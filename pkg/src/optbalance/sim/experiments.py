"""Runners for the simulation studies; each returns tidy rows for CSV output."""

from __future__ import annotations

import csv
import io
import math
import sys

import numpy as np

from ..designs import (
    Blocking,
    CompleteRandomization,
    DesignSpec,
    MixedOptimal,
    PairwiseMatching,
    PureOptimal,
    Rerandomization,
    build_design,
)
from ..errors import InputError
from ..inference import OutcomeTable, bootstrap_test, randomization_test, rejection_rate
from ..structures import RKHS, Kernel, MahalanobisLinear
from .diabetes import TOP_FOUR, diabetes_load, relative_variance_experiment
from .example1 import example1_construct
from .models import OutcomeModel
from .rem import rem_convergence
from .variance import mc_conditional_variance, tau_hats

COLUMNS = ("experiment", "design", "n", "d", "value", "stderr", "reps", "seed")
EXPERIMENTS = ("example1", "example2", "example3", "example4", "rem")


def _row(experiment, design, n, d, value, stderr, reps, seed) -> dict:
    return {"experiment": experiment, "design": design, "n": int(n), "d": int(d), "value": float(value),
            "stderr": float(stderr), "reps": int(reps), "seed": seed}


def write_csv(rows, out=None) -> str:
    """Write rows with the fixed column schema to a path or stream; returns the text."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    text = buf.getvalue()
    if out is None:
        return text
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text


def uniform_covariates(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, d))


# ---------------------------------------------------------------------------
# design suites


def example1_designs() -> dict[str, DesignSpec]:
    return {
        "complete_randomization": CompleteRandomization(),
        "blocking_rank_bins": Blocking("rank_bins", 8),
        "pairwise_matching": PairwiseMatching(),
        "pure_optimal_mahalanobis": PureOptimal(MahalanobisLinear()),
        # the smallest positive quantile of the exact distribution keeps only the minimizers
        "rerandomization_infinitesimal": Rerandomization(1e-12, exhaustive=True),
    }


def example2_designs(T: int = 10) -> dict[str, DesignSpec]:
    return {
        "complete_randomization": CompleteRandomization(),
        "blocking_orthant": Blocking("orthant"),
        "rerandomization": Rerandomization(0.01),
        "pairwise_matching": PairwiseMatching(),
        "pure_linear": PureOptimal(RKHS(Kernel())),
        "pure_quadratic": PureOptimal(RKHS(Kernel.polynomial(2))),
        "mixed_gaussian": MixedOptimal(Kernel.gaussian(), T),
        "mixed_exponential": MixedOptimal(Kernel.exponential(), T),
    }


def example4_designs() -> dict[str, DesignSpec]:
    """The example2 suite with its mixed designs replaced by pure kernel designs."""
    d = example2_designs()
    del d["mixed_gaussian"], d["mixed_exponential"]
    d["pure_gaussian"] = PureOptimal(RKHS(Kernel.gaussian()))
    d["pure_exponential"] = PureOptimal(RKHS(Kernel.exponential()))
    return d


def _select(suite: dict, names) -> dict:
    if names is None:
        return suite
    unknown = [k for k in names if k not in suite]
    if unknown:
        raise InputError(f"unknown designs {unknown}; choose from {sorted(suite)}", module="sim_harness")
    return {k: suite[k] for k in names}


# ---------------------------------------------------------------------------
# experiments


def example1_experiment(b: int = 4, reps: int = 100_000, seed: int = 0, designs=None) -> list[dict]:
    """Conditional variance of each design on the adversarial instance (Monte Carlo)."""
    X, y = example1_construct(b)
    Y = np.column_stack([y, y])
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    rows = []
    for name, spec in _select(example1_designs(), designs).items():
        sigma = build_design(spec, X, rng=rng)
        rep = mc_conditional_variance(sigma, Y, reps, rng, exact=False)
        rows.append(_row("example1", name, n, 1, rep.value, rep.stderr, reps, seed))
    return rows


def example2_experiment(kind: str = "linear", d: int = 2, ns=(8, 12, 16), reps: int = 200, seed: int = 0,
                        designs=None, noise_sd: float = 0.1, tau: float = 1.0, T: int = 10) -> list[dict]:
    """Marginal Var(tau_hat) - V_n for each design and sample size."""
    model = OutcomeModel(kind, tau=tau, noise_sd=noise_sd)
    suite = _select(example2_designs(T), designs)
    rng = np.random.default_rng(seed)
    rows = []
    for n in ns:
        sq = {k: np.empty(reps) for k in suite}
        for r in range(reps):
            X = uniform_covariates(n, d, rng)
            Y, _ = model.draw(X, rng)
            for name, spec in suite.items():
                w = build_design(spec, X, rng=rng).sample(rng)
                sq[name][r] = (tau_hats(w, Y)[0] - tau) ** 2
        vn = model.reference_variance(n)
        for name in suite:
            rows.append(_row(f"example2[{kind}]", name, n, d, sq[name].mean() - vn,
                             sq[name].std(ddof=1) / math.sqrt(reps), reps, seed))
    return rows


def example3_experiment(path, n: int = 32, d: int = 4, reps: int = 200, seed: int = 0, designs=None,
                        tau: float = 1.0, T: int = 10) -> list[dict]:
    """Relative variance against complete randomization on resampled diabetes data."""
    if d not in (4, 10):
        raise InputError("d must be 4 (top-ranked covariates) or 10", module="sim_harness")
    data = diabetes_load(path, TOP_FOUR if d == 4 else None)
    suite = _select(example2_designs(T), designs)
    rng = np.random.default_rng(seed)
    reports = relative_variance_experiment(data, suite, n, tau, reps, rng)
    return [_row("example3", r.design, n, d, r.value, r.stderr, reps, seed) for r in reports]


def _is_rkhs(spec) -> bool:
    return isinstance(spec, PureOptimal) and isinstance(spec.structure, (RKHS, MahalanobisLinear))


def power_simulation(spec: DesignSpec, n: int, tau: float, sims: int, T: int = 99, alpha: float = 0.05,
                     d: int = 2, kind: str = "quadratic", rng: np.random.Generator | None = None) -> tuple[int, int]:
    """Rejections of the sharp null over ``sims`` noiseless experiments.

    Kernel designs use the bootstrap test and all others the randomization test.
    """
    rng = rng if rng is not None else np.random.default_rng()
    model = OutcomeModel(kind, tau=tau, noise_sd=0.0)
    hits = 0
    for r in rng.spawn(sims):
        X = uniform_covariates(n, d, r)
        Y, _ = model.draw(X, r)
        sigma = build_design(spec, X, rng=r)
        w = sigma.sample(r)
        table = OutcomeTable(np.where(w == 0, Y[:, 0], Y[:, 1]), w)
        if _is_rkhs(spec):
            res = bootstrap_test(X, spec, table, T, alpha, r)
        else:
            res = randomization_test(sigma, table, T, alpha, r)
        hits += res.reject
    return hits, sims


def example4_experiment(ns=(8, 12, 16), taus=(0.0, 0.15), sims: int = 100, T: int = 99, seed: int = 0,
                        designs=None, alpha: float = 0.05) -> list[dict]:
    """Rejection probability of the sharp null for each design, sample size and effect."""
    suite = _select(example4_designs(), designs)
    rng = np.random.default_rng(seed)
    rows = []
    for tau in taus:
        for n in ns:
            for name, spec in suite.items():
                hits, total = power_simulation(spec, n, tau, sims, T, alpha, rng=rng)
                rate, se = rejection_rate(hits, total)
                rows.append(_row(f"example4[tau={tau:g}]", name, n, 2, rate, se, sims, seed))
    return rows


def rem_experiment(d: int = 1, s: int = 1, q: float = 2.0, p_range=range(2, 8), reps: int = 100,
                   seed: int = 0) -> list[dict]:
    """Mean optimal squared imbalance per group size p (n = 2p)."""
    rng = np.random.default_rng(seed)
    out = rem_convergence(None, d, s, q, 2, p_range, reps, rng)
    return [_row(f"rem[s={s},q={q:g}]", "pure_optimal_finite_q", 2 * r.p, d, r.mean, r.stderr, reps, seed)
            for r in out]


def run_experiment(name: str, params: dict, seed: int) -> list[dict]:
    """Dispatch by experiment name with keyword parameters from a config."""
    params = dict(params)
    if "ns" in params:
        params["ns"] = tuple(int(v) for v in params["ns"])
    if "p_range" in params:
        lo, hi = params["p_range"]
        params["p_range"] = range(int(lo), int(hi) + 1)
    runners = {
        "example1": example1_experiment,
        "example2": example2_experiment,
        "example3": example3_experiment,
        "example4": example4_experiment,
        "rem": rem_experiment,
    }
    if name not in runners:
        raise InputError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}", module="sim_harness")
    try:
        return runners[name](seed=seed, **params)
    except TypeError as exc:
        raise InputError(f"bad parameters for {name}: {exc}", module="sim_harness") from None


if __name__ == "__main__":  # pragma: no cover
    write_csv(example1_experiment(reps=10_000), sys.stdout)
