"""Monte Carlo and exact variance of the mean-difference estimator under a design."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from ..designs import DesignSpec, build_design
from ..distribution import DesignDistribution
from ..errors import InputError
from .models import OutcomeModel

EXACT_LIMIT = 10_000


@dataclass
class VarianceReport:
    """Variance estimate for one design with its standard error (0 when exact)."""

    design: str
    value: float
    stderr: float
    reps: int
    exact: bool = False
    reference: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"design": self.design, "value": self.value, "stderr": self.stderr, "reps": self.reps,
               "exact": self.exact, "reference": self.reference}
        out.update(self.extra)
        return out


def _potential(Y, n: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (n, 2):
        raise InputError(f"potential outcomes must be ({n}, 2), got {Y.shape}", module="sim_harness")
    return Y


def tau_hats(labels, Y) -> np.ndarray:
    """Mean-difference estimates for a block of assignments (label 0 receives treatment 1).

    ``Y`` is ``(n, 2)`` or one ``(N, n, 2)`` table per assignment.
    """
    labels = np.atleast_2d(labels)
    Y = np.asarray(Y, dtype=float)
    y1, y2 = Y[..., 0], Y[..., 1]
    a = labels == 0
    b = ~a
    return (np.where(a, y1, 0.0).sum(axis=1) / a.sum(axis=1)
            - np.where(b, y2, 0.0).sum(axis=1) / b.sum(axis=1))


def sate(Y) -> float:
    Y = np.asarray(Y, dtype=float)
    return float(np.mean(Y[:, 0] - Y[:, 1]))


def cr_variance_closed(Y) -> float:
    """Var(tau_hat | X, Y) under complete randomization: 4 ||Ybar||^2 / (n (n - 1))."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != 2:
        raise InputError("closed form is for two treatments", module="sim_harness")
    n = Y.shape[0]
    yhat = Y.mean(axis=1)
    yc = yhat - yhat.mean()
    return float(4.0 * (yc @ yc) / (n * (n - 1)))


def mc_conditional_variance(sigma: DesignDistribution, Y, reps: int = 10_000,
                            rng: np.random.Generator | None = None, exact: bool | None = None) -> VarianceReport:
    """Var(tau_hat | X, Y) = E[(tau_hat - SATE)^2 | X, Y].

    Exact enumeration over the labeled support when it is explicit and holds at most
    ``EXACT_LIMIT`` assignments (or when ``exact`` is forced); Monte Carlo otherwise.
    """
    if sigma.m != 2:
        raise InputError("variance studies are for two treatments", module="sim_harness")
    Y = _potential(Y, sigma.n)
    s = sate(Y)
    if exact is None:
        exact = sigma.explicit and sigma.support_size() <= EXACT_LIMIT
    if exact:
        rows, w = sigma.labeled_support()
        dev = (tau_hats(rows, Y) - s) ** 2
        return VarianceReport(sigma.name, float(w @ dev), 0.0, int(rows.shape[0]), exact=True)
    if reps < 2:
        raise InputError("need at least two replicates", module="sim_harness")
    rng = rng if rng is not None else np.random.default_rng()
    dev = (tau_hats(sigma.sample(rng, reps), Y) - s) ** 2
    return VarianceReport(sigma.name, float(dev.mean()), float(dev.std(ddof=1) / math.sqrt(reps)), reps)


def _corr(a, b) -> tuple[float, float]:
    """Sample correlation and its large-sample standard error."""
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return math.nan, math.nan
    r = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
    return r, (1 - r * r) / math.sqrt(a.size - 1)


def _design_opt_value(sigma: DesignDistribution) -> float | None:
    for key in ("value", "m_m_squared"):
        if key in sigma.meta:
            return float(sigma.meta[key])
    return None


Covariates = Union[np.ndarray, Callable[[np.random.Generator], np.ndarray]]


@dataclass
class DecompositionReport:
    """Moments of tau_hat = SATE + D + E over replicates."""

    design: str
    reps: int
    var_tau: tuple[float, float]
    var_sate: tuple[float, float]
    var_d: tuple[float, float]
    var_e: tuple[float, float]
    corr: dict
    bias: tuple[float, float]
    identity_error: float
    bound: float | None = None
    mean_m2: float | None = None
    samples: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "design": self.design, "reps": self.reps, "var_tau": self.var_tau, "var_sate": self.var_sate,
            "var_d": self.var_d, "var_e": self.var_e, "corr": self.corr, "bias": self.bias,
            "identity_error": self.identity_error, "bound": self.bound, "mean_m2": self.mean_m2,
        }


def _var_with_se(x) -> tuple[float, float]:
    c = (x - x.mean()) ** 2
    return float(c.mean()), float(c.std(ddof=1) / math.sqrt(x.size))


def variance_decomposition_mc(design: Union[DesignSpec, DesignDistribution], model: OutcomeModel, X: Covariates,
                              reps: int = 10_000, rng: np.random.Generator | None = None) -> DecompositionReport:
    """Simulate tau_hat = SATE + D + E for two treatments.

    D = (2/n) sum_i u_i fbar(X_i) is the design term and E = (2/n) sum_i u_i ebar_i the
    noise term, with u_i = +1 for label 0 and bars denoting the two-arm average. ``X``
    is either fixed covariates (the design is built once) or a sampler ``rng -> X`` (the
    design is rebuilt for every replicate, giving marginal moments).
    """
    rng = rng if rng is not None else np.random.default_rng()
    fixed = not callable(X)
    if fixed:
        Xf = np.asarray(X, dtype=float)
        sigma = design if isinstance(design, DesignDistribution) else build_design(design, Xf, rng=rng)
    elif isinstance(design, DesignDistribution):
        raise InputError("random covariates need a design specification, not a built design", module="sim_harness")
    taus, sates, ds, es, m2 = (np.empty(reps) for _ in range(5))
    have_m2 = True
    name = None
    for r in range(reps):
        if not fixed:
            Xf = np.asarray(X(rng), dtype=float)
            sigma = build_design(design, Xf, rng=rng)
        name = sigma.name
        F = model.conditional_means(Xf)
        Y, eps = model.draw(Xf, rng)
        w = sigma.sample(rng)
        u = np.where(w == 0, 1.0, -1.0)
        n = u.size
        taus[r] = tau_hats(w, Y)[0]
        sates[r] = np.mean(Y[:, 0] - Y[:, 1])
        ds[r] = 2.0 / n * (u @ F.mean(axis=1))
        es[r] = 2.0 / n * (u @ eps.mean(axis=1))
        v = _design_opt_value(sigma)
        if v is None:
            have_m2 = False
        else:
            m2[r] = v
    resid = taus - sates - ds - es
    corr = {"sate_d": _corr(sates, ds), "d_e": _corr(ds, es), "sate_e": _corr(sates, es)}
    diff = taus - sates
    bias = (float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(reps)))
    mean_m2 = float(m2.mean()) if have_m2 else None
    bound = None
    if mean_m2 is not None and model.f_norm is not None:
        # ((||f_1|| + ||f_2||)^2 / 2) (1 - 1/m) E[M^2] with ||f_1|| = ||f_2|| and m = 2
        bound = (2 * model.f_norm) ** 2 / 2 * 0.5 * mean_m2
    return DecompositionReport(
        design=name, reps=reps, var_tau=_var_with_se(taus), var_sate=_var_with_se(sates),
        var_d=_var_with_se(ds), var_e=_var_with_se(es), corr=corr, bias=bias,
        identity_error=float(np.max(np.abs(resid))), bound=bound, mean_m2=mean_m2,
        samples={"tau": taus, "sate": sates, "d": ds, "e": es},
    )


def relative_variance(a, b) -> tuple[float, float]:
    """Ratio mean(a)/mean(b) of paired squared errors with a delta-method standard error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ma, mb = a.mean(), b.mean()
    ratio = ma / mb
    cov = np.cov(np.vstack([a, b]), ddof=1)
    var = (cov[0, 0] / ma**2 + cov[1, 1] / mb**2 - 2 * cov[0, 1] / (ma * mb)) * ratio**2 / a.size
    return float(ratio), float(math.sqrt(max(var, 0.0)))
