import itertools
import math

import numpy as np
import pytest

from optbalance.assignments import enumerate_canonical
from optbalance.designs import (
    Blocking,
    CompleteRandomization,
    PairwiseMatching,
    PureOptimal,
    build_design,
)
from optbalance.errors import InputError
from optbalance.imbalance import mahalanobis_imbalance
from optbalance.sim.diabetes import TOP_FOUR, diabetes_load, r_squared_bound, relative_variance_experiment
from optbalance.sim.example1 import (
    alternating_assignment,
    example1_closed_forms,
    example1_construct,
    verify_example1,
)
from optbalance.sim.experiments import (
    COLUMNS,
    example2_experiment,
    example4_experiment,
    run_experiment,
    write_csv,
)
from optbalance.sim.models import OutcomeModel, example2_cef
from optbalance.sim.rem import ConvergenceRow, log2_linear_fit, rem_convergence
from optbalance.sim.variance import (
    cr_variance_closed,
    mc_conditional_variance,
    relative_variance,
    tau_hats,
    variance_decomposition_mc,
)
from optbalance.structures import RKHS, Kernel, MahalanobisLinear

from helpers import DIABETES, all_partitions_labels


def brute_variance(labeled_rows, Y):
    """Var(tau_hat | Y) over equiprobable labeled assignments, by direct loops."""
    sate = np.mean(Y[:, 0] - Y[:, 1])
    devs = []
    for w in labeled_rows:
        t = Y[w == 0, 0].mean() - Y[w == 1, 1].mean()
        devs.append((t - sate) ** 2)
    return float(np.mean(devs))


# --- outcome models -------------------------------------------------------------


def test_cef_values():
    assert example2_cef("linear", [1, 0.5]) == 0.5
    assert example2_cef("quadratic", [1, 1]) == 0
    assert math.isclose(example2_cef("sinusoidal", [0, 0]), math.sqrt(3) / 2)
    assert example2_cef("cubic", [0, 0]) == 0
    out = example2_cef("linear", np.array([[1.0, 0.5, 9.0], [0.0, 2.0, 9.0]]))
    np.testing.assert_array_equal(out, [0.5, -2.0])


def test_cef_errors():
    with pytest.raises(InputError):
        example2_cef("quartic", [0, 0])
    with pytest.raises(InputError):
        example2_cef("linear", [1.0])


def test_outcome_model(rng):
    X = rng.uniform(-1, 1, (6, 2))
    model = OutcomeModel("quadratic", tau=0.4)
    F = model.conditional_means(X)
    np.testing.assert_allclose(F[:, 0] - F[:, 1], 0.4)
    Y, eps = model.draw(X, rng)
    np.testing.assert_array_equal(Y, F)
    assert not eps.any()
    noisy = OutcomeModel("linear", noise_sd=0.5)
    assert noisy.reference_variance(10) == pytest.approx(0.1)
    with pytest.raises(InputError):
        OutcomeModel(noise_sd=-1)


# --- conditional variance -------------------------------------------------------


def test_cr_closed_form_example():
    Y = np.column_stack([[1.0, 2, 3, 4], [1.0, 2, 3, 4]])
    assert math.isclose(cr_variance_closed(Y), 5 / 3)
    assert cr_variance_closed(np.ones((6, 2))) == 0


@pytest.mark.parametrize("n", [4, 6, 8])
def test_cr_closed_form_matches_brute(n, rng):
    Y = rng.standard_normal((n, 2))
    Y[:, 1] = Y[:, 0] - 0.3  # constant effect
    want = brute_variance(all_partitions_labels(n, 2), Y)
    assert math.isclose(cr_variance_closed(Y), want, rel_tol=1e-10)
    sigma = build_design(CompleteRandomization(), rng.standard_normal((n, 1)))
    rep = mc_conditional_variance(sigma, Y)
    assert rep.exact
    assert math.isclose(rep.value, want, rel_tol=1e-10)


def test_constant_outcomes_zero_variance(rng):
    X = rng.standard_normal((8, 2))
    Y = np.full((8, 2), 3.0)
    for spec in (CompleteRandomization(), Blocking("orthant"), PairwiseMatching(), PureOptimal(MahalanobisLinear())):
        rep = mc_conditional_variance(build_design(spec, X, rng=rng), Y, 100, rng)
        assert rep.value == pytest.approx(0, abs=1e-20)


def test_monte_carlo_variance_agrees_with_exact(rng):
    X = rng.standard_normal((8, 1))
    Y = np.column_stack([X[:, 0] ** 2, X[:, 0] ** 2])
    sigma = build_design(PairwiseMatching(), X)
    exact = mc_conditional_variance(sigma, Y, exact=True)
    mc = mc_conditional_variance(sigma, Y, 40_000, rng, exact=False)
    assert abs(mc.value - exact.value) < 4 * mc.stderr


def test_tau_hats_rows():
    Y = np.column_stack([[3.0, 1, 4, 1], [0.0, 0, 0, 0]])
    np.testing.assert_allclose(tau_hats([[0, 1, 0, 1], [1, 0, 1, 0]], Y), [3.5, 1.0])


# --- Example 1 ------------------------------------------------------------------


@pytest.mark.parametrize("b", [2, 3, 4])
def test_example1_construction(b):
    X, y = example1_construct(b)
    n = 2**b
    assert X.shape == (n, 1)
    np.testing.assert_array_equal(y, (-1.0) ** (np.arange(n) + 1))
    # independent check: the alternating split is the unique Mahalanobis minimizer
    rows = enumerate_canonical(n, 2)
    vals = np.array([mahalanobis_imbalance(r, X) for r in rows])
    assert np.count_nonzero(vals <= vals.min() + 1e-12) == 1
    np.testing.assert_array_equal(rows[np.argmin(vals)], alternating_assignment(n))
    verify_example1(X)


def test_example1_exact_variances():
    X, y = example1_construct(4)
    Y = np.column_stack([y, y])
    closed = example1_closed_forms(16)
    assert math.isclose(cr_variance_closed(Y), closed["complete_randomization"])
    assert math.isclose(cr_variance_closed(Y), 4 / 15)
    for name, spec in (("blocking_rank_bins", Blocking("rank_bins", 8)), ("pairwise_matching", PairwiseMatching()),
                       ("pure_optimal_mahalanobis", PureOptimal(MahalanobisLinear()))):
        rep = mc_conditional_variance(build_design(spec, X), Y, exact=True)
        assert math.isclose(rep.value, closed[name], rel_tol=1e-9), name


def test_example1_guard():
    with pytest.raises(InputError):
        example1_construct(1)


# --- decomposition --------------------------------------------------------------


def test_decomposition_identity_and_unbiasedness(rng):
    model = OutcomeModel("linear", tau=1.0, noise_sd=0.5)
    rep = variance_decomposition_mc(CompleteRandomization(), model, lambda r: r.uniform(-1, 1, (8, 2)), 2000, rng)
    assert rep.identity_error <= 1e-10
    assert abs(rep.bias[0]) <= 4 * rep.bias[1]
    v = rep.var_sate[0] + rep.var_d[0] + rep.var_e[0]
    assert abs(rep.var_tau[0] - v) < 0.1 * rep.var_tau[0]


def test_decomposition_bound_fields(rng):
    X = rng.standard_normal((8, 1))
    model = OutcomeModel(lambda Z: 2 * Z[:, 0], noise_sd=0.1, f_norm=2.0)
    rep = variance_decomposition_mc(PureOptimal(RKHS(Kernel())), model, X, 500, rng)
    assert rep.mean_m2 is not None
    assert math.isclose(rep.bound, 4.0 * rep.mean_m2)
    # for a linear f in the linear-kernel ball the bound on D is attained with equality surely
    assert rep.var_d[0] <= rep.bound + 1e-12


def test_relative_variance_delta_method(rng):
    a = rng.exponential(size=400)
    ratio, se = relative_variance(a, a)
    assert ratio == 1 and se == pytest.approx(0, abs=1e-12)
    r2, se2 = relative_variance(2 * a, a)
    assert r2 == pytest.approx(2) and se2 == pytest.approx(0, abs=1e-12)


# --- diabetes -------------------------------------------------------------------


def test_diabetes_loader():
    X, y = diabetes_load(DIABETES)
    assert X.shape == (442, 10) and y.shape == (442,)
    assert X[0, 0] == 59 and y[0] == 151
    Xs, _ = diabetes_load(DIABETES, TOP_FOUR)
    np.testing.assert_array_equal(Xs, X[:, [2, 8, 3, 6]])


def test_diabetes_loader_errors(tmp_path):
    with pytest.raises(InputError):
        diabetes_load(tmp_path / "missing.txt")
    lines = DIABETES.read_text().splitlines()
    (tmp_path / "noheader.txt").write_text("\n".join(lines[1:]))
    with pytest.raises(InputError, match="header"):
        diabetes_load(tmp_path / "noheader.txt")
    (tmp_path / "short.txt").write_text("\n".join(lines[:100]))
    with pytest.raises(InputError):
        diabetes_load(tmp_path / "short.txt")
    (tmp_path / "comma.csv").write_text("\n".join(",".join(ln.split()) for ln in lines))
    X, _ = diabetes_load(tmp_path / "comma.csv")
    assert X.shape == (442, 10)
    with pytest.raises(InputError):
        diabetes_load(DIABETES, (0, 1))


def test_r_squared_bound():
    data = diabetes_load(DIABETES)
    X, y = data
    # oracle: residual variance from the normal equations
    A = np.column_stack([np.ones(442), X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    want = np.var(y - A @ beta) / np.var(y)
    assert math.isclose(r_squared_bound(data), want, rel_tol=1e-8)
    assert 0.45 < want < 0.5


def test_relative_variance_experiment_small(rng):
    data = diabetes_load(DIABETES, TOP_FOUR)
    out = relative_variance_experiment(data, {"pure_linear": PureOptimal(RKHS(Kernel()))}, 8, reps=30, rng=rng)
    names = [r.design for r in out]
    assert names == ["complete_randomization", "pure_linear"]
    assert out[0].value == 1 and out[0].stderr == 0
    assert out[1].value > 0 and out[1].stderr > 0


# --- REM ------------------------------------------------------------------------


def test_log2_fit_exact():
    rows = [ConvergenceRow(p, 2.0 ** (3 - 0.5 * p), 0.0, 1) for p in range(2, 8)]
    slope, r2 = log2_linear_fit(rows)
    assert math.isclose(slope, -0.5) and math.isclose(r2, 1.0)


def test_rem_convergence_small(rng):
    rows = rem_convergence(None, 1, 1, 2.0, 2, range(2, 5), 10, rng)
    assert [r.p for r in rows] == [2, 3, 4]
    assert all(r.mean >= 0 and r.reps == 10 for r in rows)


# --- experiment runners ---------------------------------------------------------


def test_write_csv_schema(tmp_path):
    rows = example2_experiment("linear", 2, (4,), reps=5, seed=1, designs=["complete_randomization",
                                                                         "pairwise_matching"])
    text = write_csv(rows, tmp_path / "out.csv")
    lines = text.strip().splitlines()
    assert lines[0] == ",".join(COLUMNS)
    assert len(lines) == 3
    assert (tmp_path / "out.csv").read_text() == text
    assert rows[0]["experiment"] == "example2[linear]"


def test_experiments_reproducible():
    a = run_experiment("example2", {"kind": "quadratic", "ns": [4], "reps": 4,
                                    "designs": ["complete_randomization"]}, seed=5)
    b = run_experiment("example2", {"kind": "quadratic", "ns": [4], "reps": 4,
                                    "designs": ["complete_randomization"]}, seed=5)
    assert a == b


def test_example4_small():
    rows = example4_experiment(ns=(4,), taus=(0.0,), sims=3, T=9, seed=0,
                               designs=["complete_randomization", "pure_linear"])
    assert {r["design"] for r in rows} == {"complete_randomization", "pure_linear"}
    assert all(0 <= r["value"] <= 1 for r in rows)


def test_run_experiment_errors():
    with pytest.raises(InputError):
        run_experiment("example9", {}, 0)
    with pytest.raises(InputError):
        run_experiment("example2", {"bogus": 1}, 0)
    with pytest.raises(InputError):
        run_experiment("example2", {"designs": ["nope"]}, 0)
