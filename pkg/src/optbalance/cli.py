"""Command-line front end.

Commands: design, evaluate, simulate, test, bench. Structured settings come from a JSON
config file; flags carry only paths, the seed, verbosity and thread count.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .assignments import validate_assignment
from .designs import PureOptimal, build_design, design_from_dict
from .distribution import _jsonable
from .errors import InputError, OptBalanceError, SolverBudgetExceeded
from .imbalance import evaluate, evaluate_design, worst_case_ratio
from .inference import OutcomeTable, bootstrap_test, exact_permutation_test, randomization_test
from .pure_opt import quadratic_pure_opt
from .sim.experiments import run_experiment, write_csv
from .structures import RKHS, Kernel, MahalanobisLinear, gram_matrix, structure_from_dict

log = logging.getLogger("optbalance")

EXIT_OK, EXIT_BUDGET, EXIT_INPUT = 0, 1, 2


# ---------------------------------------------------------------------------
# file helpers


def _is_number(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


def _read_rows(path) -> list[list[str]]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}", module="cli")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path} is empty", module="cli")
    return [[c.strip() for c in r] for r in rows]


def read_covariates(path) -> tuple[list[str], np.ndarray]:
    """Covariate CSV: optional header, optional leading ``subject_id`` column."""
    rows = _read_rows(path)
    header = None if all(_is_number(c) for c in rows[0]) else rows[0]
    body = rows[1:] if header else rows
    has_id = header is not None and header[0].lower() in ("subject_id", "id", "subject")
    try:
        data = np.array([[float(c) for c in (r[1:] if has_id else r)] for r in body])
    except ValueError as exc:
        raise InputError(f"non-numeric covariate in {path}: {exc}", module="cli") from None
    if data.ndim != 2 or data.shape[0] == 0:
        raise InputError(f"ragged or empty covariate table in {path}", module="cli")
    ids = [r[0] for r in body] if has_id else [str(i + 1) for i in range(len(body))]
    return ids, data


def read_assignment(path, ids=None) -> tuple[list[str], np.ndarray, np.ndarray | None]:
    """``subject_id,treatment[,outcome]`` CSV; treatments are 1-based. Rows follow ``ids`` if given."""
    rows = _read_rows(path)
    if not _is_number(rows[0][-1]):
        head = [c.lower() for c in rows[0]]
        rows = rows[1:]
    else:
        head = ["subject_id", "treatment", "outcome"][: len(rows[0])]
    if "treatment" not in head:
        raise InputError("assignment file needs a treatment column", module="cli")
    ti = head.index("treatment")
    si = head.index("subject_id") if "subject_id" in head else None
    oi = head.index("outcome") if "outcome" in head else None
    sub = [r[si] if si is not None else str(k + 1) for k, r in enumerate(rows)]
    try:
        treat = np.array([int(r[ti]) for r in rows]) - 1
        out = np.array([float(r[oi]) for r in rows]) if oi is not None else None
    except (ValueError, IndexError) as exc:
        raise InputError(f"bad assignment row: {exc}", module="cli") from None
    if ids is not None:
        if sorted(sub) != sorted(ids):
            raise InputError("assignment subjects do not match the covariate subjects", module="cli")
        order = {s: k for k, s in enumerate(sub)}
        pos = [order[s] for s in ids]
        sub = list(ids)
        treat = treat[pos]
        out = out[pos] if out is not None else None
    validate_assignment(treat)
    return sub, treat, out


def write_assignment(path, ids, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "treatment"])
        for s, k in zip(ids, labels):
            w.writerow([s, int(k) + 1])


def _dump(obj, path=None) -> str:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def _load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise InputError(f"config not found: {path}", module="cli")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"config is not valid JSON: {exc}", module="cli") from None
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object", module="cli")
    return cfg


def _seed(args, cfg) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise InputError("a seed is required (--seed or \"seed\" in the config)", module="cli")
    return int(seed)


def _design_spec(cfg):
    if "design" not in cfg:
        raise InputError("config needs a \"design\" object", module="cli")
    return design_from_dict(cfg["design"])


def _default_structure(spec):
    if isinstance(spec, PureOptimal):
        return spec.structure
    kernel = getattr(spec, "kernel", None)
    return RKHS(kernel) if isinstance(kernel, Kernel) else MahalanobisLinear()


def _design_summary(sigma) -> dict:
    meta = {k: v for k, v in sigma.meta.items() if np.isscalar(v) or v is None}
    out = {"name": sigma.name, "n": sigma.n, "m": sigma.m, "explicit": sigma.explicit, "meta": meta}
    if sigma.explicit:
        out["support_size"] = sigma.support_size()
    try:
        out["worst_case_ratio"] = worst_case_ratio(sigma)
    except OptBalanceError:
        pass
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_design(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed(args, cfg)
    spec = _design_spec(cfg)
    m = int(cfg.get("m", 2))
    ids, X = read_covariates(args.covariates)
    rng = np.random.default_rng(seed)
    sigma = build_design(spec, X, m=m, rng=rng)
    if sigma.meta.get("optimal") is False and not cfg.get("allow_suboptimal", False):
        raise SolverBudgetExceeded("time budget ran out before optimality was proved", module="pure_opt")
    w = sigma.sample(rng)
    structure = structure_from_dict(cfg["structure"]) if "structure" in cfg else _default_structure(spec)
    report = evaluate(w, structure, X, m)
    write_assignment(args.out, ids, w)
    _dump({"design": _design_summary(sigma), "imbalance": report.to_dict(), "seed": seed}, args.metrics)
    log.info("wrote %s", args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    if "structure" not in cfg:
        raise InputError("config needs a \"structure\" object", module="cli")
    structure = structure_from_dict(cfg["structure"])
    ids, X = read_covariates(args.covariates)
    if args.assignment:
        _, w, _ = read_assignment(args.assignment, ids)
        report = evaluate(w, structure, X, int(w.max()) + 1)
    else:
        seed = _seed(args, cfg)
        sigma = build_design(_design_spec(cfg), X, rng=np.random.default_rng(seed))
        report = evaluate_design(sigma, structure, X)
    _dump(report.to_dict(), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed(args, cfg)
    name = cfg.get("experiment")
    if name is None:
        raise InputError("config needs an \"experiment\" name", module="cli")
    params = dict(cfg.get("params", {}))
    if name == "example3" and "path" not in params:
        if not args.data:
            raise InputError("example3 needs the diabetes table (--data or params.path)", module="cli")
        params["path"] = args.data
    rows = run_experiment(name, params, seed)
    write_csv(rows, args.out if args.out and args.out != "-" else sys.stdout)
    return EXIT_OK


def cmd_test(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed(args, cfg)
    spec = _design_spec(cfg)
    ids, X = read_covariates(args.covariates)
    _, w, y = read_assignment(args.outcomes, ids)
    if y is None:
        raise InputError("outcomes file needs an outcome column", module="cli")
    table = OutcomeTable(y, w)
    T = int(cfg.get("T", 99))
    alpha = float(cfg.get("alpha", 0.05))
    kind = cfg.get("test", "auto")
    if kind == "auto":
        kind = "bootstrap" if isinstance(spec, PureOptimal) else "randomization"
    rng = np.random.default_rng(seed)
    if kind == "bootstrap":
        res = bootstrap_test(X, spec, table, T, alpha, rng, threads=args.threads)
    else:
        sigma = build_design(spec, X, m=int(w.max()) + 1, rng=rng)
        if kind == "exact":
            res = exact_permutation_test(sigma, table, alpha)
        elif kind == "randomization":
            res = randomization_test(sigma, table, T, alpha, rng)
        else:
            raise InputError(f"unknown test {kind!r}", module="cli")
    _dump(res.to_dict(), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed(args, cfg)
    rng = np.random.default_rng(seed)
    kernel = Kernel.from_dict(cfg.get("kernel", {"kind": "linear"}))
    d = int(cfg.get("d", 2))
    reps = int(cfg.get("reps", 3))
    methods = cfg.get("methods", ["auto"])
    results = []
    for n in cfg.get("n", [12, 16, 20]):
        # every method sees the same instances so values are comparable
        grams = [gram_matrix(kernel, rng.standard_normal((int(n), d))) for _ in range(reps)]
        for method in methods:
            times, values, optimal = [], [], True
            for K in grams:
                t0 = time.perf_counter()
                res = quadratic_pure_opt(K, time_budget=cfg.get("time_budget"), method=method)
                times.append(time.perf_counter() - t0)
                values.append(res.value)
                optimal &= res.optimal
            results.append({"n": int(n), "method": method, "solver": res.solver, "mean_seconds": float(np.mean(times)),
                            "max_seconds": float(np.max(times)), "mean_value": float(np.mean(values)),
                            "optimal": bool(optimal), "reps": reps})
    _dump({"kernel": kernel.to_dict(), "d": d, "seed": seed, "results": results}, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for replicate loops")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="optbalance", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", parents=[common], help="build a design and draw an assignment")
    d.add_argument("--covariates", required=True)
    d.add_argument("--out", required=True, help="assignment CSV (subject_id,treatment)")
    d.add_argument("--metrics", default="-", help="metrics JSON path (default stdout)")
    d.set_defaults(func=cmd_design)

    e = sub.add_parser("evaluate", parents=[common], help="imbalance of an assignment or design")
    e.add_argument("--covariates", required=True)
    e.add_argument("--assignment")
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", parents=[common], help="run a simulation study to CSV")
    s.add_argument("--data", help="diabetes table for example3")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("test", parents=[common], help="test the sharp null hypothesis")
    t.add_argument("--covariates", required=True)
    t.add_argument("--outcomes", required=True, help="CSV subject_id,treatment,outcome")
    t.add_argument("--out", default="-")
    t.set_defaults(func=cmd_test)

    b = sub.add_parser("bench", parents=[common], help="time the partition solvers")
    b.add_argument("--out", default="-")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SolverBudgetExceeded as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return EXIT_BUDGET
    except OptBalanceError as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return EXIT_INPUT
    except OSError as exc:
        sys.stderr.write(json.dumps({"code": "io_error", "message": str(exc), "module": "cli"}) + "\n")
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
