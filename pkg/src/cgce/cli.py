"""Command-line front end: simulate, estimate and bootstrap workflows.

CSV schema for user data: header row with covariate columns ``x1..xd``
(reals), ``z`` and ``t`` (0/1 integers), ``y`` (real) and optionally ``p``
(per-row assignment probability).  Exit codes: 0 success, 2 schema or
configuration error, 3 estimation failure, 4 replication budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Optional

import numpy as np

from .bootstrap import run_bootstrap
from .efficient import CrossFitPlan, efficient_estimate
from .errors import CgceError, ReplicationBudgetExceeded, SchemaError
from .learners import KernelLearner, MlpLearner
from .model import EstimandSpec, ObservedSample
from .simple import simple_estimate
from .simulation import KNOWN_METHODS, ScenarioSpec, run_monte_carlo

CONFIG_KEYS = {
    "estimand",
    "alpha",
    "propensity",
    "learner",
    "folds",
    "split",
    "seed",
    "level",
    "asinh",
    "standardize",
    "bootstrap_reps",
}

DEFAULT_CONFIG = {
    "estimand": "mean",
    "alpha": 0.5,
    "propensity": "p",
    "learner": "kernel",
    "folds": 2,
    "split": "random",
    "seed": 0,
    "level": 0.95,
    "asinh": False,
    "standardize": False,
    "bootstrap_reps": 200,
}


def _load_config(path: Optional[str], overrides: dict) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if path:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read config {path}: {exc}")
        unknown = set(loaded) - CONFIG_KEYS
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    # explicit flags win over file values
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _read_csv(path: str):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise SchemaError(f"{path} has no header row")
            names = [c.strip() for c in reader.fieldnames]
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}")
    for required in ("z", "t", "y"):
        if required not in names:
            raise SchemaError(f"missing column '{required}'")
    xcols = sorted((c for c in names if c.startswith("x") and c[1:].isdigit()), key=lambda c: int(c[1:]))
    expected = [f"x{i + 1}" for i in range(len(xcols))]
    if xcols != expected:
        raise SchemaError(f"covariate columns must be x1..xd, found {xcols}")

    def col(name, kind=float):
        out = []
        for i, row in enumerate(rows):
            raw = row.get(name)
            if raw is None or raw == "":
                raise SchemaError(f"row {i + 1}: missing value in column '{name}'")
            try:
                out.append(kind(raw))
            except ValueError:
                raise SchemaError(f"row {i + 1}: cannot parse {raw!r} in column '{name}'")
        return np.asarray(out)

    data = {
        "z": col("z"),
        "t": col("t"),
        "y": col("y"),
        "x": np.column_stack([col(c) for c in xcols]) if xcols else np.zeros((len(rows), 0)),
    }
    if "p" in names:
        data["p"] = col("p")
    return data


def _build_sample(data: dict, cfg: dict) -> ObservedSample:
    prop = cfg["propensity"]
    if isinstance(prop, (int, float)) and not isinstance(prop, bool):
        p = float(prop)
    elif prop == "p":
        if "p" not in data:
            raise SchemaError("config requests propensity column 'p' but the CSV has none")
        p = data["p"]
    else:
        raise SchemaError(f"propensity must be a number or the column name 'p', got {prop!r}")
    y = data["y"]
    if cfg["asinh"]:
        y = np.arcsinh(y)
    x = data["x"]
    if x.shape[1] == 0:
        # covariate-free data: a constant column keeps the estimators defined
        x = np.zeros((y.shape[0], 1))
    return ObservedSample.validate(x, data["z"], data["t"], y, p, standardize=bool(cfg["standardize"]))


def _estimand(cfg: dict) -> EstimandSpec:
    if cfg["estimand"] == "mean":
        return EstimandSpec.mean()
    if cfg["estimand"] == "quantile":
        return EstimandSpec.quantile(float(cfg["alpha"]))
    raise SchemaError(f"estimand must be 'mean' or 'quantile', got {cfg['estimand']!r}")


def _method_runner(method: str, cfg: dict, covariate_free: bool):
    spec = _estimand(cfg)
    level = float(cfg["level"])
    if method == "simple":
        return lambda s, seed: simple_estimate(s, spec, level=level)
    if method == "eff-kernel":
        learner = KernelLearner()
        label = "Eff-kernel"
    elif method == "eff-mlp":
        learner = MlpLearner()
        label = "Eff-NN"
    else:
        raise SchemaError(f"unknown method {method!r} (choose simple, eff-kernel, eff-mlp)")
    if covariate_free:
        from .learners import ConstantLearner

        learner = ConstantLearner()
    folds = int(cfg["folds"])

    def run(s, seed):
        plan = CrossFitPlan(n=s.n, k=folds, mode=cfg["split"], seed=int(seed))
        return efficient_estimate(s, spec, learner, plan=plan, level=level, seed=int(seed), method_label=label)

    return run


def _write_csv(path: str, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerows(rows)


def cmd_simulate(args) -> int:
    spec = ScenarioSpec(scenario=args.scenario, d=args.d, n=args.n)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in KNOWN_METHODS:
            raise SchemaError(f"unknown method {m!r} (choose from {', '.join(KNOWN_METHODS)})")
    report = run_monte_carlo(
        spec,
        methods,
        replications=args.reps,
        base_seed=args.seed,
        workers=args.workers,
        n_folds=args.folds,
    )
    print(report.to_text())
    print(f"runtime: {report.runtime_seconds:.1f}s")
    if args.out:
        _write_csv(args.out, report.to_csv_rows())
    if args.dump_reps:
        rows = [["method", "replication", "tau"]]
        for method, taus in report.estimates.items():
            rows.extend([method, str(i), repr(float(v))] for i, v in enumerate(taus))
        _write_csv(args.dump_reps, rows)
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config, _config_overrides(args))
    data = _read_csv(args.input)
    sample = _build_sample(data, cfg)
    covariate_free = data["x"].shape[1] == 0
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    record = {}
    for method in methods:
        runner = _method_runner(method, cfg, covariate_free)
        est = runner(sample, int(cfg["seed"]))
        print(
            f"{method}: tau = {est.tau:.6f}  se = {est.se_tau:.6f}  "
            f"ci = [{est.ci_lower:.6f}, {est.ci_upper:.6f}]  n = {est.n_used}"
        )
        record[method] = {
            "tau1": est.tau1,
            "tau0": est.tau0,
            "tau": est.tau,
            "se": est.se_tau,
            "ci_lower": est.ci_lower,
            "ci_upper": est.ci_upper,
            "n": est.n_used,
        }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_bootstrap(args) -> int:
    cfg = _load_config(args.config, _config_overrides(args))
    if args.reps is not None:
        cfg["bootstrap_reps"] = args.reps
    data = _read_csv(args.input)
    sample = _build_sample(data, cfg)
    covariate_free = data["x"].shape[1] == 0
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    estimators = {m: _method_runner(m, cfg, covariate_free) for m in methods}
    report = run_bootstrap(
        sample,
        estimators,
        replications=int(cfg["bootstrap_reps"]),
        base_seed=int(cfg["seed"]),
        workers=args.workers,
    )
    print(report.to_text())
    print(f"runtime: {report.runtime_seconds:.1f}s")
    if args.out:
        _write_csv(args.out, report.to_csv_rows())
    return 0


def _config_overrides(args) -> dict:
    return {
        "estimand": getattr(args, "estimand", None),
        "alpha": getattr(args, "alpha", None),
        "propensity": getattr(args, "propensity", None),
        "learner": getattr(args, "learner", None),
        "folds": getattr(args, "folds", None),
        "split": getattr(args, "split", None),
        "seed": getattr(args, "seed", None),
        "level": getattr(args, "level", None),
        "asinh": True if getattr(args, "asinh", False) else None,
        "standardize": True if getattr(args, "standardize", False) else None,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgce", description="Complier causal effect toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a seeded Monte Carlo study")
    sim.add_argument("--scenario", type=int, required=True, choices=(1, 2))
    sim.add_argument("--d", type=int, required=True)
    sim.add_argument("--n", type=int, default=10000)
    sim.add_argument("--reps", type=int, default=300)
    sim.add_argument("--methods", default="simple,eff-kernel,eff-oracle")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--folds", type=int, default=2)
    sim.add_argument("--out", default=None)
    sim.add_argument("--dump-reps", dest="dump_reps", default=None)
    sim.set_defaults(func=cmd_simulate)

    def add_data_args(p):
        p.add_argument("--input", required=True)
        p.add_argument("--config", default=None)
        p.add_argument("--methods", default="simple")
        p.add_argument("--estimand", choices=("mean", "quantile"), default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--propensity", type=_num_or_str, default=None)
        p.add_argument("--folds", type=int, default=None)
        p.add_argument("--split", choices=("random", "sequential"), default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--level", type=float, default=None)
        p.add_argument("--asinh", action="store_true")
        p.add_argument("--standardize", action="store_true")
        p.add_argument("--out", default=None)

    est = sub.add_parser("estimate", help="estimate from a CSV dataset")
    add_data_args(est)
    est.set_defaults(func=cmd_estimate)

    boot = sub.add_parser("bootstrap", help="bootstrap analysis of a CSV dataset")
    add_data_args(boot)
    boot.add_argument("--reps", type=int, default=None)
    boot.add_argument("--workers", type=int, default=1)
    boot.set_defaults(func=cmd_bootstrap)
    return parser


def _num_or_str(value: str):
    try:
        return float(value)
    except ValueError:
        return value


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ValueError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except ReplicationBudgetExceeded as exc:
        print(f"error: budget: {exc}", file=sys.stderr)
        return 4
    except CgceError as exc:
        print(f"error: estimation: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
