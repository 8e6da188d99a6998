"""Command-line interface: ``stvlearn {mean-bench,cov-bench,rate-check,fit,verify}``.

Exit codes: 0 success, 1 usage or input error, 2 numeric failure (or a FAIL in ``verify``).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .bench import (
    COV_ESTIMATORS,
    MEAN_ESTIMATORS,
    ExperimentConfig,
    Scenario,
    emit_report,
    run_cov_experiment,
    run_mean_experiment,
    run_rate_check,
    summary_markdown,
)
from .errors import InputError, NumericError
from .estimators import ExactSampling, ImportanceSampling, StvLearnConfig, Variant, fit_stv
from .optim import GdaConfig
from .rng import stream

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

# key -> (type, help); shared by --config files and KEY=VALUE overrides
LEARN_KEYS = {
    "variant": (str, "hard | additive | full"),
    "r": (float, "generator radius (penalty 1/r^2)"),
    "U": (float, "witness radius (penalty 1/U^2)"),
    "inv_r2": (float, "penalty weight 1/r^2 (sets r)"),
    "inv_u2": (float, "penalty weight 1/U^2 (sets U)"),
    "sampling": (str, "exact | importance"),
    "m": (int, "model draws per outer step (exact sampling)"),
    "ell": (int, "importance draws (importance sampling)"),
    "outer_steps": (int, "outer descent steps"),
    "inner_steps_per_outer": (int, "ascent steps per outer step"),
    "step_outer": (float, "outer step size"),
    "step_inner": (float, "inner step size"),
    "decay": (str, "none | inv_sqrt"),
    "warmup": (int, "constant-step outer steps before decay"),
    "restarts": (int, "independent runs per fit"),
    "tol": (float, "early-stop gradient tolerance (0 disables)"),
    "max_wall_ms": (float, "wall-clock budget per run"),
    "select": (str, "best | last checkpoint"),
    "witness_init_norm": (float, "norm of the initial witness"),
}
BENCH_KEYS = {
    "d": (int, "dimension"),
    "n": (int, "sample size"),
    "eps": (float, "contamination rate"),
    "trials": (int, "number of trials"),
    "estimators": (str, "comma-separated estimator ids"),
}
RATE_KEYS = {
    "d": (int, "dimension"),
    "n_grid": (str, "comma-separated sample sizes"),
    "trials": (int, "trials per sample size"),
    "estimator": (str, "stv | mean | median"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _coerce(key, raw, table):
    typ = table[key][0]
    try:
        return typ(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad value for {key}: {raw!r}") from exc


def _collect(args, table) -> dict:
    """Merge config file, explicit flags and KEY=VALUE overrides (later wins)."""
    vals: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        for k, v in data.items():
            if k == "seed":
                vals["seed"] = int(v)
                continue
            if k not in table:
                raise UsageError(f"unknown config key {k!r}; valid keys: {', '.join(sorted(table))}")
            vals[k] = v if not isinstance(v, list) else ",".join(map(str, v))
    for k in table:
        v = getattr(args, k, None)
        if v is not None:
            vals[k] = v
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not KEY=VALUE")
        k, raw = item.split("=", 1)
        if k not in table:
            raise UsageError(f"unknown key {k!r}; valid keys: {', '.join(sorted(table))}")
        vals[k] = raw
    return {k: (_coerce(k, v, table) if k in table else v) for k, v in vals.items()}


def _learn_config(vals: dict, default_inv_r2: float, default_inv_u2: float) -> StvLearnConfig:
    opt_fields = ("outer_steps", "inner_steps_per_outer", "step_outer", "step_inner", "decay",
                  "warmup", "restarts", "tol", "max_wall_ms", "select")
    opt = GdaConfig(**{k: vals[k] for k in opt_fields if k in vals})
    r = vals.get("r", 1.0 / np.sqrt(vals.get("inv_r2", default_inv_r2)))
    U = vals.get("U", 1.0 / np.sqrt(vals.get("inv_u2", default_inv_u2)))
    sampling = vals.get("sampling", "exact")
    if sampling == "exact":
        me = ExactSampling(vals.get("m"))
    elif sampling == "importance":
        me = ImportanceSampling(vals.get("ell", 10_000))
    else:
        raise UsageError("sampling must be 'exact' or 'importance'")
    try:
        variant = Variant(vals.get("variant", "full"))
    except ValueError as exc:
        raise UsageError("variant must be hard, additive or full") from exc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return StvLearnConfig(variant=variant, r=float(r), U=float(U), model_expectation=me, optimizer=opt,
                              witness_init_norm=vals.get("witness_init_norm", 1.0))


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("STV_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"STV_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _add_common(p, table, with_out=True):
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--config", help="JSON file with KEY: VALUE entries")
    if with_out:
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="output format (default: csv; json for fit)")
    p.add_argument("--threads", type=int, default=None, help="worker processes (env STV_THREADS)")
    keys = ", ".join(sorted(table))
    p.add_argument("overrides", nargs="*", metavar="KEY=VALUE", help=f"overrides; keys: {keys}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stvlearn", description="Robust estimation by smoothed total variation minimization.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    for name, help_ in (("mean-bench", "contaminated mean benchmark"), ("cov-bench", "contaminated covariance benchmark")):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--d", type=int, help="dimension")
        p.add_argument("--n", type=int, help="sample size")
        p.add_argument("--eps", type=float, help="contamination rate")
        p.add_argument("--trials", type=int, help="number of trials")
        p.add_argument("--estimators", help="comma-separated estimator ids")
        p.add_argument("--timing", action="store_true", help="record wall_ms (makes output run-dependent)")
        _add_common(p, {**BENCH_KEYS, **LEARN_KEYS})

    p = sub.add_parser("rate-check", help="clean-data convergence-rate check", description="clean-data convergence-rate check")
    p.add_argument("--d", type=int, help="dimension")
    p.add_argument("--n-grid", dest="n_grid", help="comma-separated sample sizes")
    p.add_argument("--trials", type=int, help="trials per sample size")
    p.add_argument("--estimator", help="stv | mean | median")
    _add_common(p, {**RATE_KEYS, **LEARN_KEYS})

    p = sub.add_parser("fit", help="fit a Gaussian model to a headerless CSV", description="fit a Gaussian model to a headerless CSV")
    p.add_argument("--model", choices=("mean", "cov"), required=True, help="model family")
    p.add_argument("--data", required=True, help="headerless CSV, one sample per row")
    _add_common(p, LEARN_KEYS)

    p = sub.add_parser("verify", help="run the numerical property checks", description="run the numerical property checks")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    return parser


def read_points_csv(path) -> np.ndarray:
    """Headerless numeric CSV; all rows must have the first row's length."""
    rows = []
    width = None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open data file {path}: {exc}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: non-numeric value") from exc
            if not all(np.isfinite(vals)):
                raise InputError(f"{path}: line {lineno}: non-finite value")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise InputError(f"{path}: line {lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if len(rows) < 2:
        raise InputError(f"{path}: need at least two rows")
    return np.array(rows)


def _write(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _bench(args, cov: bool) -> int:
    vals = _collect(args, {**BENCH_KEYS, **LEARN_KEYS})
    seed = args.seed if args.seed is not None else vals.get("seed", 0)
    if cov:
        scenario, defaults, inv_r2, est_all = Scenario.COV_SHIFT, dict(d=5, n=5000, trials=10), 1e-4, COV_ESTIMATORS
    else:
        scenario, defaults, inv_r2, est_all = Scenario.MEAN_SHIFT, dict(d=10, n=1000, trials=10), 3e-5, MEAN_ESTIMATORS
    learn = _learn_config(vals, inv_r2, 1e-4)
    estimators = tuple(e for e in vals.get("estimators", ",".join(est_all)).split(",") if e)
    eps = vals.get("eps")
    if eps == 0:
        scenario = Scenario.CLEAN if not cov else scenario
    cfg = ExperimentConfig(
        scenario,
        vals.get("d", defaults["d"]),
        vals.get("n", defaults["n"]),
        vals.get("trials", defaults["trials"]),
        estimators,
        learn,
        seed,
        eps,
    )
    runner = run_cov_experiment if cov else run_mean_experiment
    report = runner(cfg, workers=_threads(args))
    if args.out:
        emit_report(report, args.out, args.format or "csv", timing=args.timing)
        sys.stderr.write(summary_markdown(report))
    else:
        from .bench import report_csv

        if args.format != "json":
            sys.stdout.write(report_csv(report, args.timing))
        else:
            d = report.to_dict()
            if not args.timing:
                d.pop("wall_ms")
            sys.stdout.write(json.dumps(d, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _rate(args) -> int:
    vals = _collect(args, {**RATE_KEYS, **LEARN_KEYS})
    seed = args.seed if args.seed is not None else vals.get("seed", 0)
    learn = _learn_config(vals, 3e-5, 1e-4)
    try:
        grid = [int(v) for v in str(vals.get("n_grid", "250,500,1000,2000,4000")).split(",") if v]
    except ValueError as exc:
        raise UsageError("n_grid must be comma-separated integers") from exc
    res = run_rate_check(vals.get("d", 10), grid, vals.get("trials", 10), learn, seed,
                         estimator=vals.get("estimator", "stv"), workers=_threads(args))
    payload = {
        "estimator": res.estimator,
        "n_grid": res.n_grid,
        "mean_errors": res.mean_errors,
        "slope": res.slope,
        "within_band": bool(-0.65 <= res.slope <= -0.35),
    }
    if args.format == "json":
        text = json.dumps(payload, indent=2) + "\n"
    else:
        text = "n,mean_error\n" + "".join(f"{n},{e!r}\n" for n, e in zip(res.n_grid, res.mean_errors))
        text += f"# slope,{res.slope!r}\n"
    _write(text, args.out)
    return EXIT_OK


def _fit(args) -> int:
    vals = _collect(args, LEARN_KEYS)
    seed = args.seed if args.seed is not None else vals.get("seed", 0)
    data = read_points_csv(args.data)
    learn = _learn_config(vals, 3e-5 if args.model == "mean" else 1e-4, 1e-4)
    res = fit_stv(data, args.model, learn, stream(seed, "fit"))
    u, b = res.witness
    out = {
        "model": args.model,
        "n": int(data.shape[0]),
        "d": int(data.shape[1]),
        "f_hat": (res.f_hat.vector if args.model == "mean" else res.f_hat.matrix).tolist(),
        "mean": res.mean.tolist(),
        "covariance": res.covariance.tolist(),
        "witness": {"u": (u.vector if u.vector is not None else u.matrix).tolist(), "b": b},
        "final_objective": float(res.objective_trace[-1]),
        "diagnostics": {k: v for k, v in res.diagnostics.items() if k != "wall_ms"},
    }
    text = json.dumps(out, indent=2) + "\n"
    if args.format == "csv":
        text = ",".join(repr(float(v)) for v in np.ravel(out["f_hat"])) + "\n"
    _write(text, args.out)
    return EXIT_OK


def _verify(args) -> int:
    from .verify import run_checks

    results = run_checks(args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        if args.command in ("mean-bench", "cov-bench"):
            return _bench(args, cov=args.command == "cov-bench")
        if args.command == "rate-check":
            return _rate(args)
        if args.command == "fit":
            return _fit(args)
        return _verify(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
