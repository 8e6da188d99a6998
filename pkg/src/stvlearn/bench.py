"""Benchmark harness: contaminated mean / covariance experiments and convergence-rate checks."""

from __future__ import annotations

import csv
import enum
import io
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .contamination import scenario_clean, scenario_cov, scenario_mean, banded_covariance, sample_huber
from .errors import InputError, StvError
from .estimators import (
    StvLearnConfig,
    baseline_componentwise_median,
    baseline_kendall_cov,
    baseline_sample_mean_cov,
    fit_stv,
)
from .rng import derive_seed, stream

CSV_COLUMNS = ("scenario", "d", "n", "eps", "estimator", "trial", "seed", "error", "wall_ms")


class Scenario(enum.Enum):
    MEAN_SHIFT = "mean_shift"
    COV_SHIFT = "cov_shift"
    CLEAN = "clean"


MEAN_ESTIMATORS = ("stv", "median", "mean")
COV_ESTIMATORS = ("stv", "kendall", "sample_cov")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    d: int
    n: int
    trials: int = 10
    estimators: tuple[str, ...] = ("stv", "median")
    learn: StvLearnConfig = field(default_factory=StvLearnConfig)
    master_seed: int = 0
    eps: float | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise InputError("trials must be >= 1")
        if self.n < 2 or self.d < 1:
            raise InputError("need n >= 2 and d >= 1")
        valid = COV_ESTIMATORS if self.scenario is Scenario.COV_SHIFT else MEAN_ESTIMATORS
        bad = [e for e in self.estimators if e not in valid]
        if bad:
            raise InputError(f"unknown estimators {bad}; valid: {list(valid)}")

    def contamination(self):
        if self.scenario is Scenario.MEAN_SHIFT:
            return scenario_mean(self.d) if self.eps is None else scenario_mean(self.d, eps=self.eps)
        if self.scenario is Scenario.COV_SHIFT:
            return scenario_cov(self.d) if self.eps is None else scenario_cov(self.d, eps=self.eps)
        return scenario_clean(self.d)

    def trial_seed(self, trial: int) -> int:
        return derive_seed(self.master_seed, self.scenario.value, trial)


@dataclass
class ExperimentReport:
    scenario: str
    d: int
    n: int
    eps: float
    estimators: list[str]
    metric: str  # "euclidean" or "frobenius"
    errors: np.ndarray  # trials x estimators, NaN for failed fits
    seeds: list[int]
    wall_ms: np.ndarray
    failures: list[str] = field(default_factory=list)

    @property
    def trials(self) -> int:
        return self.errors.shape[0]

    def aggregates(self) -> dict[str, dict[str, float]]:
        return aggregate_errors(self.errors, self.estimators)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "d": self.d,
            "n": self.n,
            "eps": self.eps,
            "metric": self.metric,
            "estimators": list(self.estimators),
            "seeds": list(self.seeds),
            "errors": [[None if np.isnan(v) else float(v) for v in row] for row in self.errors],
            "wall_ms": self.wall_ms.tolist(),
            "failures": list(self.failures),
            "aggregates": self.aggregates(),
        }


def aggregate_errors(errors: np.ndarray, estimators) -> dict[str, dict[str, float]]:
    out = {}
    for j, name in enumerate(estimators):
        col = np.asarray(errors, dtype=float)[:, j] if len(errors) else np.zeros(0)
        col = col[~np.isnan(col)]
        if col.size == 0:
            out[name] = {"mean": float("nan"), "std": float("nan"), "median": float("nan"), "mad": float("nan"), "count": 0}
            continue
        med = float(np.median(col))
        out[name] = {
            "mean": float(col.mean()),
            "std": float(col.std(ddof=1)) if col.size > 1 else 0.0,
            "median": med,
            "mad": float(np.median(np.abs(col - med))),
            "count": int(col.size),
        }
    return out


def _estimate_error(name: str, data: np.ndarray, cfg: ExperimentConfig, rng) -> float:
    d = cfg.d
    if cfg.scenario is Scenario.COV_SHIFT:
        truth = banded_covariance(d)
        if name == "stv":
            sigma = fit_stv(data, "cov", cfg.learn, rng).covariance
        elif name == "kendall":
            sigma = baseline_kendall_cov(data)
        else:
            sigma = baseline_sample_mean_cov(data)[1]
        return float(np.linalg.norm(sigma - truth, "fro"))
    if name == "stv":
        est = fit_stv(data, "mean", cfg.learn, rng).mean
    elif name == "median":
        est = baseline_componentwise_median(data)
    else:
        est = baseline_sample_mean_cov(data)[0]
    return float(np.linalg.norm(est))


def _run_trial(cfg: ExperimentConfig, trial: int):
    seed = cfg.trial_seed(trial)
    data, _ = sample_huber(cfg.contamination(), cfg.n, stream(seed, "data"))
    errs, walls, fails = [], [], []
    for name in cfg.estimators:
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                errs.append(_estimate_error(name, data, cfg, stream(seed, "fit", name)))
        except (StvError, np.linalg.LinAlgError) as exc:
            errs.append(float("nan"))
            fails.append(f"trial {trial} {name}: {exc}")
        walls.append((time.perf_counter() - t0) * 1e3)
    return seed, errs, walls, fails


def _run(cfg: ExperimentConfig, metric: str, workers: int | None) -> ExperimentReport:
    trials = range(cfg.trials)
    if workers and workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, [cfg] * cfg.trials, trials))
    else:
        results = [_run_trial(cfg, t) for t in trials]
    spec = cfg.contamination()
    return ExperimentReport(
        scenario=cfg.scenario.value,
        d=cfg.d,
        n=cfg.n,
        eps=float(spec.eps),
        estimators=list(cfg.estimators),
        metric=metric,
        errors=np.array([r[1] for r in results], dtype=float).reshape(cfg.trials, len(cfg.estimators)),
        seeds=[r[0] for r in results],
        wall_ms=np.array([r[2] for r in results], dtype=float).reshape(cfg.trials, len(cfg.estimators)),
        failures=[f for r in results for f in r[3]],
    )


def run_mean_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Euclidean error of each mean estimator against the true mean 0."""
    if cfg.scenario not in (Scenario.MEAN_SHIFT, Scenario.CLEAN):
        raise InputError("mean experiments need the mean_shift or clean scenario")
    return _run(cfg, "euclidean", workers)


def run_cov_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Frobenius error of each covariance estimator against the banded truth."""
    if cfg.scenario is not Scenario.COV_SHIFT:
        raise InputError("covariance experiments need the cov_shift scenario")
    return _run(cfg, "frobenius", workers)


@dataclass
class RateResult:
    slope: float
    n_grid: list[int]
    mean_errors: list[float]
    errors: np.ndarray  # len(n_grid) x trials
    estimator: str


def fit_rate(n_grid, mean_errors) -> float:
    """Least-squares slope of log(mean error) against log(n)."""
    n = np.asarray(n_grid, dtype=float)
    e = np.asarray(mean_errors, dtype=float)
    if np.unique(n).size < 2:
        raise InputError("rate undefined: need at least two distinct sample sizes")
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise InputError("rate undefined: errors must be finite and positive")
    return float(np.polyfit(np.log(n), np.log(e), 1)[0])


def run_rate_check(
    d: int,
    n_grid,
    trials: int,
    learn: StvLearnConfig,
    seed: int,
    estimator: str = "stv",
    workers: int | None = None,
) -> RateResult:
    """Clean-data errors over a grid of sample sizes and their log-log slope."""
    n_grid = [int(v) for v in n_grid]
    if len(set(n_grid)) < 2:
        raise InputError("rate undefined: need at least two distinct sample sizes")
    rows = []
    for n in n_grid:
        cfg = ExperimentConfig(Scenario.CLEAN, d, n, trials, (estimator,), learn, derive_seed(seed, "rate", n))
        rep = run_mean_experiment(cfg, workers)
        rows.append(rep.errors[:, 0])
    errors = np.array(rows)
    means = [float(np.nanmean(r)) for r in errors]
    return RateResult(fit_rate(n_grid, means), n_grid, means, errors, estimator)


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def report_csv(report: ExperimentReport, timing: bool = False) -> str:
    """CSV text, one row per trial x estimator.  ``wall_ms`` is blank unless ``timing``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for t in range(report.trials):
        for j, name in enumerate(report.estimators):
            w.writerow([
                report.scenario, report.d, report.n, repr(float(report.eps)), name, t, report.seeds[t],
                _fmt(report.errors[t, j]), f"{report.wall_ms[t, j]:.1f}" if timing else "",
            ])
    return buf.getvalue()


def summary_markdown(report: ExperimentReport) -> str:
    agg = report.aggregates()
    if report.metric == "frobenius":
        head, key, spread = "median (MAD)", "median", "mad"
    else:
        head, key, spread = "mean (std)", "mean", "std"
    lines = [
        f"### {report.scenario}: d={report.d}, n={report.n}, eps={report.eps:g}, trials={report.trials}",
        "",
        f"| estimator | {report.metric} error, {head} | fits |",
        "|---|---|---|",
    ]
    for name in report.estimators:
        a = agg[name]
        lines.append(f"| {name} | {a[key]:.3f} ({a[spread]:.3f}) | {a['count']} |")
    if report.failures:
        lines += ["", "Failures:"] + [f"- {f}" for f in report.failures]
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, path, format: str = "csv", timing: bool = False) -> list[Path]:
    """Write the report.  ``csv`` also writes a markdown summary next to it; ``json`` dumps everything."""
    path = Path(path)
    try:
        if format == "csv":
            path.write_text(report_csv(report, timing))
            md = path.with_suffix(".md")
            md.write_text(summary_markdown(report))
            return [path, md]
        if format == "json":
            d = report.to_dict()
            if not timing:
                d.pop("wall_ms")
            path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
            return [path]
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    raise InputError(f"unknown format {format!r}; expected csv or json")


def read_report_csv(path) -> tuple[list[str], np.ndarray]:
    """Parse an emitted CSV back into (estimators, trials x estimators error matrix)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return [], np.zeros((0, 0))
    names = list(dict.fromkeys(r["estimator"] for r in rows))
    trials = max(int(r["trial"]) for r in rows) + 1
    err = np.full((trials, len(names)), np.nan)
    for r in rows:
        err[int(r["trial"]), names.index(r["estimator"])] = float(r["error"]) if r["error"] else np.nan
    return names, err


def config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["scenario"] = cfg.scenario.value
    return d
