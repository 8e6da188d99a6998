"""Acceptance criteria at full size.  Each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (about 20 minutes on one core).
"""

import os
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from stvlearn.bench import ExperimentConfig, Scenario, run_cov_experiment, run_mean_experiment, run_rate_check
from stvlearn.estimators import StvLearnConfig
from stvlearn.verify import (
    check_decay_rate,
    check_gradients,
    check_importance_vs_exact,
    check_stv_gap,
    check_step_stv,
)

pytestmark = pytest.mark.slow
WORKERS = os.cpu_count() or 1


def learn(inv_r2, inv_u2):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return StvLearnConfig.from_penalties(inv_r2, inv_u2)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


class TestTheoryChecks:
    def test_01_decay_rate(self, report_criterion):
        res, secs = timed(check_decay_rate, (1.5, 2.0, 5.0, 10.0, 100.0))
        ok = bool(res.passed) and secs < 1.0
        report_criterion(1, "sigmoid decay rate", ok, f"{res.detail}; {secs:.2f} s")
        assert ok

    def test_02_stv_below_tv(self, report_criterion):
        res, secs = timed(check_stv_gap, pairs=20, multiples=(2, 5, 10, 50), seed=0)
        ok = bool(res.passed) and secs < 120
        report_criterion(2, "STV <= TV with bias bound", ok, f"{res.detail}; {secs:.1f} s")
        assert ok

    def test_03_step_sigma(self, report_criterion):
        res, secs = timed(check_step_stv, pairs=10, seed=0, tol=1e-3)
        ok = bool(res.passed) and secs < 10
        report_criterion(3, "step-sigma STV equals TV", ok, f"{res.detail}; {secs:.2f} s")
        assert ok

    def test_08_gradients(self, report_criterion):
        res, secs = timed(check_gradients, points=20, seed=0, tol=1e-4)
        ok = bool(res.passed) and secs < 30
        report_criterion(8, "gradient correctness", ok, f"{res.detail}; {secs:.2f} s")
        assert ok

    def test_09_importance_sampling(self, report_criterion):
        res = check_importance_vs_exact(reps=20, ell=100_000, seed=0)
        report_criterion(9, "importance vs exact sampling", bool(res.passed), res.detail)
        assert res.passed


class TestBenchmarks:
    def test_04_mean_benchmark(self, report_criterion):
        cfg = ExperimentConfig(Scenario.MEAN_SHIFT, 10, 1000, 10, ("stv", "median"), learn(3e-5, 1e-4), master_seed=0)
        rep, secs = timed(run_mean_experiment, cfg, workers=WORKERS)
        agg = rep.aggregates()
        stv, med = agg["stv"]["mean"], agg["median"]["mean"]
        ok = 0.08 <= stv <= 0.35 and stv < med and 0.30 <= med <= 0.60 and secs < 600
        report_criterion(4, "mean benchmark d=10", ok,
                         f"STV {stv:.3f} ({agg['stv']['std']:.3f}), median {med:.3f} ({agg['median']['std']:.3f}); {secs:.0f} s")
        assert ok

    def test_05_mean_scaling(self, report_criterion):
        errs = {}
        for n in (100, 1000):
            cfg = ExperimentConfig(Scenario.MEAN_SHIFT, 50, n, 5, ("stv",), learn(3e-5, 1e-4), master_seed=0)
            errs[n] = run_mean_experiment(cfg, workers=WORKERS).aggregates()["stv"]["mean"]
        ok = errs[1000] <= 0.5 * errs[100]
        report_criterion(5, "mean benchmark scaling d=50", ok,
                         f"n=100: {errs[100]:.3f}, n=1000: {errs[1000]:.3f}, ratio {errs[1000] / errs[100]:.2f}")
        assert ok

    def test_06_cov_benchmark(self, report_criterion):
        cfg = ExperimentConfig(Scenario.COV_SHIFT, 5, 5000, 10, ("stv", "kendall", "sample_cov"), learn(1e-4, 1e-4), master_seed=0)
        rep, secs = timed(run_cov_experiment, cfg, workers=WORKERS)
        agg = rep.aggregates()
        stv, ken, sc = agg["stv"]["median"], agg["kendall"]["median"], agg["sample_cov"]["median"]
        ok = stv < sc and stv < ken and stv < 2.0 and secs < 900
        report_criterion(6, "covariance benchmark d=5", ok,
                         f"STV {stv:.3f} (MAD {agg['stv']['mad']:.3f}), Kendall {ken:.3f}, sample cov {sc:.3f}; {secs:.0f} s")
        assert ok

    def test_07_rate(self, report_criterion):
        grid = [250, 500, 1000, 2000, 4000]
        t0 = time.perf_counter()
        stv = run_rate_check(10, grid, 10, learn(3e-5, 1e-4), seed=0, estimator="stv", workers=WORKERS)
        oracle = run_rate_check(10, grid, 10, learn(3e-5, 1e-4), seed=0, estimator="mean", workers=WORKERS)
        secs = time.perf_counter() - t0
        ok = -0.65 <= stv.slope <= -0.35 and -0.65 <= oracle.slope <= -0.35 and secs < 900
        errs = ", ".join(f"{e:.3f}" for e in stv.mean_errors)
        report_criterion(7, "clean-data rate", ok,
                         f"STV slope {stv.slope:.3f} (errors {errs}), sample-mean slope {oracle.slope:.3f}; {secs:.0f} s")
        assert ok


class TestCli:
    def test_10_determinism(self, report_criterion, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            path = tmp_path / name
            cmd = [sys.executable, "-m", "stvlearn.cli", "mean-bench", "--d", "3", "--n", "300", "--eps", "0.1",
                   "--trials", "3", "--seed", "7", "--threads", "1", "--out", str(path)]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outs.append(path.read_bytes())
        ok = outs[0] == outs[1] and len(outs[0]) > 0
        report_criterion(10, "byte-identical mean-bench", ok, f"{len(outs[0])} bytes, identical={outs[0] == outs[1]}")
        assert ok
