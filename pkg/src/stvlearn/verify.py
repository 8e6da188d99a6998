"""Numerical property checks shared by the ``verify`` command and the acceptance tests."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .divergences import (
    SigmaFunction,
    StvConfig,
    decay_rate_check,
    gaussian_grid_sample,
    step_stv_gaussian_mean_1d,
    stv_between_samples,
    tv_gaussian_mean,
)
from .estimators import (
    ExactSampling,
    ImportanceSampling,
    StvLearnConfig,
    Variant,
    approx_model_expectation,
    make_objective,
)
from .kernels import KernelSpec, RkhsFunction
from .optim import finite_diff_check
from .rng import stream


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __iter__(self):
        return iter((self.name, self.passed, self.detail))


def check_decay_rate(cs=(1.5, 2.0, 5.0, 10.0, 100.0)) -> CheckResult:
    worst = -np.inf
    violations = 0
    for c in cs:
        sup, bound = decay_rate_check(SigmaFunction.SIGMOID, c)
        violations += sup > bound
        worst = max(worst, sup - bound)
    return CheckResult("sigmoid decay rate <= 1/c", violations == 0, f"violations={violations}, max(sup - 1/c)={worst:.4f}")


def check_stv_gap(pairs: int, multiples=(2, 5, 10, 50), seed: int = 0, slack: float = 0.02,
                  grid_points: int = 4001) -> CheckResult:
    """0 <= TV - STV <= |f - g| / U + slack for random 1-D Gaussian mean pairs."""
    rng = stream(seed, "stv-gap")
    ok = total = 0
    worst = -np.inf
    for _ in range(pairs):
        m1, m2 = rng.uniform(-2, 2, size=2)
        delta = abs(m1 - m2)
        lo, hi = min(m1, m2) - 10.0, max(m1, m2) + 10.0
        P, Q = gaussian_grid_sample(m1, lo, hi, grid_points), gaussian_grid_sample(m2, lo, hi, grid_points)
        tv = tv_gaussian_mean(m1, m2)
        for k in multiples:
            U = k * delta
            stv = stv_between_samples(P, Q, StvConfig(KernelSpec.linear(1), U=U), rng).value
            gap = tv - stv
            total += 1
            ok += 0.0 <= gap <= delta / U + slack
            worst = max(worst, gap - delta / U)
    frac = ok / total
    return CheckResult("0 <= TV - STV <= |f-g|/U + 0.02", frac >= 0.95,
                       f"{ok}/{total} cases ({frac:.1%}), max(gap - |f-g|/U)={worst:.4f}")


def check_step_stv(pairs: int, seed: int = 0, tol: float = 1e-3) -> CheckResult:
    rng = stream(seed, "step-stv")
    worst = 0.0
    for _ in range(pairs):
        m1, m2 = rng.uniform(-3, 3, size=2)
        worst = max(worst, abs(step_stv_gaussian_mean_1d(m1, m2) - tv_gaussian_mean(m1, m2)))
    return CheckResult("step-sigma STV reproduces TV", worst < tol, f"max |STV - TV|={worst:.2e} over {pairs} pairs")


def gradient_errors(points: int, seed: int = 0) -> list[float]:
    """Max relative finite-difference errors of the full objective over mixed settings."""
    rng = stream(seed, "grad")
    settings = [
        ("mean", ExactSampling(300)),
        ("cov", ExactSampling(300)),
        ("mean", ImportanceSampling(400)),
        ("cov", ImportanceSampling(400)),
    ]
    errs = []
    for i in range(points):
        family, me = settings[i % len(settings)]
        variant = list(Variant)[i % 3]
        d = int(rng.integers(1, 4))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            cfg = StvLearnConfig(variant=variant, r=2.0, U=5.0, model_expectation=me)
        data = rng.standard_normal((60, d)) + rng.normal(0, 1, size=d)
        obj = make_objective(data, family, cfg, rng)
        x = 0.2 * rng.standard_normal(obj.param.size)
        y = rng.standard_normal(obj.space.size + 1)
        ex = finite_diff_check(lambda p: obj(p, y)[:2], x, 1e-5)
        ey = finite_diff_check(lambda q: (lambda v: (v[0], v[2]))(obj(x, q)), y, 1e-5)
        errs.append(max(ex, ey))
    return errs


def check_gradients(points: int = 20, seed: int = 0, tol: float = 1e-4) -> CheckResult:
    errs = gradient_errors(points, seed)
    return CheckResult("analytic gradients match finite differences", max(errs) < tol,
                       f"max relative error {max(errs):.2e} over {points} points")


def importance_vs_exact(reps: int, ell: int = 100_000, seed: int = 0, d: int = 2):
    """Per repetition: (IS estimate, IS stderr, exact estimate, exact stderr)."""
    rng = stream(seed, "is-vs-exact")
    k = KernelSpec.linear(d)
    out = []
    for _ in range(reps):
        v = rng.standard_normal(d)
        f = RkhsFunction.explicit(k, v / np.linalg.norm(v))
        u = RkhsFunction.explicit(k, rng.standard_normal(d))
        b = float(rng.normal())
        Z = rng.standard_normal((ell, d))
        est, se = approx_model_expectation(f, u, b, Z, np.zeros(ell), return_stderr=True)
        X = f.vector + rng.standard_normal((ell, d))
        s = SigmaFunction.SIGMOID(u(X) - b)
        out.append((est, se, float(s.mean()), float(s.std(ddof=1) / np.sqrt(ell))))
    return out


def check_importance_vs_exact(reps: int = 20, ell: int = 100_000, seed: int = 0) -> CheckResult:
    rows = importance_vs_exact(reps, ell, seed)
    ok = sum(abs(a - c) <= 3.0 * np.hypot(sa, sc) for a, sa, c, sc in rows)
    return CheckResult("importance sampling agrees with exact sampling", ok / reps >= 0.95,
                       f"{ok}/{reps} within 3 combined stderr")


def run_checks(seed: int = 0) -> list[CheckResult]:
    """Quick versions of the property checks (a few seconds)."""
    return [
        check_decay_rate(),
        check_stv_gap(pairs=4, seed=seed),
        check_step_stv(pairs=10, seed=seed),
        check_gradients(points=8, seed=seed),
        check_importance_vs_exact(reps=10, ell=20_000, seed=seed),
    ]
