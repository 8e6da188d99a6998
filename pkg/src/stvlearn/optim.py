"""First-order solvers: projected gradient ascent and alternating min-max descent-ascent."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import InputError, NumericError

_EARLY_STOP_PATIENCE = 10


@dataclass(frozen=True)
class GdaConfig:
    """Schedule for :func:`gda_minimax`.

    ``decay='inv_sqrt'`` keeps the step sizes constant for ``warmup`` outer
    steps and scales them by sqrt(warmup / t) afterwards.  ``select='best'``
    returns the checkpoint with the lowest smoothed outer value recorded after
    warm-up; ``select='last'`` returns the final iterate.
    """

    outer_steps: int = 2000
    inner_steps_per_outer: int = 5
    step_outer: float = 0.005
    step_inner: float = 1.0
    decay: str = "inv_sqrt"
    warmup: int = 200
    restarts: int = 4
    tol: float = 0.0
    max_wall_ms: float | None = None
    select: str = "best"
    checkpoint_every: int = 50

    def __post_init__(self):
        if self.outer_steps < 1 or self.inner_steps_per_outer < 1:
            raise InputError("outer_steps and inner_steps_per_outer must be >= 1")
        if not (self.step_outer > 0 and self.step_inner > 0):
            raise InputError("step sizes must be positive")
        if self.decay not in ("none", "inv_sqrt"):
            raise InputError(f"unknown decay {self.decay!r}")
        if self.select not in ("best", "last"):
            raise InputError(f"unknown select {self.select!r}")
        if self.restarts < 1:
            raise InputError("restarts must be >= 1")

    def scale(self, t: int) -> float:
        if self.decay == "inv_sqrt" and t > self.warmup:
            return float(np.sqrt(max(self.warmup, 1) / t))
        return 1.0

    def with_(self, **kw) -> "GdaConfig":
        return replace(self, **kw)


@dataclass
class GdaResult:
    x: np.ndarray
    y: np.ndarray
    value: float
    trace: np.ndarray
    steps: int
    best_step: int
    truncated: bool = False
    converged: bool = False
    info: dict = field(default_factory=dict)


def _identity(v):
    return v


def _check_finite(val, gx, gy, t, trace, x):
    if not (np.isfinite(val) and np.all(np.isfinite(gx)) and np.all(np.isfinite(gy))):
        raise NumericError(f"non-finite objective or gradient at outer step {t}", trace=np.array(trace), point=x.copy())


def gda_minimax(
    objective: Callable,
    x0: np.ndarray,
    y0: np.ndarray,
    cfg: GdaConfig,
    *,
    project_x: Callable = _identity,
    project_y: Callable = _identity,
    accept_x: Callable | None = None,
    canonicalize: Callable | None = None,
    on_outer_step: Callable | None = None,
) -> GdaResult:
    """Alternating projected gradient descent (x) / ascent (y) on ``objective``.

    ``objective(x, y)`` returns ``(value, grad_x, grad_y)``.  Each outer step
    runs ``inner_steps_per_outer`` ascent steps on y, optionally canonicalizes
    y, then takes one descent step on x.  ``accept_x(x)`` may reject a
    candidate, in which case the step is halved (up to 30 times).
    ``on_outer_step(t)`` is called first in every outer step and may refresh
    stochastic state inside the objective.
    """
    x = np.array(x0, dtype=float)
    y = np.array(y0, dtype=float)
    trace: list[float] = []
    t0 = time.perf_counter()
    best = None
    ema = None
    calm = 0
    truncated = converged = False
    halvings = 0
    t = 0
    for t in range(1, cfg.outer_steps + 1):
        if cfg.max_wall_ms is not None and (time.perf_counter() - t0) * 1e3 > cfg.max_wall_ms:
            truncated = True
            t -= 1
            break
        if on_outer_step is not None:
            on_outer_step(t)
        sc = cfg.scale(t)
        for _ in range(cfg.inner_steps_per_outer):
            val, gx, gy = objective(x, y)
            _check_finite(val, gx, gy, t, trace, x)
            y = project_y(y + cfg.step_inner * sc * gy)
        if canonicalize is not None:
            y = canonicalize(x, y)
        val, gx, gy = objective(x, y)
        _check_finite(val, gx, gy, t, trace, x)
        trace.append(float(val))

        ema = val if ema is None else 0.9 * ema + 0.1 * val
        if cfg.select == "best" and t > cfg.warmup and t % cfg.checkpoint_every == 0:
            if best is None or ema < best[0]:
                best = (ema, x.copy(), y.copy(), t)

        step = cfg.step_outer * sc
        x_new = project_x(x - step * gx)
        if accept_x is not None:
            tries = 0
            while not accept_x(x_new) and tries < 30:
                step *= 0.5
                tries += 1
                x_new = project_x(x - step * gx)
            halvings += tries
            if tries == 30:
                x_new = x
        if cfg.tol > 0:
            gnx = np.linalg.norm(x - project_x(x - gx))
            gny = np.linalg.norm(project_y(y + gy) - y)
            calm = calm + 1 if max(gnx, gny) < cfg.tol else 0
            if calm >= _EARLY_STOP_PATIENCE:
                x = x_new
                converged = True
                break
        x = x_new

    final_val = trace[-1] if trace else float("nan")
    result_x, result_y, best_step = x, y, t
    if cfg.select == "best" and best is not None and ema is not None and best[0] < ema:
        result_x, result_y, best_step = best[1], best[2], best[3]
        final_val = best[0]
    return GdaResult(
        x=result_x,
        y=result_y,
        value=float(final_val),
        trace=np.array(trace),
        steps=t,
        best_step=best_step,
        truncated=truncated,
        converged=converged,
        info={"step_halvings": halvings},
    )


def projected_ascent(
    objective: Callable,
    y0: np.ndarray,
    steps: int,
    step_size: float,
    *,
    project: Callable = _identity,
) -> tuple[np.ndarray, float]:
    """Plain projected gradient ascent; returns the best iterate and its value.

    ``objective(y)`` returns ``(value, grad)``.
    """
    y = np.array(y0, dtype=float)
    best_y, best_v = y.copy(), -np.inf
    for _ in range(steps + 1):
        v, g = objective(y)
        if not (np.isfinite(v) and np.all(np.isfinite(g))):
            raise NumericError("non-finite value in projected ascent", point=y.copy())
        if v > best_v:
            best_v, best_y = float(v), y.copy()
        y = project(y + step_size * g)
    return best_y, best_v


def finite_diff_check(fun: Callable, point, step: float = 1e-6) -> float:
    """Largest |fd - g| / (1 + |g|) over coordinates.

    ``fun(p)`` returns ``(value, grad)``; the reference uses central differences.
    """
    p = np.array(point, dtype=float).reshape(-1)
    _, g = fun(p)
    g = np.asarray(g, dtype=float).reshape(-1)
    if g.shape != p.shape:
        raise InputError("gradient shape does not match the point")
    worst = 0.0
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = step
        fp, _ = fun(p + e)
        fm, _ = fun(p - e)
        fd = (fp - fm) / (2 * step)
        worst = max(worst, abs(fd - g[i]) / (1.0 + abs(g[i])))
    return worst
