"""Total variation, its smoothed relaxation and related integral probability metrics.

The smoothed total variation between P and Q is

    STV(P, Q) = sup_{|u|_H <= U, |b| <= B} E_P sigma(u(X) - b) - E_Q sigma(u(Y) - b),

a relaxation of TV obtained by replacing indicator witnesses with a squashing
function ``sigma`` applied to RKHS functions.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit, logsumexp
from scipy.stats import norm

from .errors import InputError, NumericError
from .kernels import FeatureSpace, KernelSpec, RkhsFunction, gram
from .models import KernelExpFamilyModel, sample_model
from .optim import GdaConfig, projected_ascent

_COV_DEPTH_LEVEL = float(2.0 * norm.cdf(1.0) - 1.0)


class SigmaFunction(enum.Enum):
    """Squashing functions applied to witness scores."""

    SIGMOID = "sigmoid"
    STEP = "step"
    IDENTITY = "identity"

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self is SigmaFunction.SIGMOID:
            return expit(z)
        if self is SigmaFunction.STEP:
            return (z >= 0).astype(float)
        return z

    def grad(self, z):
        z = np.asarray(z, dtype=float)
        if self is SigmaFunction.SIGMOID:
            s = expit(z)
            return s * (1.0 - s)
        if self is SigmaFunction.STEP:
            return np.zeros_like(z)
        return np.ones_like(z)

    def grad2(self, z):
        z = np.asarray(z, dtype=float)
        if self is SigmaFunction.SIGMOID:
            s = expit(z)
            return s * (1.0 - s) * (1.0 - 2.0 * s)
        return np.zeros_like(z)

    @property
    def sign_symmetric(self) -> bool:
        """sigma(z) + sigma(-z) is constant, so flipping (u, b) negates the value."""
        return self is not SigmaFunction.STEP


def _default_inner() -> GdaConfig:
    return GdaConfig(outer_steps=300, step_inner=1.0, decay="none", restarts=8, warmup=0)


@dataclass(frozen=True)
class StvConfig:
    """Witness class and ascent schedule for evaluating STV.

    ``inner.outer_steps`` is the number of ascent steps per restart,
    ``inner.step_inner`` the step size and ``inner.restarts`` the number of
    starting witnesses.
    """

    kernel: KernelSpec
    sigma: SigmaFunction = SigmaFunction.SIGMOID
    U: float = 1.0
    bias_bound: float = np.inf
    inner: GdaConfig = field(default_factory=_default_inner)

    def __post_init__(self):
        if not self.U > 0:
            raise InputError("U must be positive")
        if not self.bias_bound >= 0:
            raise InputError("bias_bound must be non-negative")


@dataclass(frozen=True)
class WeightedSample:
    """Points with non-negative weights summing to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if p.shape[0] != w.shape[0] or p.shape[0] == 0:
            raise InputError("points and weights must be non-empty and aligned")
        if np.any(w < 0) or not np.isfinite(w).all():
            raise InputError("weights must be finite and non-negative")
        s = w.sum()
        if not s > 0:
            raise InputError("weights sum to zero")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w / s)

    @classmethod
    def empirical(cls, points) -> "WeightedSample":
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(p, np.full(p.shape[0], 1.0 / p.shape[0]))

    @classmethod
    def from_log_weights(cls, points, log_w) -> "WeightedSample":
        log_w = np.asarray(log_w, dtype=float)
        return cls(points, np.exp(log_w - logsumexp(log_w)))

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass
class StvResult:
    value: float
    u: RkhsFunction
    b: float
    diagnostics: dict = field(default_factory=dict)

    def witness(self, sigma: SigmaFunction = SigmaFunction.SIGMOID) -> Callable:
        return lambda x: sigma(self.u(x) - self.b)


def weighted_median(values, weights) -> float:
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(v, kind="stable")
    cw = np.cumsum(w[order])
    idx = int(np.searchsorted(cw, 0.5 * cw[-1]))
    return float(v[order][min(idx, v.size - 1)])


class _WitnessObjective:
    """J(theta, b) = sum w_P sigma(phi_P theta - b) - sum w_Q sigma(phi_Q theta - b)."""

    def __init__(self, phi_p, w_p, phi_q, w_q, sigma: SigmaFunction):
        self.phi_p, self.w_p = phi_p, w_p
        self.phi_q, self.w_q = phi_q, w_q
        self.sigma = sigma

    def value(self, theta, b) -> float:
        sp = self.phi_p @ theta - b
        sq = self.phi_q @ theta - b
        return float(self.w_p @ self.sigma(sp) - self.w_q @ self.sigma(sq))

    def __call__(self, y):
        theta, b = y[:-1], y[-1]
        sp = self.phi_p @ theta - b
        sq = self.phi_q @ theta - b
        val = self.w_p @ self.sigma(sp) - self.w_q @ self.sigma(sq)
        gp = self.w_p * self.sigma.grad(sp)
        gq = self.w_q * self.sigma.grad(sq)
        g = np.empty_like(y)
        g[:-1] = self.phi_p.T @ gp - self.phi_q.T @ gq
        g[-1] = gq.sum() - gp.sum()
        return float(val), g

    def polish_bias(self, theta, b, bias_bound) -> tuple[float, float]:
        """Maximize over b for fixed theta: grid over pooled score quantiles, then a bounded refine."""
        scores = np.concatenate([self.phi_p @ theta, self.phi_q @ theta])
        lo, hi = scores.min() - 1.0, scores.max() + 1.0
        lo, hi = max(lo, -bias_bound), min(hi, bias_bound)
        if not lo < hi:
            cand = np.array([np.clip(b, -bias_bound, bias_bound)])
        else:
            qs = np.quantile(scores, np.linspace(0, 1, 201))
            cand = np.unique(np.clip(np.concatenate([qs, [lo, hi, b]]), lo, hi))
        vals = np.array([self.value(theta, c) for c in cand])
        i = int(np.argmax(vals))
        best_b, best_v = float(cand[i]), float(vals[i])
        if self.sigma is not SigmaFunction.STEP and cand.size > 1:
            a = cand[max(i - 1, 0)]
            c = cand[min(i + 1, cand.size - 1)]
            if c > a:
                res = minimize_scalar(lambda t: -self.value(theta, t), bounds=(a, c), method="bounded",
                                      options={"xatol": 1e-10})
                if -res.fun > best_v:
                    best_b, best_v = float(res.x), float(-res.fun)
        return best_b, best_v


def _stv_features(P: WeightedSample, Q: WeightedSample, cfg: StvConfig) -> FeatureSpace:
    k = cfg.kernel
    if P.dim != k.dim or Q.dim != k.dim:
        raise InputError("sample dimension differs from the kernel dimension")
    anchors = np.vstack([P.points, Q.points]) if k.kind.value == "rbf" else None
    return FeatureSpace(k, anchors=anchors)


def stv_between_samples(
    P: WeightedSample, Q: WeightedSample, cfg: StvConfig, rng: np.random.Generator
) -> StvResult:
    """STV between two weighted point sets by restarted projected gradient ascent.

    Starting witnesses: zero, the (normalized) mean-embedding difference and
    random directions on the U-sphere; b starts at the weighted median of the
    pooled scores.  Each run is finished by an exact line search over b.
    """
    space = _stv_features(P, Q, cfg)
    phi_p = space.features(P.points)
    phi_q = space.features(Q.points)
    obj = _WitnessObjective(phi_p, P.weights, phi_q, Q.weights, cfg.sigma)
    pooled_w = np.concatenate([P.weights, Q.weights]) * 0.5

    def project(y):
        y = y.copy()
        y[:-1] = space.project(y[:-1], cfg.U)
        y[-1] = np.clip(y[-1], -cfg.bias_bound, cfg.bias_bound)
        return y

    starts = [np.zeros(space.size), space.normalize(P.weights @ phi_p - Q.weights @ phi_q, cfg.U)]
    while len(starts) < cfg.inner.restarts:
        starts.append(space.random_direction(rng, cfg.U))

    best = (-np.inf, None, 0.0)
    values = []
    for theta0 in starts:
        scores = np.concatenate([phi_p @ theta0, phi_q @ theta0])
        b0 = np.clip(weighted_median(scores, pooled_w), -cfg.bias_bound, cfg.bias_bound)
        y0 = np.concatenate([theta0, [b0]])
        if cfg.sigma is SigmaFunction.STEP:
            y, v = y0, obj(y0)[0]
        else:
            y, v = projected_ascent(obj, y0, cfg.inner.outer_steps, cfg.inner.step_inner, project=project)
        theta, b = y[:-1], y[-1]
        b, v = obj.polish_bias(theta, b, cfg.bias_bound)
        if cfg.sigma.sign_symmetric and v < 0:
            theta, b, v = -theta, -b, -v
        values.append(v)
        if v > best[0]:
            best = (v, theta, b)
    v, theta, b = best
    u, bias = space.to_function(theta, float(b))
    return StvResult(max(float(v), 0.0), u, bias, {"restart_values": values})


def _model_weighted_sample(m: KernelExpFamilyModel, Z, ell, rng) -> tuple[WeightedSample, dict]:
    diag = {}
    if Z is not None:
        pts, log_q = Z
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        logits = np.asarray(m.f(pts)) - np.asarray(log_q, dtype=float)
        ws = WeightedSample.from_log_weights(pts, logits)
        diag["max_weight"] = float(ws.weights.max())
        return ws, diag
    if m.submodel is not None:
        return WeightedSample.empirical(sample_model(m, ell, rng)), diag
    z = m.base.sample(ell, rng)
    ws = WeightedSample.from_log_weights(z, np.asarray(m.f(z)))
    diag["max_weight"] = float(ws.weights.max())
    return ws, diag


def stv_model_vs_samples(
    m: KernelExpFamilyModel,
    data,
    cfg: StvConfig,
    rng: np.random.Generator,
    Z: tuple[np.ndarray, np.ndarray] | None = None,
    ell: int | None = None,
) -> StvResult:
    """STV(p_f, empirical data).

    Model expectations use exact draws for the Gaussian submodels, or
    self-normalized importance sampling when ``Z = (points, log_q)`` is given,
    where ``log_q`` is the log-density of the proposal w.r.t. the base measure.
    Other models fall back to importance sampling from the base measure.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    ell = ell or max(data.shape[0], 4000)
    model_side, diag = _model_weighted_sample(m, Z, ell, rng)
    if diag.get("max_weight", 0.0) > 0.999:
        warnings.warn("importance weights are degenerate (max weight > 0.999)", RuntimeWarning, stacklevel=2)
        diag["degenerate_weights"] = True
    res = stv_between_samples(model_side, WeightedSample.empirical(data), cfg, rng)
    res.diagnostics.update(diag)
    return res


class BiasBound(NamedTuple):
    value: float
    informative: bool


def bias_bound(f: RkhsFunction, g: RkhsFunction, U: float) -> BiasBound:
    """Upper bound |f - g|_H / U on TV - STV between p_f and p_g.

    When U <= |f - g|_H the bound exceeds one and the trivial bound 1 is returned
    with ``informative=False``.
    """
    if not U > 0:
        raise InputError("U must be positive")
    dist = (f - g).norm()
    if U <= dist:
        return BiasBound(1.0, False)
    return BiasBound(dist / U, True)


def decay_rate_check(sigma: SigmaFunction, c: float, t_grid=None) -> tuple[float, float]:
    """Largest value of sigma(-c log t) (t - 1) over t >= 1, and its bound 1/c."""
    if sigma is not SigmaFunction.SIGMOID:
        raise InputError("the decay-rate bound is established for the sigmoid only")
    if not c > 1:
        raise InputError("c must exceed 1")
    if t_grid is None:
        t_grid = np.concatenate([[1.0], 1.0 + np.logspace(-8, 8, 200001)])
    t = np.asarray(t_grid, dtype=float)
    vals = expit(-c * np.log(t)) * (t - 1.0)
    return float(vals.max()), 1.0 / c


def tv_gaussian_mean(m1, m2) -> float:
    """TV(N(m1, I), N(m2, I)) = 2 Phi(|m1 - m2| / 2) - 1."""
    delta = np.linalg.norm(np.atleast_1d(np.asarray(m1, float)) - np.atleast_1d(np.asarray(m2, float)))
    return float(2.0 * norm.cdf(delta / 2.0) - 1.0)


def mc_tv(
    log_p: Callable, log_q: Callable, sample_p: Callable, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """TV(p, q) = E_p (1 - q/p)_+ by Monte Carlo, with standard error; clamped to [0, 1]."""
    if n < 2:
        raise InputError("n must be >= 2")
    x = sample_p(n, rng)
    lp, lq = np.asarray(log_p(x), dtype=float), np.asarray(log_q(x), dtype=float)
    bad = np.flatnonzero(~np.isfinite(lp) | np.isnan(lq) | (lq == np.inf))
    if bad.size:
        raise NumericError(f"non-finite log-density at sampled point {np.asarray(x)[bad[0]].tolist()}")
    r = np.exp(np.minimum(lq - lp, 700.0))
    h = np.maximum(1.0 - r, 0.0)
    est = float(np.clip(h.mean(), 0.0, 1.0))
    return est, float(h.std(ddof=1) / np.sqrt(n))


def step_stv_gaussian_mean_1d(m1: float, m2: float, b_grid=None) -> float:
    """Brute-force STV with step sigma between N(m1, 1) and N(m2, 1).

    Linear witnesses u(x) = s x; for the step function only sign(s) matters,
    so the supremum is a maximum over s = +-1 and the threshold grid.
    """
    if b_grid is None:
        lo, hi = min(m1, m2) - 10.0, max(m1, m2) + 10.0
        b_grid = np.linspace(lo, hi, 2001)
    b = np.asarray(b_grid, dtype=float)
    up = norm.sf(b - m1) - norm.sf(b - m2)  # P(X >= b) - Q(X >= b)
    down = norm.cdf(-b - m1) - norm.cdf(-b - m2)  # s = -1: P(X <= -b) - Q(X <= -b)
    return float(max(up.max(), down.max(), 0.0))


def mmd(P, Q, kernel: KernelSpec) -> float:
    """Biased (V-statistic) maximum mean discrepancy."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    val = gram(kernel, P, P).mean() + gram(kernel, Q, Q).mean() - 2.0 * gram(kernel, P, Q).mean()
    return float(np.sqrt(max(val, 0.0)))


def _directions(d: int, n_random: int, rng: np.random.Generator, extra=None) -> np.ndarray:
    eye = np.eye(d)
    dirs = [eye, -eye]
    if n_random > 0:
        r = rng.standard_normal((n_random, d))
        dirs.append(r / np.linalg.norm(r, axis=1, keepdims=True))
    if extra is not None:
        dirs.append(np.atleast_2d(np.asarray(extra, dtype=float)))
    return np.vstack(dirs)


def tukey_depth_ipm(data, mu, directions: int = 500, rng: np.random.Generator | None = None) -> float:
    """max_u (1/n) sum 1[u^T (X - mu) >= 0] - 1/2 over random and +-coordinate directions."""
    x = np.atleast_2d(np.asarray(data, dtype=float))
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.shape[0] != x.shape[1]:
        raise InputError("mu dimension differs from the data")
    rng = rng if rng is not None else np.random.default_rng(0)
    dirs = _directions(x.shape[1], directions, rng)
    frac = ((x - mu) @ dirs.T >= 0).mean(axis=0)
    return float(frac.max() - 0.5)


def covariance_depth_ipm(data, sigma, directions: int = 500, rng: np.random.Generator | None = None) -> float:
    """max_u |(1/n) sum 1[(u^T X)^2 <= u^T Sigma u] - (2 Phi(1) - 1)|."""
    x = np.atleast_2d(np.asarray(data, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape != (x.shape[1], x.shape[1]) or not np.allclose(sigma, sigma.T):
        raise InputError("Sigma must be a symmetric d x d matrix")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise InputError("Sigma must be positive definite") from exc
    rng = rng if rng is not None else np.random.default_rng(0)
    dirs = _directions(x.shape[1], directions, rng)
    proj2 = (x @ dirs.T) ** 2
    scale = np.einsum("kd,de,ke->k", dirs, sigma, dirs)
    frac = (proj2 <= scale).mean(axis=0)
    return float(np.abs(frac - _COV_DEPTH_LEVEL).max())


def gaussian_grid_sample(mean: float, lo: float, hi: float, points: int = 6001) -> WeightedSample:
    """Quadrature representation of N(mean, 1) on a uniform 1-D grid."""
    grid = np.linspace(lo, hi, points)
    return WeightedSample(grid[:, None], norm.pdf(grid - mean))


__all__ = [
    "SigmaFunction",
    "StvConfig",
    "StvResult",
    "WeightedSample",
    "BiasBound",
    "bias_bound",
    "covariance_depth_ipm",
    "decay_rate_check",
    "gaussian_grid_sample",
    "mc_tv",
    "mmd",
    "step_stv_gaussian_mean_1d",
    "stv_between_samples",
    "stv_model_vs_samples",
    "tukey_depth_ipm",
    "tv_gaussian_mean",
    "weighted_median",
]
