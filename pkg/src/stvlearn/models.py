"""Kernel exponential families p_f(x) = exp(f(x) - A(f)) dmu(x).

Two submodels have closed forms and are detected automatically:

* mean model: standard normal base, linear kernel, p_f = N(f, I), A(f) = |f|^2 / 2;
* covariance model: standard normal base, quadratic kernel with
  f(x) = -x^T F x / 2, p_f = N(0, (I + F)^-1), A(f) = -log det(I + F) / 2.

Anything else needs a Monte Carlo estimate of the log-partition function.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import DomainError, InputError, NumericError, StateError, UnsupportedModelError
from .kernels import KernelKind, KernelSpec, RkhsFunction, rkhs_eval

_LOG_2PI = float(np.log(2.0 * np.pi))


class BaseKind(enum.Enum):
    STD_NORMAL = "std_normal"
    UNIFORM_BOX = "uniform_box"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class BaseMeasure:
    """Reference measure mu.  ``log_density`` is taken w.r.t. Lebesgue measure."""

    kind: BaseKind
    dim: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    sampler: Callable | None = None
    logpdf: Callable | None = None

    @classmethod
    def std_normal(cls, dim: int) -> "BaseMeasure":
        return cls(BaseKind.STD_NORMAL, dim)

    @classmethod
    def uniform_box(cls, lower, upper) -> "BaseMeasure":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise InputError("uniform box needs lower < upper componentwise")
        return cls(BaseKind.UNIFORM_BOX, lo.shape[0], lower=lo, upper=hi)

    @classmethod
    def custom(cls, dim: int, sampler: Callable, logpdf: Callable) -> "BaseMeasure":
        """``sampler(n, rng) -> (n, dim)``; ``logpdf(x) -> (n,)``, normalized."""
        return cls(BaseKind.CUSTOM, dim, sampler=sampler, logpdf=logpdf)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind is BaseKind.STD_NORMAL:
            return rng.standard_normal((n, self.dim))
        if self.kind is BaseKind.UNIFORM_BOX:
            return self.lower + (self.upper - self.lower) * rng.random((n, self.dim))
        return np.asarray(self.sampler(n, rng), dtype=float).reshape(n, self.dim)

    def log_density(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind is BaseKind.STD_NORMAL:
            return -0.5 * (x * x).sum(1) - 0.5 * self.dim * _LOG_2PI
        if self.kind is BaseKind.UNIFORM_BOX:
            inside = np.all((x >= self.lower) & (x <= self.upper), axis=1)
            val = -float(np.sum(np.log(self.upper - self.lower)))
            return np.where(inside, val, -np.inf)
        return np.asarray(self.logpdf(x), dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class KernelExpFamilyModel:
    """Immutable model; the log-partition value is computed once and cached."""

    base: BaseMeasure
    f: RkhsFunction
    _log_z: list = field(default_factory=list, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.f.kernel.dim != self.base.dim:
            raise InputError("kernel and base measure dimensions differ")

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def submodel(self) -> str | None:
        """'mean', 'cov' or None."""
        if self.base.kind is not BaseKind.STD_NORMAL:
            return None
        if self.f.kernel.kind is KernelKind.LINEAR:
            return "mean"
        if self.f.kernel.kind is KernelKind.QUADRATIC:
            return "cov"
        return None

    @property
    def precision_offset(self) -> np.ndarray:
        """F with f(x) = -x^T F x / 2 (covariance model only)."""
        if self.submodel != "cov":
            raise UnsupportedModelError("not a covariance model")
        return -2.0 * np.asarray(self.f.matrix)

    def with_log_partition(self, value: float) -> "KernelExpFamilyModel":
        """Copy of the model carrying an externally estimated log-partition value."""
        m = KernelExpFamilyModel(self.base, self.f)
        m._log_z.append(float(value))
        return m

    @property
    def log_z(self) -> float:
        with self._lock:
            if not self._log_z:
                try:
                    self._log_z.append(log_partition(self))
                except UnsupportedModelError as exc:
                    raise StateError(
                        "log-partition unknown; estimate it with mc_log_partition and "
                        "attach it via with_log_partition"
                    ) from exc
            return self._log_z[0]


def mean_model(mean) -> KernelExpFamilyModel:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.shape[0]
    return KernelExpFamilyModel(BaseMeasure.std_normal(d), RkhsFunction.explicit(KernelSpec.linear(d), mean))


def cov_model(F) -> KernelExpFamilyModel:
    """Model N(0, (I + F)^-1) written as f(x) = -x^T F x / 2."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    d = F.shape[0]
    return KernelExpFamilyModel(
        BaseMeasure.std_normal(d), RkhsFunction.explicit(KernelSpec.quadratic(d), -0.5 * F)
    )


def cov_model_from_covariance(sigma) -> KernelExpFamilyModel:
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    return cov_model(np.linalg.inv(sigma) - np.eye(sigma.shape[0]))


def _chol_shifted(F: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(np.eye(F.shape[0]) + F)
    except np.linalg.LinAlgError as exc:
        raise DomainError("I + F is not positive definite") from exc


def log_partition(m: KernelExpFamilyModel) -> float:
    """Closed-form A(f) for the Gaussian submodels."""
    kind = m.submodel
    if kind == "mean":
        v = m.f.vector
        return 0.5 * float(v @ v)
    if kind == "cov":
        c = _chol_shifted(m.precision_offset)
        return -float(np.sum(np.log(np.diag(c))))
    raise UnsupportedModelError("no closed-form log-partition; use mc_log_partition")


def mc_log_partition(
    m: KernelExpFamilyModel,
    proposal: BaseMeasure | None,
    ell: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Importance-sampling estimate of A(f) and its delta-method standard error.

    With ``proposal=None`` draws come from the base measure and the weights are
    exp(f(Z)); otherwise they are exp(f(Z)) dmu/dq(Z).
    """
    if ell < 1:
        raise InputError("ell must be >= 1")
    q = m.base if proposal is None else proposal
    if q.dim != m.dim:
        raise InputError("proposal dimension differs from the model")
    z = q.sample(ell, rng)
    logw = np.asarray(rkhs_eval(m.f, z), dtype=float)
    if proposal is not None:
        logw = logw + m.base.log_density(z) - q.log_density(z)
    if not np.any(np.isfinite(logw)) or np.any(np.isnan(logw)) or np.any(logw == np.inf):
        raise NumericError("importance weights are all zero or non-finite")
    est = float(logsumexp(logw) - np.log(ell))
    w = np.exp(logw - logw.max())
    stderr = float(w.std() / (w.mean() * np.sqrt(ell)))
    return est, stderr


def log_density(m: KernelExpFamilyModel, x, wrt: str = "base"):
    """log p_f(x) w.r.t. the base measure, or w.r.t. Lebesgue measure (``wrt='lebesgue'``)."""
    if wrt not in ("base", "lebesgue"):
        raise InputError("wrt must be 'base' or 'lebesgue'")
    x = np.asarray(x, dtype=float)
    val = np.asarray(rkhs_eval(m.f, x)) - m.log_z
    if wrt == "lebesgue":
        val = val + m.base.log_density(np.atleast_2d(x))
    if x.ndim == 1:
        return float(np.asarray(val).reshape(-1)[0])
    return val


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray


def to_gaussian(m: KernelExpFamilyModel) -> Gaussian:
    kind = m.submodel
    if kind == "mean":
        return Gaussian(np.array(m.f.vector), np.eye(m.dim))
    if kind == "cov":
        c = _chol_shifted(m.precision_offset)
        ci = np.linalg.inv(c)
        return Gaussian(np.zeros(m.dim), ci.T @ ci)
    raise UnsupportedModelError("model is not Gaussian")


def sample_model(m: KernelExpFamilyModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws from the Gaussian submodels."""
    kind = m.submodel
    if kind is None:
        raise UnsupportedModelError("exact sampling only for the Gaussian submodels")
    if n < 0:
        raise InputError("n must be non-negative")
    e = rng.standard_normal((n, m.dim))
    if kind == "mean":
        return e + m.f.vector
    c = _chol_shifted(m.precision_offset)
    # x = C^-T e has covariance (C C^T)^-1
    return solve_triangular(c, e.T, lower=True, trans="T").T
