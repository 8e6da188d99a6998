"""Huber contamination: draw from (1 - eps) P_core + eps P_outlier."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True, eq=False)
class GaussianDist:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if c.shape != (m.shape[0], m.shape[0]):
            raise InputError("covariance shape does not match the mean")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)
        try:
            object.__setattr__(self, "_chol", np.linalg.cholesky(c))
        except np.linalg.LinAlgError as exc:
            raise InputError("covariance must be positive definite") from exc

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + rng.standard_normal((n, self.dim)) @ self._chol.T


@dataclass(frozen=True, eq=False)
class PointMass:
    location: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "location", np.atleast_1d(np.asarray(self.location, dtype=float)))

    @property
    def dim(self) -> int:
        return self.location.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.tile(self.location, (n, 1))


class Mixing(enum.Enum):
    BERNOULLI = "bernoulli"  # each point is an outlier independently with probability eps
    EXACT_COUNT = "exact_count"  # exactly round(eps * n) outliers, positions shuffled


@dataclass(frozen=True)
class ContaminationSpec:
    eps: float
    core: GaussianDist | PointMass
    outlier: GaussianDist | PointMass | None = None
    mixing: Mixing = Mixing.BERNOULLI

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise InputError(f"eps must lie in [0, 1], got {self.eps}")
        if self.eps > 0 and self.outlier is None:
            raise InputError("an outlier distribution is required when eps > 0")
        if self.outlier is not None and self.outlier.dim != self.core.dim:
            raise InputError("core and outlier dimensions differ")

    @property
    def dim(self) -> int:
        return self.core.dim


def sample_huber(spec: ContaminationSpec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(data, labels)`` with ``labels[i] = True`` for outliers."""
    if n < 0:
        raise InputError("n must be non-negative")
    if spec.mixing is Mixing.BERNOULLI:
        labels = rng.random(n) < spec.eps
    else:
        labels = np.zeros(n, dtype=bool)
        labels[: int(np.floor(spec.eps * n + 0.5))] = True
        rng.shuffle(labels)
    data = np.empty((n, spec.dim))
    k = int(labels.sum())
    data[~labels] = spec.core.sample(n - k, rng)
    if k:
        data[labels] = spec.outlier.sample(k, rng)
    return data, labels


def banded_covariance(d: int) -> np.ndarray:
    """Sigma_ij = 2^-|i - j|."""
    idx = np.arange(d)
    return 2.0 ** (-np.abs(idx[:, None] - idx[None, :]).astype(float))


def scenario_mean(d: int, eps: float = 0.1, shift: float = 5.0) -> ContaminationSpec:
    """(1 - eps) N(0, I) + eps N(shift * 1, I)."""
    return ContaminationSpec(
        eps, GaussianDist(np.zeros(d), np.eye(d)), GaussianDist(np.full(d, shift), np.eye(d))
    )


def scenario_cov(d: int, eps: float = 0.2, shift: float = 6.0) -> ContaminationSpec:
    """(1 - eps) N(0, Sigma) + eps N(shift * 1, Sigma) with the banded Sigma."""
    s = banded_covariance(d)
    return ContaminationSpec(eps, GaussianDist(np.zeros(d), s), GaussianDist(np.full(d, shift), s))


def scenario_clean(d: int) -> ContaminationSpec:
    return ContaminationSpec(0.0, GaussianDist(np.zeros(d), np.eye(d)))
