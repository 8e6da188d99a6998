"""Kernels, RKHS elements and finite-dimensional witness parameterizations.

Three kernels are supported:

* ``LINEAR``: k(x, z) = x . z, RKHS = linear functions, element stored as a vector.
* ``QUADRATIC``: k(x, z) = (x . z)^2, RKHS = quadratic forms x^T F x with F
  symmetric, element stored as the matrix F.
* ``RBF``: k(x, z) = exp(-|x - z|^2 / (2 h^2)), element stored as a finite
  kernel expansion sum_j c_j k(a_j, .).

Expansions over the linear and quadratic kernels are collapsed eagerly into the
explicit vector / matrix form, so each element has a single canonical layout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


class KernelKind(enum.Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    dim: int
    bandwidth: float | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise InputError(f"kernel dimension must be >= 1, got {self.dim}")
        if self.kind is KernelKind.RBF:
            if self.bandwidth is None or not self.bandwidth > 0:
                raise InputError("RBF kernel requires a positive bandwidth")

    @classmethod
    def linear(cls, dim: int) -> "KernelSpec":
        return cls(KernelKind.LINEAR, dim)

    @classmethod
    def quadratic(cls, dim: int) -> "KernelSpec":
        return cls(KernelKind.QUADRATIC, dim)

    @classmethod
    def rbf(cls, dim: int, bandwidth: float) -> "KernelSpec":
        return cls(KernelKind.RBF, dim, float(bandwidth))


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise InputError(f"expected points of dimension {dim}, got shape {x.shape}")
    return pts, single


def gram(kernel: KernelSpec, a, b) -> np.ndarray:
    """Kernel matrix K[i, j] = k(a_i, b_j)."""
    a, _ = _as_points(a, kernel.dim)
    b, _ = _as_points(b, kernel.dim)
    if kernel.kind is KernelKind.LINEAR:
        return a @ b.T
    if kernel.kind is KernelKind.QUADRATIC:
        return (a @ b.T) ** 2
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * kernel.bandwidth**2))


def kernel_eval(kernel: KernelSpec, x, z) -> float:
    """k(x, z) for two single points."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != (kernel.dim,) or z.shape != (kernel.dim,):
        raise InputError(f"points must have shape ({kernel.dim},)")
    return float(gram(kernel, x, z)[0, 0])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RkhsFunction:
    """Immutable element of the RKHS of ``kernel``.

    Exactly one representation is populated: ``vector`` (linear kernel),
    ``matrix`` (quadratic kernel, symmetric) or ``anchors``/``coeffs``
    (kernel expansion).  Use the classmethod constructors.
    """

    kernel: KernelSpec
    vector: np.ndarray | None = None
    matrix: np.ndarray | None = None
    anchors: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    _norm_cache: list = field(default_factory=list, repr=False, compare=False)

    @classmethod
    def explicit(cls, kernel: KernelSpec, params) -> "RkhsFunction":
        p = np.asarray(params, dtype=float)
        d = kernel.dim
        if kernel.kind is KernelKind.LINEAR:
            if p.shape != (d,):
                raise InputError(f"linear element must have shape ({d},), got {p.shape}")
            return cls(kernel, vector=_frozen(p))
        if kernel.kind is KernelKind.QUADRATIC:
            if p.shape != (d, d):
                raise InputError(f"quadratic element must have shape ({d}, {d}), got {p.shape}")
            if not np.allclose(p, p.T, atol=1e-10 * (1 + np.abs(p).max())):
                raise InputError("quadratic element must be a symmetric matrix")
            return cls(kernel, matrix=_frozen(0.5 * (p + p.T)))
        raise InputError("RBF elements have no explicit form; use RkhsFunction.representer")

    @classmethod
    def representer(cls, kernel: KernelSpec, anchors, coeffs) -> "RkhsFunction":
        a, _ = _as_points(np.atleast_2d(np.asarray(anchors, dtype=float)), kernel.dim)
        c = np.asarray(coeffs, dtype=float).reshape(-1)
        if c.shape[0] != a.shape[0]:
            raise InputError(f"{a.shape[0]} anchors but {c.shape[0]} coefficients")
        if kernel.kind is KernelKind.LINEAR:
            return cls.explicit(kernel, a.T @ c)
        if kernel.kind is KernelKind.QUADRATIC:
            return cls.explicit(kernel, (a.T * c) @ a)
        return cls(kernel, anchors=_frozen(a), coeffs=_frozen(c))

    @classmethod
    def zero(cls, kernel: KernelSpec) -> "RkhsFunction":
        d = kernel.dim
        if kernel.kind is KernelKind.LINEAR:
            return cls.explicit(kernel, np.zeros(d))
        if kernel.kind is KernelKind.QUADRATIC:
            return cls.explicit(kernel, np.zeros((d, d)))
        return cls(kernel, anchors=_frozen(np.zeros((0, d))), coeffs=_frozen(np.zeros(0)))

    @property
    def is_representer(self) -> bool:
        return self.anchors is not None

    def __call__(self, x):
        return rkhs_eval(self, x)

    def scaled(self, c: float) -> "RkhsFunction":
        if self.vector is not None:
            return RkhsFunction.explicit(self.kernel, c * self.vector)
        if self.matrix is not None:
            return RkhsFunction.explicit(self.kernel, c * self.matrix)
        return RkhsFunction(self.kernel, anchors=self.anchors, coeffs=_frozen(c * self.coeffs))

    def __sub__(self, other: "RkhsFunction") -> "RkhsFunction":
        return rkhs_add(self, other.scaled(-1.0))

    def __add__(self, other: "RkhsFunction") -> "RkhsFunction":
        return rkhs_add(self, other)

    def norm(self) -> float:
        if not self._norm_cache:
            self._norm_cache.append(float(np.sqrt(max(rkhs_inner(self, self), 0.0))))
        return self._norm_cache[0]


def _check_same_kernel(f: RkhsFunction, g: RkhsFunction):
    if f.kernel != g.kernel:
        raise InputError(f"kernel mismatch: {f.kernel} vs {g.kernel}")


def rkhs_add(f: RkhsFunction, g: RkhsFunction) -> RkhsFunction:
    _check_same_kernel(f, g)
    if f.vector is not None:
        return RkhsFunction.explicit(f.kernel, f.vector + g.vector)
    if f.matrix is not None:
        return RkhsFunction.explicit(f.kernel, f.matrix + g.matrix)
    return RkhsFunction.representer(
        f.kernel, np.vstack([f.anchors, g.anchors]), np.concatenate([f.coeffs, g.coeffs])
    )


def rkhs_eval(f: RkhsFunction, x):
    """Evaluate f at a point (returns float) or at the rows of an (n, d) array."""
    pts, single = _as_points(x, f.kernel.dim)
    if f.vector is not None:
        out = pts @ f.vector
    elif f.matrix is not None:
        out = np.einsum("ni,ij,nj->n", pts, f.matrix, pts)
    elif f.anchors.shape[0] == 0:
        out = np.zeros(pts.shape[0])
    else:
        out = gram(f.kernel, pts, f.anchors) @ f.coeffs
    return float(out[0]) if single else out


def rkhs_inner(f: RkhsFunction, g: RkhsFunction) -> float:
    """RKHS inner product <f, g>."""
    _check_same_kernel(f, g)
    if f.vector is not None:
        return float(f.vector @ g.vector)
    if f.matrix is not None:
        return float(np.sum(f.matrix * g.matrix))
    if f.anchors.shape[0] == 0 or g.anchors.shape[0] == 0:
        return 0.0
    return float(f.coeffs @ gram(f.kernel, f.anchors, g.anchors) @ g.coeffs)


def rkhs_norm(f: RkhsFunction) -> float:
    return f.norm()


def project_ball(f: RkhsFunction, radius: float) -> RkhsFunction:
    """Nearest point to f in the closed RKHS ball of the given radius."""
    if radius < 0:
        raise InputError(f"radius must be non-negative, got {radius}")
    nrm = f.norm()
    if nrm <= radius:
        return f
    return f.scaled(radius / nrm)


class FeatureSpace:
    """Finite-dimensional coordinates theta for a family of RKHS functions.

    A function is u(x) = phi(x) . theta with RKHS norm^2 = theta^T G theta.
    ``center`` shifts linear features to phi(x) = x - center; the shift is
    absorbed into the bias when converting back to an :class:`RkhsFunction`.
    """

    def __init__(self, kernel: KernelSpec, anchors=None, center=None):
        self.kernel = kernel
        d = kernel.dim
        self.center = None
        self.anchors = None
        if kernel.kind is KernelKind.LINEAR:
            self.size = d
            self.metric = None
            if center is not None:
                self.center = np.asarray(center, dtype=float).reshape(d)
        elif kernel.kind is KernelKind.QUADRATIC:
            self.size = d * d
            self.metric = None
        else:
            if anchors is None:
                raise InputError("RBF feature space requires anchors")
            self.anchors = np.asarray(anchors, dtype=float)
            self.size = self.anchors.shape[0]
            k = gram(kernel, self.anchors, self.anchors)
            self.metric = 0.5 * (k + k.T)

    def features(self, x) -> np.ndarray:
        pts, _ = _as_points(x, self.kernel.dim)
        if self.kernel.kind is KernelKind.LINEAR:
            return pts - self.center if self.center is not None else pts
        if self.kernel.kind is KernelKind.QUADRATIC:
            return np.einsum("ni,nj->nij", pts, pts).reshape(pts.shape[0], -1)
        return gram(self.kernel, pts, self.anchors)

    def point_grad(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Gradient of u(x) = phi(x) . theta with respect to each row of x."""
        if self.kernel.kind is KernelKind.LINEAR:
            return np.broadcast_to(theta, x.shape)
        if self.kernel.kind is KernelKind.QUADRATIC:
            w = theta.reshape(self.kernel.dim, self.kernel.dim)
            return x @ (w + w.T)
        raise InputError("point gradients are only available for explicit kernels")

    def sq_norm(self, theta: np.ndarray) -> float:
        if self.metric is None:
            return float(theta @ theta)
        return float(theta @ self.metric @ theta)

    def sq_norm_grad(self, theta: np.ndarray) -> np.ndarray:
        if self.metric is None:
            return 2.0 * theta
        return 2.0 * (self.metric @ theta)

    def project(self, theta: np.ndarray, radius: float) -> np.ndarray:
        nrm = np.sqrt(max(self.sq_norm(theta), 0.0))
        if nrm <= radius:
            return theta
        return theta * (radius / nrm)

    def random_direction(self, rng: np.random.Generator, radius: float) -> np.ndarray:
        v = rng.standard_normal(self.size)
        nrm = np.sqrt(max(self.sq_norm(v), 1e-300))
        return v * (radius / nrm)

    def normalize(self, theta: np.ndarray, radius: float) -> np.ndarray:
        nrm = np.sqrt(max(self.sq_norm(theta), 0.0))
        if nrm < 1e-300:
            return np.zeros_like(theta)
        return theta * (radius / nrm)

    def to_function(self, theta: np.ndarray, b: float) -> tuple[RkhsFunction, float]:
        """Convert (theta, b) into (RKHS element u, bias) with u(x) - bias the witness."""
        if self.kernel.kind is KernelKind.LINEAR:
            shift = float(theta @ self.center) if self.center is not None else 0.0
            return RkhsFunction.explicit(self.kernel, theta), b + shift
        if self.kernel.kind is KernelKind.QUADRATIC:
            w = theta.reshape(self.kernel.dim, self.kernel.dim)
            return RkhsFunction.explicit(self.kernel, 0.5 * (w + w.T)), b
        return RkhsFunction.representer(self.kernel, self.anchors, theta), b
