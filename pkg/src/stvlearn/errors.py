"""Exception types shared across the package."""


class StvError(Exception):
    """Base class for all library errors."""


class InputError(StvError, ValueError):
    """Malformed or inconsistent arguments (shapes, ranges, kernels)."""


class DomainError(StvError, ValueError):
    """A parameter lies outside the model's valid domain, e.g. I + F not positive definite."""


class UnsupportedModelError(StvError, NotImplementedError):
    """The requested closed form does not exist for this model."""


class StateError(StvError, RuntimeError):
    """An object is missing state required for the call."""


class NumericError(StvError, ArithmeticError):
    """Non-finite values appeared during a computation."""

    def __init__(self, message, *, trace=None, point=None):
        super().__init__(message)
        self.trace = trace
        self.point = point


class DegenerateScaleError(InputError):
    """A robust scale estimate is zero, e.g. a coordinate with zero MAD."""
