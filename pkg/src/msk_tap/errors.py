"""Exception types raised across the package."""

from __future__ import annotations


class MSKError(Exception):
    """Base class for every error raised by msk_tap."""


class InvalidMatrix(MSKError, ValueError):
    pass


class InvalidSpec(MSKError, ValueError):
    pass


class SpeciesTooSmall(MSKError, ValueError):
    pass


class DegenerateModel(MSKError, ValueError):
    pass


class NoConvergence(MSKError, RuntimeError):
    """Fixed-point iteration ran out of iterations.

    The last iterate and its residual are kept so callers can inspect how far
    the solver got.
    """

    def __init__(self, message: str, last_iterate=None, residual: float = float("nan")):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class SensitivitySingular(MSKError, ArithmeticError):
    pass


class TooLargeForExact(MSKError, ValueError):
    pass


class InvalidGamma(MSKError, ValueError):
    pass


class InsufficientSamples(MSKError, ValueError):
    pass


class DimensionError(MSKError, ValueError):
    pass


class FieldDriftError(MSKError, RuntimeError):
    """Cached local fields disagree with a from-scratch recomputation."""


class ConfigError(MSKError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
