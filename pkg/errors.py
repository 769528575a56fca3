# errors.py
"""Exception hierarchy shared by the solver library and the CLI."""
from __future__ import annotations


class DGHyperError(Exception):
    """Base class for every error raised on purpose by this package."""


class InvalidArgumentError(DGHyperError, ValueError):
    pass


class ConfigurationError(DGHyperError):
    """Run configuration or boundary description is inconsistent."""

    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class MeshParseError(DGHyperError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnsupportedFeatureError(DGHyperError):
    pass


class NumericError(DGHyperError):
    """Singular local matrix, singular C, eigensolver failure …"""


class SingularSystemError(NumericError):
    def __init__(self, message: str, row: int | None = None, block: str | None = None) -> None:
        self.row = row
        self.block = block
        super().__init__(message)


class InvalidStateError(DGHyperError):
    """J <= 0 somewhere. Recoverable: the solver rejects or splits the increment."""

    def __init__(self, jacobian: float, location: str = "point",
                 index: int | None = None, point: int | None = None) -> None:
        self.jacobian = float(jacobian)
        self.location = location
        self.index = index
        self.point = point
        where = location if index is None else f"{location} {index}"
        if point is not None:
            where += f", quadrature point {point}"
        super().__init__(f"non-positive Jacobian J={self.jacobian:.3e} at {where}")


class ConvergenceError(DGHyperError):
    def __init__(self, message: str, increment: int | None = None,
                 fraction: float | None = None) -> None:
        self.increment = increment
        self.fraction = fraction
        super().__init__(message)
