"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures without a lookup table: 2 for bad input, 3 for numerical trouble.
"""

from __future__ import annotations


class InertiaError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class InvalidParameter(InertiaError, ValueError):
    """A value violates a documented precondition or type invariant."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DegenerateBase(InertiaError, ValueError):
    """The power base used for per-unit conversion is not positive."""

    exit_code = 3


class DegenerateSlope(InertiaError, ValueError):
    """The fitted ROCOF is too close to zero to divide by."""

    exit_code = 3


class WindowTooSparse(InertiaError, ValueError):
    pass


class WindowOutOfRange(InertiaError, ValueError):
    pass


class TraceGridMismatch(InertiaError, ValueError):
    pass


class WeightMissing(InertiaError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class NetworkSolveDiverged(InertiaError, ArithmeticError):
    exit_code = 3


class IngestError(InertiaError):
    """Base class for file-format errors."""


class ParseError(IngestError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class GridError(IngestError, ValueError):
    """Time column is not a uniform grid."""


class NonFiniteValue(IngestError, ValueError):
    def __init__(self, line: int, column: int, raw: str):
        super().__init__(f"line {line}, column {column}: non-finite value {raw!r}")
        self.line = line
        self.column = column


class SchemaError(IngestError, ValueError):
    """Missing, unknown, or mistyped key in a scenario document."""

    def __init__(self, path: str, message: str = "missing required field"):
        super().__init__(f"{path}: {message}")
        self.path = path


class ValidationError(IngestError, ValueError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class IoError(IngestError, OSError):
    pass


class QualityWarning(UserWarning):
    """Result was produced but should not be trusted as an inertia estimate."""
