"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, validation and
audit failures exit 2, I/O problems exit 3.
"""


class PbfError(Exception):
    """Base class for all package errors."""


class PathParseError(PbfError):
    """Malformed path or material file. Carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(PbfError):
    """Input data violates a documented invariant."""


class DomainError(PbfError):
    """Evaluation requested outside an operation's domain (e.g. t <= 0)."""


class NumericsError(PbfError):
    """A numerical result came back non-finite."""


class CapacityError(PbfError):
    """A configured resource cap (e.g. maximum quadrature order) was exceeded."""


class LutBuildError(PbfError):
    """No scheduled quadrature order met the tolerance at some grid point."""


class LutFormatError(PbfError):
    """LUT byte stream is truncated, corrupted, or of an unknown version."""


class AuditError(PbfError):
    """An audit (LUT soundness, FD cross-check, ...) failed its threshold."""
