"""Exception types used across the package."""


class QngError(Exception):
    """Base class for package errors."""


class DomainError(QngError, ValueError):
    """An argument is outside its mathematical domain."""


class UnsupportedParameterError(QngError, ValueError):
    """The requested parameter regime is not covered by the implementation."""


class PrecisionError(QngError, RuntimeError):
    """A computation could not reach the required accuracy."""


class TruncationError(QngError, ValueError):
    """A photon-number truncation is too coarse for the requested operation."""


class SolverError(QngError, RuntimeError):
    """A numerical solve failed (bracketing, convergence, or consistency)."""


class ThresholdRangeError(QngError, ValueError):
    """A query lies above the validity range of a threshold curve."""
