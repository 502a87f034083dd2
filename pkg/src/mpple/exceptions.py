"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`ConfigError` -> 2,
:class:`DataError` -> 3, :class:`FitError` -> 4.
"""


class MPPLEError(Exception):
    """Base class for all package errors."""


class ConfigError(MPPLEError, ValueError):
    """Invalid configuration or request parameters."""


class DataError(MPPLEError, ValueError):
    """Input data violates the subject-record rules."""


class FitError(MPPLEError, RuntimeError):
    """An estimator could not be computed."""


class ConvergenceError(FitError):
    """Iterative solver did not reach the score tolerance."""


class SeparationError(FitError):
    """Coefficients diverged (perfect prediction / monotone likelihood)."""


class SingularMatrixError(FitError):
    """An information or Jacobian matrix is not invertible."""


class DegenerateCauseError(FitError):
    """A cause of failure carries no (imputed) events."""

    def __init__(self, cause, message=None):
        self.cause = cause
        super().__init__(message or f"cause {cause} has no failures with positive weight")


class EmptyDomainError(FitError):
    """A confidence band was requested on an empty time domain."""
