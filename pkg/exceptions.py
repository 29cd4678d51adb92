"""Error kinds raised across normsolve.

Every error carries an ``exit_code`` used by the command line surface and a
``details`` dictionary that is written into the diagnostics of a failed run.
Numerical non-convergence is not an error: results carry ``converged=False``.
"""

from typing import Any, Dict, Optional


class NormSolveError(Exception):
    """Base class for all normsolve errors."""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = dict(details or {})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            "details": self.details,
        }


class ConfigurationError(NormSolveError):
    """Invalid or missing configuration; the message names the key path."""

    def __init__(self, message: str, key_path: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        details = dict(details or {})
        if key_path is not None:
            details["key_path"] = key_path
            message = f"{key_path}: {message}"
        super().__init__(message, details)
        self.key_path = key_path


class UsageError(NormSolveError):
    """Inputs that cannot be combined (grid mismatch, bad command line use)."""


class DomainError(NormSolveError):
    """Unsupported dimension or supercritical exponent."""


class DilationRangeError(NormSolveError):
    """Resampled dilation lost mass beyond the allowed drift."""


class ProfileSolveError(NormSolveError):
    """Scalar ground state could not be bracketed or polished."""


class StructureError(NormSolveError):
    """Fiber map lacks the critical-point structure the caller relies on."""

    exit_code = 2


class RegimeError(NormSolveError):
    """Parameters lie outside the window in which the requested object exists."""

    exit_code = 3
