"""
Project-wide exception hierarchy and the global handler that turns any
exception into an exit code plus a consistent error payload.

Output format:
{
    "message": "Validation failed",
    "errors": {
        "lambda": ["Ensure this value is less than 1."],
    }
}
"""

import logging

from rest_framework.exceptions import ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class SimulationError(Exception):
    """Base class for every error raised by the solver"""

    default_detail = "Simulation failed"
    exit_code = EXIT_VALIDATION

    def __init__(self, detail=None, **context):
        self.detail = detail or self.default_detail
        self.context = context
        super().__init__(self.detail)

    def as_errors(self):
        errors = {"detail": self.detail}
        errors.update({k: v for k, v in self.context.items() if v is not None})
        return errors


class InvalidParameter(SimulationError, ValueError):
    """A precondition of an operation does not hold"""

    default_detail = "Invalid parameter"


class InvalidInitialData(InvalidParameter):
    """Initial data evaluated to NaN/Inf inside a cell"""

    default_detail = "Initial data is not finite"

    def __init__(self, detail=None, *, cell=None, x=None):
        super().__init__(detail, cell=cell, x=x)
        self.cell = cell
        self.x = x


class NumericalAbort(SimulationError, ArithmeticError):
    """A time step produced non-finite values"""

    default_detail = "Numerical abort"
    exit_code = EXIT_NUMERICAL

    def __init__(self, detail=None, *, step_index=None, cell=None, path_id=None):
        super().__init__(detail, step_index=step_index, cell=cell, path_id=path_id)
        self.step_index = step_index
        self.cell = cell
        self.path_id = path_id


class StudyAborted(NumericalAbort):
    """Too many Monte Carlo paths aborted for the study to be meaningful"""

    default_detail = "Error study aborted"

    def __init__(self, detail=None, *, aborted=0, n_paths=0):
        super().__init__(detail)
        self.context.update(aborted=aborted, n_paths=n_paths)
        self.aborted = aborted
        self.n_paths = n_paths


def handle_exception(exc):
    """
    Standardizes error reporting for the command line.

    Returns (exit_code, payload) where payload has the same
    {"message", "errors"} shape for every failure.
    """
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION, {
            "message": get_error_message(exc),
            "errors": exc.detail,
        }

    if isinstance(exc, SimulationError):
        if exc.exit_code == EXIT_NUMERICAL:
            logger.warning(f"Numerical abort: {exc.detail}")
        return exc.exit_code, {
            "message": get_error_message(exc),
            "errors": exc.as_errors(),
        }

    logger.error(f"Unhandled exception: {str(exc)}", exc_info=True)
    return EXIT_VALIDATION, {
        "message": "Internal error",
        "errors": {"detail": "An unexpected error occurred"},
    }


def get_error_message(exc):
    """Extract user-friendly error message from exception"""
    if isinstance(exc, ValidationError):
        return "Validation failed"
    elif isinstance(exc, NumericalAbort):
        return "Numerical abort"
    elif isinstance(exc, SimulationError):
        return str(exc.detail)
    return str(exc) if str(exc) else "An error occurred"


def format_errors(payload):
    """Flatten a handler payload into one line for stderr"""
    errors = payload.get("errors") or {}
    if isinstance(errors, dict):
        parts = []
        for key, value in errors.items():
            if isinstance(value, list | tuple):
                value = "; ".join(str(v) for v in value)
            parts.append(f"{key}: {value}")
        details = ", ".join(parts)
    else:
        details = "; ".join(str(e) for e in errors)
    return f"{payload['message']} ({details})" if details else payload["message"]
