"""Error hierarchy and error logging for the Korn laboratory."""

import logging
import traceback
from collections.abc import Callable
from datetime import datetime, timezone
from enum import IntEnum
from typing import Any

UTC = timezone.utc

logger = logging.getLogger(__name__)


class ExitCode(IntEnum):
    """Process exit codes of the command-line campaigns."""

    OK = 0
    VIOLATION = 1
    CONFIGURATION = 2
    NUMERICAL = 3


class LabError(Exception):
    """Base exception for the Korn laboratory."""

    def __init__(
        self,
        message: str,
        exit_code: ExitCode = ExitCode.NUMERICAL,
        details: dict[str, Any] | None = None,
    ):
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class DegreeError(LabError):
    """Form degree outside the admissible range of an operation."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message=message, exit_code=ExitCode.CONFIGURATION, details=details)


class IncompatibleFieldsError(LabError):
    """Fields live on different masks, degrees or shapes."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message=message, exit_code=ExitCode.CONFIGURATION, details=details)


class InvalidDomainError(LabError):
    """Degenerate domain geometry or an empty mask."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message=message, exit_code=ExitCode.CONFIGURATION, details=details)


class TopologyError(LabError):
    """Operation requires a connected boundary."""

    def __init__(self, boundary_components: int, details: dict[str, Any] | None = None):
        super().__init__(
            message=(
                f"Operation requires a connected boundary, "
                f"mask has {boundary_components} boundary components"
            ),
            exit_code=ExitCode.CONFIGURATION,
            details={"boundary_components": boundary_components, **(details or {})},
        )


class NumericalBreakdownError(LabError):
    """NaN or Inf encountered inside an iterative method."""

    def __init__(self, method: str, iteration: int, details: dict[str, Any] | None = None):
        super().__init__(
            message=f"{method} broke down at iteration {iteration}",
            exit_code=ExitCode.NUMERICAL,
            details={"method": method, "iteration": iteration, **(details or {})},
        )


class IllPosedDeflationError(LabError):
    """Deflation vectors are linearly dependent."""

    def __init__(self, rank: int, count: int):
        super().__init__(
            message=f"Deflation basis has rank {rank} but {count} vectors were given",
            exit_code=ExitCode.NUMERICAL,
            details={"rank": rank, "count": count},
        )


class DenseLimitError(LabError):
    """Dense materialisation refused because the DOF count is too large."""

    def __init__(self, dof: int, limit: int):
        super().__init__(
            message=f"Dense oracle refused: {dof} free DOFs exceed the limit of {limit}",
            exit_code=ExitCode.CONFIGURATION,
            details={"dof": dof, "limit": limit},
        )


class EigenConvergenceError(LabError):
    """Eigen solver did not reach the requested residual bound."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message=message, exit_code=ExitCode.NUMERICAL, details=details)


class DecompositionFailedError(LabError):
    """A Helmholtz/Hodge potential solve did not converge."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message=message, exit_code=ExitCode.NUMERICAL, details=details)


class InvariantViolationError(LabError):
    """A mathematical invariant failed; signals an operator bug or a counterexample."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message=message, exit_code=ExitCode.VIOLATION, details=details)


class ConfigurationError(LabError):
    """Invalid experiment configuration."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message=message, exit_code=ExitCode.CONFIGURATION, details=details)


class ErrorLogger:
    """Centralized error logging."""

    @staticmethod
    def log_error(
        error: Exception,
        context: dict[str, Any] | None = None,
        severity: str = "ERROR",
    ) -> None:
        """Log error with context.

        Args:
            error: Exception that occurred
            context: Additional context information
            severity: Log severity level
        """
        context = context or {}

        log_data = {
            "error_type": error.__class__.__name__,
            "error_message": str(error),
            "timestamp": datetime.now(UTC).isoformat(),
            "traceback": traceback.format_exc(),
            **context,
        }
        if isinstance(error, LabError):
            log_data["details"] = error.details

        if severity == "CRITICAL":
            logger.critical(f"Critical Error: {error}", extra=log_data)
        elif severity == "ERROR":
            logger.error(f"Error: {error}", extra=log_data)
        elif severity == "WARNING":
            logger.warning(f"Warning: {error}", extra=log_data)
        else:
            logger.info(f"Info: {error}", extra=log_data)


def run_guarded(func: Callable[[], int]) -> int:
    """Run a campaign callable and translate exceptions into exit codes.

    Args:
        func: Zero-argument callable returning an exit code

    Returns:
        The callable's exit code, or the code attached to the raised error
    """
    try:
        return func()
    except LabError as e:
        ErrorLogger.log_error(e, context={"function": getattr(func, "__name__", "campaign")})
        return int(e.exit_code)
    except (ValueError, OSError) as e:
        ErrorLogger.log_error(e, context={"function": getattr(func, "__name__", "campaign")})
        return int(ExitCode.CONFIGURATION)
