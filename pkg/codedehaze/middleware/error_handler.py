"""
Maps exceptions raised by a CLI command to process exit codes.
"""
import logging
import sys
from typing import Callable

from pydantic import ValidationError as PydanticValidationError

from codedehaze.exceptions.errors import (
    BaseAppError,
    CheckpointNotFoundError,
    ConfigurationError,
    ValidationError,
)
from codedehaze.utils.error_handler import log_error_with_context

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ValidationError, ConfigurationError, PydanticValidationError)):
        return EXIT_USAGE
    return EXIT_RUNTIME


def handle_exception(exc: BaseException, command: str | None = None) -> int:
    """
    Log the failure, print a one-line message on stderr and return the exit code.
    """
    log_error_with_context(exc, {"command": command})

    if isinstance(exc, CheckpointNotFoundError):
        message = f"checkpoint not found: {exc.details.get('path')}"
    elif isinstance(exc, BaseAppError):
        message = f"{exc.error_code}: {exc.message}"
    elif isinstance(exc, PydanticValidationError):
        message = f"VALIDATION_ERROR: {exc.error_count()} invalid value(s)"
    else:
        logger.error(f"Unhandled exception: {type(exc).__name__}: {exc}", exc_info=True)
        message = f"internal error: {type(exc).__name__}: {exc}"

    print(f"error: {message}", file=sys.stderr)
    return exit_code_for(exc)


def run_guarded(command: str, func: Callable[[], int | None]) -> int:
    """Run a command body and turn any failure into an exit code."""
    try:
        result = func()
    except KeyboardInterrupt:
        logger.warning(f"{command} interrupted")
        return EXIT_RUNTIME
    except Exception as exc:
        return handle_exception(exc, command)
    return EXIT_OK if result is None else result
