"""
Error handling utilities and decorators.
"""
import functools
import logging
import math
from typing import Any, Callable, TypeVar

from PIL import UnidentifiedImageError

from codedehaze.exceptions.errors import BaseAppError, DatasetError, NonFiniteLossError

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])


def handle_io_errors(func: F) -> F:
    """
    Decorator converting file system and image decoding errors into DatasetError.
    """
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except BaseAppError:
            raise
        except UnidentifiedImageError as e:
            logger.error(f"Unreadable image in {func.__name__}: {e}")
            raise DatasetError(
                message="Image file could not be decoded",
                details={"function": func.__name__, "error": str(e)}
            ) from e
        except PermissionError as e:
            logger.error(f"Permission denied in {func.__name__}: {e}")
            raise DatasetError(
                message="Output location is not writable",
                path=getattr(e, "filename", None),
                details={"function": func.__name__, "error": str(e)}
            ) from e
        except OSError as e:
            logger.error(f"I/O error in {func.__name__}: {e}", exc_info=True)
            raise DatasetError(
                message=f"I/O failure: {e}",
                path=getattr(e, "filename", None),
                details={"function": func.__name__, "error": str(e)}
            ) from e

    return wrapper  # type: ignore


def check_finite_terms(stage: str, step: int, terms: dict[str, float]) -> None:
    """
    Abort training with a diagnostic when any loss term is NaN or infinite.

    Raises:
        NonFiniteLossError: If a term is not finite
    """
    bad = {name: value for name, value in terms.items() if not math.isfinite(value)}
    if bad:
        logger.error(f"Non-finite loss terms in {stage} step {step}: {bad}")
        raise NonFiniteLossError(stage=stage, step=step, terms=terms)


def log_error_with_context(error: BaseException, context: dict[str, Any] | None = None) -> None:
    """Log a failure once, with its error code and diagnostics when it has them.

    Expected failures (our own ``BaseAppError`` subclasses) are logged without
    a traceback; anything else is a bug and keeps the full stack.
    """
    fields = {key: value for key, value in (context or {}).items() if value is not None}
    if isinstance(error, BaseAppError):
        fields = {**fields, "error_code": error.error_code, **error.details}
        logger.error(f"{type(error).__name__}: {error.message} {fields}")
        return
    logger.error(
        f"Unexpected {type(error).__name__}: {error} {fields}",
        exc_info=error,
    )
