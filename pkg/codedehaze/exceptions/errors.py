"""
Custom exception classes for different error types.
"""
from typing import Any


class BaseAppError(Exception):
    """Base exception class for all application errors."""

    def __init__(self, message: str, error_code: str | None = None, details: dict[str, Any] | None = None):
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)


class ContractViolationError(BaseAppError):
    """Raised when an operation is called outside its preconditions."""

    def __init__(self, message: str, operation: str | None = None, details: dict[str, Any] | None = None):
        super().__init__(
            message=message,
            error_code="CONTRACT_VIOLATION",
            details={"operation": operation, **(details or {})}
        )


class ValidationError(BaseAppError):
    """Raised when user input validation fails."""

    def __init__(self, message: str, field: str | None = None, details: dict[str, Any] | None = None):
        super().__init__(
            message=message,
            error_code="VALIDATION_ERROR",
            details={"field": field, **(details or {})}
        )


class ConfigurationError(BaseAppError):
    """Raised when settings cannot be resolved or fail validation."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(
            message=message,
            error_code="CONFIGURATION_ERROR",
            details=details or {}
        )


class CheckpointNotFoundError(BaseAppError):
    """Raised when a checkpoint file cannot be located."""

    def __init__(self, path: str, message: str | None = None):
        super().__init__(
            message=message or f"Checkpoint {path} not found.",
            error_code="CHECKPOINT_NOT_FOUND",
            details={"path": path}
        )


class CheckpointFormatError(BaseAppError):
    """Raised when a checkpoint archive is malformed or incompatible."""

    def __init__(self, message: str, path: str | None = None, details: dict[str, Any] | None = None):
        super().__init__(
            message=message,
            error_code="CHECKPOINT_FORMAT_ERROR",
            details={"path": path, **(details or {})}
        )


class DatasetError(BaseAppError):
    """Raised when image data cannot be read or written."""

    def __init__(self, message: str, path: str | None = None, details: dict[str, Any] | None = None):
        super().__init__(
            message=message,
            error_code="DATASET_ERROR",
            details={"path": path, **(details or {})}
        )


class NonFiniteLossError(BaseAppError):
    """Raised when a training loss becomes NaN or infinite."""

    def __init__(self, stage: str, step: int, terms: dict[str, float]):
        super().__init__(
            message=f"Non-finite loss in {stage} stage at step {step}",
            error_code="NON_FINITE_LOSS",
            details={"stage": stage, "step": step, "terms": terms}
        )
