"""
Custom exception classes for the application.
"""
from codedehaze.exceptions.errors import (
    BaseAppError,
    CheckpointFormatError,
    CheckpointNotFoundError,
    ConfigurationError,
    ContractViolationError,
    DatasetError,
    NonFiniteLossError,
    ValidationError,
)

__all__ = [
    "BaseAppError",
    "CheckpointFormatError",
    "CheckpointNotFoundError",
    "ConfigurationError",
    "ContractViolationError",
    "DatasetError",
    "NonFiniteLossError",
    "ValidationError",
]
