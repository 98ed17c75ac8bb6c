"""
Precondition checks shared by the tensor operations.
"""
from typing import Any, Sequence

import torch

from codedehaze.exceptions.errors import ContractViolationError, ValidationError


def require_same_shape(operation: str, **tensors: torch.Tensor) -> None:
    """
    Ensure every named tensor has the same shape.

    Raises:
        ContractViolationError: If any two shapes differ
    """
    shapes = {name: tuple(tensor.shape) for name, tensor in tensors.items()}
    if len(set(shapes.values())) > 1:
        raise ContractViolationError(
            f"{operation}: shape mismatch {shapes}",
            operation=operation,
            details={"shapes": {name: list(shape) for name, shape in shapes.items()}}
        )


def require_last_dim(operation: str, tensor: torch.Tensor, expected: int, name: str = "input") -> None:
    """Ensure the trailing (embedding) dimension matches."""
    if tensor.dim() == 0 or tensor.shape[-1] != expected:
        raise ContractViolationError(
            f"{operation}: {name} has trailing dim {tuple(tensor.shape)[-1:]} but {expected} is required",
            operation=operation,
            details={"shape": list(tensor.shape), "expected": expected}
        )


def require_index_range(operation: str, indices: torch.Tensor, upper: int) -> None:
    """
    Ensure integer indices lie in [0, upper).

    Raises:
        ContractViolationError: If the tensor is not integral or any index is out of range
    """
    if indices.dtype.is_floating_point or indices.dtype == torch.bool:
        raise ContractViolationError(
            f"{operation}: indices must be an integer tensor, got {indices.dtype}",
            operation=operation,
        )
    if indices.numel() == 0:
        return
    low, high = int(indices.min()), int(indices.max())
    if low < 0 or high >= upper:
        raise ContractViolationError(
            f"{operation}: index out of range [0, {upper}) (min={low}, max={high})",
            operation=operation,
            details={"min": low, "max": high, "upper": upper}
        )


def require_finite(operation: str, tensor: torch.Tensor, name: str = "input") -> None:
    """Reject tensors holding NaN or Inf."""
    if not bool(torch.isfinite(tensor).all()):
        raise ContractViolationError(
            f"{operation}: {name} contains non-finite values",
            operation=operation,
        )


def require_range(operation: str, value: float, low: float, high: float, name: str) -> None:
    """Ensure a scalar lies in the closed interval [low, high]."""
    if not low <= value <= high:
        raise ContractViolationError(
            f"{operation}: {name}={value} outside [{low}, {high}]",
            operation=operation,
            details={name: value, "low": low, "high": high}
        )


def require_spatial_multiple(operation: str, image: torch.Tensor, multiple: int = 4) -> None:
    """Ensure an NCHW image has height and width divisible by multiple."""
    height, width = image.shape[-2:]
    if height % multiple or width % multiple:
        raise ContractViolationError(
            f"{operation}: image dims {height}x{width} must be divisible by {multiple}",
            operation=operation,
            details={"height": int(height), "width": int(width), "multiple": multiple}
        )


def parse_int_list(raw: str, field: str) -> list[int]:
    """
    Parse a comma separated list of positive integers such as "3,4,6,8,10".

    Raises:
        ValidationError: If the list is empty or holds a non-positive value
    """
    values: list[int] = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            value = int(part)
        except ValueError as exc:
            raise ValidationError(f"'{part}' is not an integer", field=field) from exc
        if value < 1:
            raise ValidationError(f"Values must be >= 1, got {value}", field=field)
        values.append(value)
    if not values:
        raise ValidationError("Expected at least one value", field=field)
    return values


def require_choice(value: Any, choices: Sequence[Any], field: str) -> Any:
    """Validate that value is one of the allowed choices."""
    if value not in choices:
        raise ValidationError(
            f"{field} must be one of {list(choices)}, got {value!r}",
            field=field,
            details={"choices": list(choices)}
        )
    return value
