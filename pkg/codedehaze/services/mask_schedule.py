"""Cosine mask schedule, mask sampling, token fusion and critic-guided selection.

Masks are boolean tensors; ``True`` marks a position still held by low-quality
encoder features that will be re-predicted. Selection functions work on
flattened ``(B, N)`` scores and return ``(B, N)`` masks.
"""
import math
from typing import Literal

import torch

from codedehaze.exceptions.errors import ContractViolationError
from codedehaze.utils.validation import require_range, require_same_shape

# Absorbs float error when gamma(r) * N is mathematically an integer
_CEIL_TOLERANCE = 1e-9

SelectionMode = Literal["topk", "stochastic"]


def gamma(r: float) -> float:
    """cos(pi * r / 2) on [0, 1], exact at both ends."""
    require_range("gamma", r, 0.0, 1.0, "r")
    if r == 1.0:
        return 0.0
    return math.cos(math.pi * r / 2.0)


def mask_count(r: float, n_tokens: int) -> int:
    """ceil(gamma(r) * N) clamped to [0, N]."""
    if n_tokens < 1:
        raise ContractViolationError("mask_count: N must be >= 1", operation="mask_count", details={"N": n_tokens})
    value = math.ceil(gamma(r) * n_tokens - _CEIL_TOLERANCE)
    return min(max(value, 0), n_tokens)


def schedule_counts(iters: int, n_tokens: int) -> list[int]:
    """Mask counts left after each inference iteration t = 1..T."""
    if iters < 1:
        raise ContractViolationError("schedule: T must be >= 1", operation="schedule_counts", details={"T": iters})
    return [mask_count(t / iters, n_tokens) for t in range(1, iters + 1)]


def _check_k(operation: str, k: int, n_tokens: int) -> None:
    if not 0 <= k <= n_tokens:
        raise ContractViolationError(
            f"{operation}: k={k} outside [0, {n_tokens}]",
            operation=operation,
            details={"k": k, "N": n_tokens},
        )


def random_mask(k: int, n_tokens: int, generator: torch.Generator) -> torch.Tensor:
    """Exactly k ones placed uniformly at random among N positions."""
    _check_k("random_mask", k, n_tokens)
    mask = torch.zeros(n_tokens, dtype=torch.bool)
    mask[torch.randperm(n_tokens, generator=generator)[:k]] = True
    return mask


def sample_training_masks(batch: int, n_tokens: int, generator: torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-sample r ~ U(0, 1] and the matching random masks, as used in Stage I/II.

    Returns ``(ratios (B,), masks (B, N))``.
    """
    ratios = 1.0 - torch.rand(batch, generator=generator, dtype=torch.float64)
    masks = torch.stack([random_mask(mask_count(float(r), n_tokens), n_tokens, generator) for r in ratios])
    return ratios, masks


def fuse(z_l: torch.Tensor, z_c: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """``Z_l`` where the mask is set, ``Z_c`` elsewhere, position by position.

    ``mask`` matches the grid without its trailing channel dim, or is its
    flattened ``(B, m*n)`` form.
    """
    require_same_shape("fuse", Z_l=z_l, Z_c=z_c)
    if mask.shape != z_l.shape[:-1]:
        if mask.numel() != z_l[..., 0].numel():
            raise ContractViolationError(
                f"fuse: mask shape {tuple(mask.shape)} does not match grid {tuple(z_l.shape)}",
                operation="fuse",
            )
        mask = mask.reshape(z_l.shape[:-1])
    return torch.where(mask.bool().unsqueeze(-1), z_l, z_c)


def select_mask_by_critic(
    scores: torch.Tensor,
    k: int,
    mode: SelectionMode = "topk",
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Mask k positions per row of ``scores (B, N)``.

    topk masks the highest scores with ties going to the earlier (row-major)
    position; stochastic draws k positions without replacement with
    probability proportional to the score.
    """
    if scores.dim() == 1:
        return select_mask_by_critic(scores.unsqueeze(0), k, mode, generator)[0]
    batch, n_tokens = scores.shape
    _check_k("select_mask_by_critic", k, n_tokens)
    mask = torch.zeros(batch, n_tokens, dtype=torch.bool, device=scores.device)
    if k == 0:
        return mask
    if mode == "topk":
        order = torch.sort(scores, dim=-1, descending=True, stable=True).indices
        chosen = order[:, :k]
    elif mode == "stochastic":
        weights = scores.detach().to(torch.float64).clamp_min(0.0)
        chosen = torch.multinomial(weights.cpu(), k, replacement=False, generator=generator).to(scores.device)
    else:
        raise ContractViolationError(f"Unknown selection mode {mode!r}", operation="select_mask_by_critic")
    mask.scatter_(1, chosen, True)
    return mask
