"""Discrete codebook, nearest-neighbour quantization and the VQ loss terms.

Token grids are channel-last tensors of shape ``(..., d)``; a single image's
latent is ``(m, n, d)`` and a batch is ``(B, m, n, d)``. Code sequences are
integer tensors with the same leading shape.
"""
import logging
import math

import torch
import torch.nn.functional as F
from torch import nn

from codedehaze.exceptions.errors import ContractViolationError
from codedehaze.utils.validation import require_finite, require_index_range, require_last_dim, require_same_shape

logger = logging.getLogger(__name__)


def squared_distances(grid: torch.Tensor, codes: torch.Tensor) -> torch.Tensor:
    """Squared Euclidean distance from every token to every code, in float64.

    Returns a tensor of shape ``grid.shape[:-1] + (K,)``.
    """
    z = grid.detach().to(torch.float64)
    c = codes.detach().to(torch.float64)
    z_sq = (z * z).sum(dim=-1, keepdim=True)
    c_sq = (c * c).sum(dim=-1)
    cross = torch.matmul(z, c.transpose(0, 1))
    return (z_sq - 2.0 * cross + c_sq).clamp_min(0.0)


def lookup(indices: torch.Tensor, codes: torch.Tensor) -> torch.Tensor:
    """Select codebook rows: ``out[..., :] == codes[indices[...]]``."""
    require_index_range("lookup", indices, codes.shape[0])
    return F.embedding(indices.long(), codes)


def quantize(grid: torch.Tensor, codes: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Replace every token with its nearest code.

    Ties are broken towards the lowest index (``torch.argmin`` returns the
    first minimum). Gradients reach ``codes`` through the lookup only.
    """
    require_last_dim("quantize", grid, codes.shape[1], name="grid")
    indices = squared_distances(grid, codes).argmin(dim=-1)
    return indices, lookup(indices, codes)


def code_loss(
    z_h: torch.Tensor,
    z_c: torch.Tensor,
    proj_feat: torch.Tensor,
    target_feat: torch.Tensor,
    beta_commit: float = 0.25,
    lambda_g: float = 0.1,
) -> torch.Tensor:
    """Codebook + commitment + feature-guidance loss, mean-reduced per term.

    ``mse(sg(z_c), z_h) + beta * mse(z_c, sg(z_h)) + lambda_g * mse(proj, target)``
    """
    require_same_shape("code_loss", z_h=z_h, z_c=z_c)
    require_same_shape("code_loss", proj_feat=proj_feat, target_feat=target_feat)
    if beta_commit < 0 or lambda_g < 0:
        raise ContractViolationError(
            "code_loss: weights must be non-negative",
            operation="code_loss",
            details={"beta_commit": beta_commit, "lambda_g": lambda_g},
        )
    encoder_term = F.mse_loss(z_h, z_c.detach())
    codebook_term = F.mse_loss(z_c, z_h.detach())
    guidance_term = F.mse_loss(proj_feat, target_feat)
    return encoder_term + beta_commit * codebook_term + lambda_g * guidance_term


def straight_through(z_h: torch.Tensor, z_c: torch.Tensor) -> torch.Tensor:
    """Forward value of ``z_c``, identity gradient to ``z_h``."""
    require_same_shape("straight_through", z_h=z_h, z_c=z_c)
    return z_h + (z_c - z_h).detach()


class Codebook(nn.Module):
    """K x d learned code matrix with dead-code revival."""

    def __init__(self, num_codes: int, dim: int, dead_code_threshold: int = 2000):
        super().__init__()
        if num_codes < 2 or dim < 1:
            raise ContractViolationError(
                f"Codebook needs K >= 2 and d >= 1, got K={num_codes}, d={dim}",
                operation="Codebook",
            )
        self.num_codes = num_codes
        self.dim = dim
        self.dead_code_threshold = dead_code_threshold
        self.codes = nn.Parameter(torch.randn(num_codes, dim) / math.sqrt(dim))
        # Steps since each code was last selected
        self.register_buffer("idle_steps", torch.zeros(num_codes))

    def quantize(self, grid: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        require_finite("quantize", grid, name="grid")
        return quantize(grid, self.codes)

    def lookup(self, indices: torch.Tensor) -> torch.Tensor:
        return lookup(indices, self.codes)

    @torch.no_grad()
    def update_usage(self, indices: torch.Tensor, encoder_tokens: torch.Tensor, generator: torch.Generator) -> int:
        """Age unused codes and re-seed the ones idle past the threshold.

        Dead codes are replaced by encoder outputs drawn from the current batch.
        Returns the number of revived codes.
        """
        used = torch.zeros(self.num_codes, dtype=torch.bool, device=self.codes.device)
        used[indices.reshape(-1)] = True
        self.idle_steps.add_(1.0)
        self.idle_steps[used] = 0.0

        dead = (self.idle_steps >= self.dead_code_threshold).nonzero(as_tuple=True)[0]
        if dead.numel() == 0:
            return 0
        pool = encoder_tokens.reshape(-1, self.dim)
        picks = torch.randint(pool.shape[0], (dead.numel(),), generator=generator, device=generator.device)
        self.codes[dead] = pool[picks.to(pool.device)].to(self.codes.dtype)
        self.idle_steps[dead] = 0.0
        logger.info(f"Revived {dead.numel()} dead codes")
        return int(dead.numel())
