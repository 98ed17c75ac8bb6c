"""Loss functions for the three training stages. All losses are mean-reduced
unless stated otherwise."""
from typing import Literal

import torch
import torch.nn.functional as F

from codedehaze.exceptions.errors import ContractViolationError
from codedehaze.utils.validation import require_index_range, require_same_shape

AdversarialSide = Literal["generator", "discriminator"]


def loss_l1(i_h: torch.Tensor, i_rec: torch.Tensor) -> torch.Tensor:
    require_same_shape("loss_l1", I_h=i_h, I_rec=i_rec)
    return F.l1_loss(i_rec, i_h)


def loss_perceptual(feat_h: torch.Tensor, feat_rec: torch.Tensor) -> torch.Tensor:
    """L1 distance in the frozen feature space."""
    require_same_shape("loss_perceptual", feat_h=feat_h, feat_rec=feat_rec)
    return F.l1_loss(feat_rec, feat_h)


def loss_adv(
    d_real: torch.Tensor | None,
    d_fake: torch.Tensor,
    side: AdversarialSide,
) -> torch.Tensor:
    """Adversarial loss on discriminator logits.

    discriminator: ``-log D(I_h) - log(1 - D(I_rec))``
    generator (non-saturating): ``-log D(I_rec)``
    """
    if side == "generator":
        return F.softplus(-d_fake).mean()
    if side == "discriminator":
        if d_real is None:
            raise ContractViolationError("loss_adv: discriminator side needs D(I_h)", operation="loss_adv")
        return F.softplus(-d_real).mean() + F.softplus(d_fake).mean()
    raise ContractViolationError(f"loss_adv: unknown side {side!r}", operation="loss_adv")


def loss_ce(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Cross-entropy of ``logits (..., N, K)`` against code labels ``(..., N)``."""
    num_codes = logits.shape[-1]
    require_index_range("loss_ce", targets, num_codes)
    flat_targets = targets.reshape(-1).long()
    flat_logits = logits.reshape(-1, num_codes)
    if flat_logits.shape[0] != flat_targets.shape[0]:
        raise ContractViolationError(
            f"loss_ce: {flat_logits.shape[0]} logit rows for {flat_targets.shape[0]} labels",
            operation="loss_ce",
        )
    return F.cross_entropy(flat_logits, flat_targets)


def loss_bce(
    scores: torch.Tensor,
    targets: torch.Tensor,
    reduction: Literal["mean", "sum"] = "mean",
) -> torch.Tensor:
    """Binary cross-entropy of critic scores in (0, 1) against wrongness labels."""
    if scores.numel() != targets.numel():
        require_same_shape("loss_bce", p_phi=scores, M=targets)
    targets = targets.reshape(scores.shape).to(scores.dtype)
    return F.binary_cross_entropy(scores, targets, reduction=reduction)


def temperature_softmax(logits: torch.Tensor, temperature: float) -> torch.Tensor:
    if temperature <= 0:
        raise ContractViolationError(
            f"temperature_softmax: Temp must be > 0, got {temperature}",
            operation="temperature_softmax",
        )
    return torch.softmax(logits / temperature, dim=-1)
