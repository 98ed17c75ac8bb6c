"""Paired-image and code-level metrics."""
import math

import numpy as np
import torch
import torch.nn.functional as F
from scipy.stats import rankdata

from codedehaze.utils.validation import require_same_shape

# Reported for identical images instead of +inf
PSNR_SENTINEL_DB = 99.0

_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


def _as_tensor(image: np.ndarray | torch.Tensor) -> torch.Tensor:
    if isinstance(image, np.ndarray):
        image = torch.from_numpy(np.ascontiguousarray(image))
    return image.detach().to(torch.float64).cpu()


def psnr(a: np.ndarray | torch.Tensor, b: np.ndarray | torch.Tensor) -> float:
    """10 * log10(1 / MSE) for images in [0, 1]."""
    a, b = _as_tensor(a), _as_tensor(b)
    require_same_shape("psnr", a=a, b=b)
    mse = float(torch.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_SENTINEL_DB)


def ssim(a: np.ndarray | torch.Tensor, b: np.ndarray | torch.Tensor, window: int = 8) -> float:
    """Mean SSIM over channels with a uniform ``window x window`` box and valid borders.

    Arrays are H x W x C; tensors are C x H x W or 1 x C x H x W.
    """
    is_array = isinstance(a, np.ndarray)
    a, b = _as_tensor(a), _as_tensor(b)
    require_same_shape("ssim", a=a, b=b)
    if is_array:
        a = a.permute(2, 0, 1)
        b = b.permute(2, 0, 1)
    if a.dim() == 3:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    window = max(1, min(window, a.shape[-2], a.shape[-1]))

    mu_a = F.avg_pool2d(a, window, stride=1)
    mu_b = F.avg_pool2d(b, window, stride=1)
    var_a = F.avg_pool2d(a * a, window, stride=1) - mu_a ** 2
    var_b = F.avg_pool2d(b * b, window, stride=1) - mu_b ** 2
    cov = F.avg_pool2d(a * b, window, stride=1) - mu_a * mu_b

    numerator = (2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)
    denominator = (mu_a ** 2 + mu_b ** 2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    value = float((numerator / denominator).mean())
    return max(-1.0, min(1.0, value))


def code_accuracy(codes: torch.Tensor, target: torch.Tensor) -> float:
    """Fraction of positions whose code index matches the target."""
    require_same_shape("code_accuracy", S=codes, S_h=target)
    if codes.numel() == 0:
        return 1.0
    return float((codes == target).to(torch.float64).mean())


def ranking_auc(scores: np.ndarray | torch.Tensor, labels: np.ndarray | torch.Tensor) -> float | None:
    """Probability that a random positive scores above a random negative.

    Mann-Whitney U over average ranks, so ties count one half. Returns None
    when either class is empty.
    """
    scores = np.asarray(_as_tensor(scores).reshape(-1))
    labels = np.asarray(_as_tensor(labels).reshape(-1)) > 0.5
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    u_stat = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))
