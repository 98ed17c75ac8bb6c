import torch
from torch import nn


class PatchInstanceNorm(nn.InstanceNorm2d):
    """Instance norm that passes single-pixel maps through unchanged."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2] * x.shape[-1] == 1:
            return x
        return super().forward(x)


class PatchDiscriminator(nn.Module):
    """Four-layer strided conv patch classifier; scores are logits at H/8 x W/8."""

    def __init__(self, channels: int = 32):
        super().__init__()

        def block(in_filters: int, out_filters: int, normalization: bool = True) -> list[nn.Module]:
            layers: list[nn.Module] = [nn.Conv2d(in_filters, out_filters, 4, stride=2, padding=1)]
            if normalization:
                layers.append(PatchInstanceNorm(out_filters))
            layers.append(nn.LeakyReLU(0.2))
            return layers

        self.model = nn.Sequential(
            *block(3, channels, normalization=False),
            *block(channels, channels * 2),
            *block(channels * 2, channels * 4),
            nn.Conv2d(channels * 4, 1, 3, stride=1, padding=1),
        )

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.model(image)
