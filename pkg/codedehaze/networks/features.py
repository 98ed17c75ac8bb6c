"""Frozen feature space for the perceptual and feature-guidance losses.

A randomly initialised three-layer conv net stands in for a pretrained VGG.
Its output lives at H/4 x W/4 so it lines up with the latent grid. Any other
frozen ``nn.Module`` with the same output contract can be plugged in instead.
"""
import torch
from torch import nn


class RandomFeatureExtractor(nn.Module):
    def __init__(self, feature_dim: int = 32, seed: int = 1234):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv2d(3, feature_dim // 2 or 1, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(feature_dim // 2 or 1, feature_dim, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(feature_dim, feature_dim, 3, padding=1),
        )
        # Own generator so the weights do not depend on the global RNG
        with torch.no_grad():
            for module in self.net:
                if isinstance(module, nn.Conv2d):
                    fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
                    module.weight.copy_(torch.randn(module.weight.shape, generator=generator) * (2.0 / fan_in) ** 0.5)
                    module.bias.zero_()
        self.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True) -> "RandomFeatureExtractor":
        # Always frozen
        return super().train(False)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.net(image)
