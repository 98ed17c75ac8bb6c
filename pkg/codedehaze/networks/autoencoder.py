"""Convolutional encoder/decoder pair with SFT modulation in the decoder.

Images are ``(B, 3, H, W)`` tensors in [0, 1]. The encoder downsamples by 4
over two stride-2 stages and returns a channel-last TokenGrid
``(B, H/4, W/4, d)`` plus the skip features at full and half resolution.
"""
import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn

from codedehaze.exceptions.errors import ContractViolationError
from codedehaze.utils.validation import require_last_dim, require_spatial_multiple


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.GroupNorm(_groups(channels), channels),
            nn.SiLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.GroupNorm(_groups(channels), channels),
            nn.SiLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


def _groups(channels: int) -> int:
    for groups in (8, 4, 2):
        if channels % groups == 0:
            return groups
    return 1


class Encoder(nn.Module):
    """conv_in -> [stride-2 block] x 2 -> 1x1 projection to the code dim."""

    def __init__(self, base_channels: int, embed_dim: int):
        super().__init__()
        c1, c2 = base_channels, base_channels * 2
        self.conv_in = nn.Conv2d(3, c1, 3, padding=1)
        self.res_full = ResBlock(c1)
        self.down1 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.res_half = ResBlock(c2)
        self.down2 = nn.Conv2d(c2, embed_dim, 3, stride=2, padding=1)
        self.res_quarter = ResBlock(embed_dim)
        self.before_quant = nn.Conv2d(embed_dim, embed_dim, 1)

    def forward(self, image: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        require_spatial_multiple("encode", image, 4)
        full = self.res_full(self.conv_in(image))
        half = self.res_half(self.down1(full))
        quarter = self.before_quant(self.res_quarter(self.down2(half)))
        return rearrange(quarter, "b c h w -> b h w c"), [half, full]


class SFTLayer(nn.Module):
    """Spatial feature transform: ``F_d + alpha * F_d + beta``.

    alpha and beta come from a small conv net over ``cat(F_e, F_d)``; its last
    convolution starts at zero so the layer is the identity at init.
    """

    def __init__(self, decoder_channels: int, encoder_channels: int):
        super().__init__()
        hidden = max(decoder_channels, 8)
        self.body = nn.Sequential(
            nn.Conv2d(decoder_channels + encoder_channels, hidden, 3, padding=1),
            nn.LeakyReLU(0.2),
        )
        self.to_affine = nn.Conv2d(hidden, 2 * decoder_channels, 3, padding=1)
        nn.init.zeros_(self.to_affine.weight)
        nn.init.zeros_(self.to_affine.bias)

    def modulation(self, f_d: torch.Tensor, f_e: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if f_d.shape[0] != f_e.shape[0] or f_d.shape[-2:] != f_e.shape[-2:]:
            raise ContractViolationError(
                f"sft_modulate: F_d {tuple(f_d.shape)} and F_e {tuple(f_e.shape)} are not aligned",
                operation="sft_modulate",
            )
        alpha, beta = self.to_affine(self.body(torch.cat([f_e, f_d], dim=1))).chunk(2, dim=1)
        return alpha, beta

    def forward(self, f_d: torch.Tensor, f_e: torch.Tensor) -> torch.Tensor:
        alpha, beta = self.modulation(f_d, f_e)
        return f_d + alpha * f_d + beta


class Decoder(nn.Module):
    """after_quant -> [x2 upsample, block, SFT] x 2 -> conv_out -> sigmoid.

    SFT layers are only applied when encoder skip features are supplied.
    """

    def __init__(self, base_channels: int, embed_dim: int):
        super().__init__()
        c1, c2 = base_channels, base_channels * 2
        self.embed_dim = embed_dim
        self.after_quant = nn.Conv2d(embed_dim, embed_dim, 3, padding=1)
        self.res_quarter = ResBlock(embed_dim)
        self.block3 = nn.Sequential(nn.Conv2d(embed_dim, c2, 3, padding=1), ResBlock(c2))
        self.block4 = nn.Sequential(nn.Conv2d(c2, c1, 3, padding=1), ResBlock(c1))
        self.conv_out = nn.Conv2d(c1, 3, 3, padding=1)
        self.sft = nn.ModuleList([SFTLayer(c2, c2), SFTLayer(c1, c1)])

    def forward(self, z_q: torch.Tensor, skips: list[torch.Tensor] | None = None) -> torch.Tensor:
        require_last_dim("decode", z_q, self.embed_dim, name="z_q")
        x = self.res_quarter(self.after_quant(rearrange(z_q, "b h w c -> b c h w")))
        x = self.block3(F.interpolate(x, scale_factor=2, mode="nearest"))
        if skips is not None:
            x = self.sft[0](x, skips[0])
        x = self.block4(F.interpolate(x, scale_factor=2, mode="nearest"))
        if skips is not None:
            x = self.sft[1](x, skips[1])
        return torch.sigmoid(self.conv_out(x))

    def backbone_parameters(self):
        """Decoder weights excluding the SFT layers (the frozen D_H)."""
        return [param for name, param in self.named_parameters() if not name.startswith("sft.")]
