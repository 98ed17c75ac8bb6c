"""Windowed self-attention trunk shared by the Code-Predictor and Code-Critic.

A simplified stand-in for residual Swin groups: pre-norm attention blocks over
non-overlapping windows (alternate blocks use a half-window shift), with a 3x3
convolution closing each residual group.
"""
import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, hidden_dim),
            nn.GELU(),
            nn.Linear(hidden_dim, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class WindowAttentionBlock(nn.Module):
    """Pre-norm window attention + MLP on a channel-last ``(B, m, n, C)`` grid."""

    def __init__(self, dim: int, num_heads: int, window_size: int, shift: bool, mlp_ratio: float = 2.0):
        super().__init__()
        self.window_size = window_size
        self.shift = shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, num_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = FeedForward(dim, int(dim * mlp_ratio))

    def _attend(self, x: torch.Tensor) -> torch.Tensor:
        batch, height, width, _ = x.shape
        ws = min(self.window_size, height, width)
        pad_h = (-height) % ws
        pad_w = (-width) % ws

        valid = torch.ones(batch, height, width, dtype=torch.bool, device=x.device)
        if pad_h or pad_w:
            x = F.pad(x, (0, 0, 0, pad_w, 0, pad_h))
            valid = F.pad(valid, (0, pad_w, 0, pad_h), value=False)

        shift = ws // 2 if self.shift and ws > 1 else 0
        if shift:
            x = torch.roll(x, shifts=(-shift, -shift), dims=(1, 2))
            valid = torch.roll(valid, shifts=(-shift, -shift), dims=(1, 2))

        rows, cols = x.shape[1] // ws, x.shape[2] // ws
        windows = rearrange(x, "b (h wh) (w ww) c -> (b h w) (wh ww) c", wh=ws, ww=ws)
        key_padding = ~rearrange(valid, "b (h wh) (w ww) -> (b h w) (wh ww)", wh=ws, ww=ws)
        # Every window keeps at least one real token, so no row is fully masked
        attended, _ = self.attn(
            windows, windows, windows,
            key_padding_mask=key_padding if bool(key_padding.any()) else None,
            need_weights=False,
        )
        out = rearrange(attended, "(b h w) (wh ww) c -> b (h wh) (w ww) c", h=rows, w=cols, wh=ws, ww=ws)

        if shift:
            out = torch.roll(out, shifts=(shift, shift), dims=(1, 2))
        return out[:, :height, :width, :]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self._attend(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class ResidualGroup(nn.Module):
    def __init__(self, dim: int, depth: int, num_heads: int, window_size: int, mlp_ratio: float):
        super().__init__()
        self.blocks = nn.ModuleList(
            WindowAttentionBlock(dim, num_heads, window_size, shift=bool(i % 2), mlp_ratio=mlp_ratio)
            for i in range(depth)
        )
        self.conv = nn.Conv2d(dim, dim, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        residual = x
        for block in self.blocks:
            x = block(x)
        x = rearrange(self.conv(rearrange(x, "b h w c -> b c h w")), "b c h w -> b h w c")
        return x + residual


class TransformerTrunk(nn.Module):
    """Stack of residual groups followed by a final LayerNorm."""

    def __init__(
        self,
        dim: int,
        num_groups: int,
        depth: int,
        num_heads: int,
        window_size: int,
        mlp_ratio: float = 2.0,
    ):
        super().__init__()
        self.groups = nn.ModuleList(
            ResidualGroup(dim, depth, num_heads, window_size, mlp_ratio) for _ in range(num_groups)
        )
        self.norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for group in self.groups:
            x = group(x)
        return self.norm(x)
