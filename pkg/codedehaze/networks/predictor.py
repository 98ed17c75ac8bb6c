import torch
from einops import rearrange
from torch import nn

from codedehaze.networks.transformer import TransformerTrunk
from codedehaze.utils.validation import require_finite, require_last_dim


class CodePredictor(nn.Module):
    """Maps fused tokens ``(B, m, n, d)`` to code logits ``(B, m*n, K)``."""

    def __init__(
        self,
        embed_dim: int,
        num_codes: int,
        trunk_dim: int,
        num_groups: int,
        depth: int,
        num_heads: int,
        window_size: int,
        mlp_ratio: float = 2.0,
    ):
        super().__init__()
        self.embed_dim = embed_dim
        self.num_codes = num_codes
        self.token_embed = nn.Linear(embed_dim, trunk_dim)
        self.trunk = TransformerTrunk(trunk_dim, num_groups, depth, num_heads, window_size, mlp_ratio)
        self.to_logits = nn.Linear(trunk_dim, num_codes)

    def forward(self, z_t: torch.Tensor) -> torch.Tensor:
        require_last_dim("predict_logits", z_t, self.embed_dim, name="Z_t")
        require_finite("predict_logits", z_t, name="Z_t")
        x = self.trunk(self.token_embed(z_t))
        return rearrange(self.to_logits(x), "b h w k -> b (h w) k")
