import torch
from torch import nn

from codedehaze.networks.transformer import TransformerTrunk
from codedehaze.utils.validation import require_index_range

# Keeps sigmoid outputs strictly inside (0, 1) in float32
SCORE_EPS = 1e-6


class CodeCritic(nn.Module):
    """Scores each code of ``S (B, m, n)``; a higher score means "reject"."""

    def __init__(
        self,
        num_codes: int,
        trunk_dim: int,
        num_groups: int,
        depth: int,
        num_heads: int,
        window_size: int,
        mlp_ratio: float = 2.0,
    ):
        super().__init__()
        self.num_codes = num_codes
        self.code_embed = nn.Embedding(num_codes, trunk_dim)
        self.trunk = TransformerTrunk(trunk_dim, num_groups, depth, num_heads, window_size, mlp_ratio)
        self.to_score = nn.Linear(trunk_dim, 1)

    def logits(self, codes: torch.Tensor) -> torch.Tensor:
        require_index_range("critic_scores", codes, self.num_codes)
        x = self.trunk(self.code_embed(codes.long()))
        return self.to_score(x).squeeze(-1)

    def forward(self, codes: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(codes)).clamp(SCORE_EPS, 1.0 - SCORE_EPS)
