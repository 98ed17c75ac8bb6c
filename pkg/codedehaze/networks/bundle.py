"""All parametric components in one module so checkpoints see a single state dict."""
import copy
import hashlib
import logging
from typing import Iterable

import torch
from einops import rearrange
from torch import nn

from codedehaze.config.settings import Settings
from codedehaze.networks.autoencoder import Decoder, Encoder
from codedehaze.networks.critic import CodeCritic
from codedehaze.networks.discriminator import PatchDiscriminator
from codedehaze.networks.features import RandomFeatureExtractor
from codedehaze.networks.predictor import CodePredictor
from codedehaze.networks.vq_codebook import Codebook

logger = logging.getLogger(__name__)


class DehazeModel(nn.Module):
    """
    Components:
        encoder_h / encoder_l: high- and low-quality encoders (E_H, E_L)
        decoder: D_H plus its SFT layers
        codebook: the K x d code matrix
        feature_proj: 1x1 conv mapping Z_h into the frozen feature space
        predictor / critic: G_theta / G_phi
        discriminator: adversarial patch classifier
        features: frozen feature extractor (not serialized)
    """

    def __init__(self, settings: Settings, feature_extractor: nn.Module | None = None):
        super().__init__()
        self.embed_dim = settings.model_embed_dim
        self.num_codes = settings.model_codebook_size
        self.encoder_h = Encoder(settings.model_base_channels, settings.model_embed_dim)
        self.encoder_l = Encoder(settings.model_base_channels, settings.model_embed_dim)
        self.decoder = Decoder(settings.model_base_channels, settings.model_embed_dim)
        self.codebook = Codebook(
            settings.model_codebook_size,
            settings.model_embed_dim,
            dead_code_threshold=settings.train_dead_code_threshold,
        )
        self.feature_proj = nn.Conv2d(settings.model_embed_dim, settings.model_feature_dim, 1)
        self.predictor = CodePredictor(
            settings.model_embed_dim,
            settings.model_codebook_size,
            settings.model_trunk_dim,
            settings.model_predictor_groups,
            settings.model_block_depth,
            settings.model_num_heads,
            settings.model_window_size,
            settings.model_mlp_ratio,
        )
        self.critic = CodeCritic(
            settings.model_codebook_size,
            settings.model_trunk_dim,
            settings.model_critic_groups,
            settings.model_block_depth,
            settings.model_num_heads,
            settings.model_window_size,
            settings.model_mlp_ratio,
        )
        self.discriminator = PatchDiscriminator(settings.model_disc_channels)
        features = feature_extractor or RandomFeatureExtractor(settings.model_feature_dim)
        # Kept outside the module tree so it never enters state_dict or optimizers
        self.__dict__["features"] = features

    def to(self, *args, **kwargs) -> "DehazeModel":
        super().to(*args, **kwargs)
        self.__dict__["features"] = self.features.to(*args, **kwargs)
        return self

    def project_tokens(self, z_h: torch.Tensor) -> torch.Tensor:
        """CONV(Z_h) in the frozen feature space, channel-first."""
        return self.feature_proj(rearrange(z_h, "b h w c -> b c h w"))

    @torch.no_grad()
    def sync_low_quality_encoder(self) -> None:
        """Initialise E_L as a copy of the pretrained E_H."""
        self.encoder_l.load_state_dict(copy.deepcopy(self.encoder_h.state_dict()))
        logger.info("Initialised low-quality encoder from high-quality encoder weights")


def parameter_checksum(params: Iterable[torch.Tensor]) -> str:
    """SHA-256 over the raw bytes of the given tensors, in order."""
    digest = hashlib.sha256()
    for tensor in params:
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def set_trainable(modules: Iterable[nn.Module | Iterable[nn.Parameter]], flag: bool) -> None:
    for item in modules:
        params = item.parameters() if isinstance(item, nn.Module) else item
        for param in params:
            param.requires_grad_(flag)
