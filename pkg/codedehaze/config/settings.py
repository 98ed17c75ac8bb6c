from pathlib import Path
from typing import Any, Literal

from pydantic import Field, ValidationError as PydanticValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from codedehaze.exceptions.errors import ConfigurationError

PRESETS: dict[str, dict[str, Any]] = {
    "toy": {
        "model_codebook_size": 128,
        "model_embed_dim": 32,
        "model_base_channels": 16,
        "model_trunk_dim": 32,
        "model_window_size": 4,
        "model_num_heads": 4,
        "model_block_depth": 2,
        "model_feature_dim": 32,
        "haze_patch_size": 64,
    },
    "full": {
        "model_codebook_size": 1024,
        "model_embed_dim": 256,
        "model_base_channels": 64,
        "model_trunk_dim": 256,
        "model_window_size": 8,
        "model_num_heads": 8,
        "model_block_depth": 6,
        "model_feature_dim": 64,
        "haze_patch_size": 256,
    },
}


class Settings(BaseSettings):
    app_name: str = "codedehaze"
    log_level: str = "INFO"
    log_dir: str = "logs"
    seed: int = 0
    device: str = "cpu"

    model_preset: Literal["toy", "full"] = "toy"
    model_codebook_size: int = Field(128, ge=2)
    model_embed_dim: int = Field(32, ge=1)
    model_base_channels: int = Field(16, ge=1)
    model_trunk_dim: int = Field(32, ge=1)
    model_window_size: int = Field(4, ge=1)
    model_num_heads: int = Field(4, ge=1)
    model_block_depth: int = Field(2, ge=1)
    model_predictor_groups: int = Field(4, ge=1)
    model_critic_groups: int = Field(2, ge=1)
    model_mlp_ratio: float = Field(2.0, gt=0)
    model_feature_dim: int = Field(32, ge=1)
    model_disc_channels: int = Field(32, ge=1)

    train_learning_rate: float = Field(1e-4, gt=0)
    train_adam_beta1: float = Field(0.9, ge=0, lt=1)
    train_adam_beta2: float = Field(0.99, ge=0, lt=1)
    train_batch_size_vqgan: int = Field(32, ge=1)
    train_batch_size_stages: int = Field(16, ge=1)
    train_steps_vqgan: int = Field(2000, ge=0)
    train_steps_predictor: int = Field(1000, ge=0)
    train_steps_critic: int = Field(300, ge=0)
    train_beta_commit: float = Field(0.25, ge=0)
    train_lambda_g: float = Field(0.1, ge=0)
    train_lambda_adv: float = Field(0.1, ge=0)
    train_lambda_per: float = Field(1.0, ge=0)
    train_critic_temperature: float = Field(2.0, gt=0)
    train_dead_code_threshold: int = Field(2000, ge=1)
    train_log_every: int = Field(50, ge=1)
    train_save_every: int = Field(0, ge=0)
    train_flip: bool = True

    decode_iters: int = Field(8, ge=1)
    decode_sample: Literal["multinomial", "argmax"] = "multinomial"
    decode_selection: Literal["topk", "stochastic"] = "topk"
    decode_sample_temperature: float = Field(1.0, gt=0)
    decode_freeze_retained: bool = False
    decode_nested_masks: bool = False

    haze_patch_size: int = Field(64, ge=8)
    haze_beta_min: float = Field(0.5, gt=0)
    haze_beta_max: float = Field(3.0, gt=0)
    haze_airlight_min: float = Field(0.7, ge=0.7, le=1)
    haze_airlight_max: float = Field(1.0, ge=0.7, le=1)
    haze_noise_max: float = Field(0.02, ge=0)
    haze_gamma_min: float = Field(0.8, gt=0)
    haze_gamma_max: float = Field(1.2, gt=0)
    haze_cast_spread: float = Field(0.05, ge=0)
    haze_workers: int = Field(1, ge=1)

    eval_ssim_window: int = Field(8, ge=2)
    eval_workers: int = Field(1, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="CODEDEHAZE_",
        env_file=None,
        env_file_encoding="utf-8",
        extra="ignore",
        protected_namespaces=(),
    )

    @model_validator(mode="before")
    @classmethod
    def _apply_preset(cls, data: Any) -> Any:
        # Preset values fill keys the caller did not set explicitly.
        if not isinstance(data, dict):
            return data
        preset = str(data.get("model_preset", "toy")).lower()
        for key, value in PRESETS.get(preset, {}).items():
            data.setdefault(key, value)
        return data

    @model_validator(mode="after")
    def _check_ranges(self) -> "Settings":
        if self.haze_beta_min > self.haze_beta_max:
            raise ValueError("haze_beta_min must not exceed haze_beta_max")
        if self.haze_airlight_min > self.haze_airlight_max:
            raise ValueError("haze_airlight_min must not exceed haze_airlight_max")
        if self.haze_gamma_min > self.haze_gamma_max:
            raise ValueError("haze_gamma_min must not exceed haze_gamma_max")
        if self.model_trunk_dim % self.model_num_heads:
            raise ValueError("model_trunk_dim must be divisible by model_num_heads")
        if self.haze_patch_size % 4:
            raise ValueError("haze_patch_size must be divisible by 4")
        return self


def load_settings(config_file: str | Path | None = None, **overrides: Any) -> Settings:
    """
    Resolve settings from defaults, environment, an optional flat KEY=value
    file and explicit overrides (highest precedence).
    """
    clean = {key: value for key, value in overrides.items() if value is not None}
    if config_file is not None and not Path(config_file).is_file():
        raise ConfigurationError(
            f"Config file {config_file} not found",
            details={"config_file": str(config_file)},
        )
    try:
        return Settings(_env_file=config_file, **clean)
    except PydanticValidationError as exc:
        raise ConfigurationError(
            "Invalid configuration",
            details={"errors": exc.errors(include_url=False)},
        ) from exc


def settings_from_snapshot(snapshot: dict[str, Any]) -> Settings:
    """Rebuild settings stored inside a checkpoint, ignoring the environment."""
    try:
        return Settings.model_validate(snapshot)
    except PydanticValidationError as exc:
        raise ConfigurationError(
            "Checkpoint carries an invalid settings snapshot",
            details={"errors": exc.errors(include_url=False)},
        ) from exc
