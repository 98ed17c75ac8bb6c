from pydantic import BaseModel, Field


class HazeParams(BaseModel):
    """Scattering-model parameters for one synthetic hazy image."""
    airlight: tuple[float, float, float] = Field(..., description="Atmospheric light A per channel; sampled in [0.7, 1.0], any [0, 1] value is accepted by the operator")
    beta_scatter: float = Field(..., ge=0, description="Scattering coefficient")
    depth_seed: int = Field(..., description="Seed of the synthetic depth map")
    gamma: float = Field(1.0, gt=0, description="Power-law shift applied after scattering")
    color_cast: tuple[float, float, float] = Field((1.0, 1.0, 1.0), description="Per-channel gain")
    noise_sigma: float = Field(0.0, ge=0, description="Std of additive Gaussian noise")
    noise_seed: int = Field(0, description="Seed of the additive noise")


class ManifestEntry(BaseModel):
    clean_path: str = Field(..., description="Clean patch, relative to the manifest directory")
    hazy_path: str = Field(..., description="Hazy patch, relative to the manifest directory")
    params: HazeParams
    seed: int = Field(..., description="Seed used to draw this pair")


class Manifest(BaseModel):
    seed: int
    patch_size: int
    entries: list[ManifestEntry] = Field(default_factory=list)
