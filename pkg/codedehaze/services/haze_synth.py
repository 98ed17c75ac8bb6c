"""Paired (clean, hazy) data from the atmospheric scattering model.

``I = J * t + A * (1 - t)`` with ``t = exp(-beta * depth)``, followed by a
gamma shift, a per-channel colour cast and additive Gaussian noise. Arrays are
float H x W x 3 in [0, 1].
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from codedehaze.config.settings import Settings
from codedehaze.exceptions.errors import ContractViolationError, DatasetError
from codedehaze.repositories.manifest_repository import ManifestRepository
from codedehaze.schemas.haze import HazeParams, Manifest, ManifestEntry
from codedehaze.utils.image_io import list_images, load_image, quantize_8bit

logger = logging.getLogger(__name__)

# Coarse noise lattice and blend weight of the vertical ramp
_DEPTH_LATTICE = 4
_RAMP_WEIGHT = 0.6


def synth_depth(height: int, width: int, seed: int) -> np.ndarray:
    """Smooth depth proxy in [0, 1]: low-frequency noise over a top-to-bottom ramp."""
    if height < 8 or width < 8:
        raise ContractViolationError(
            f"synth_depth: need H, W >= 8, got {height}x{width}",
            operation="synth_depth",
        )
    rng = np.random.default_rng(seed)
    coarse = rng.random((_DEPTH_LATTICE, _DEPTH_LATTICE)).astype(np.float32)
    noise = np.asarray(Image.fromarray(coarse).resize((width, height), Image.BICUBIC), dtype=np.float64)
    # Far at the top of the frame, near at the bottom
    ramp = np.linspace(1.0, 0.0, height)[:, None] * np.ones((1, width))
    depth = _RAMP_WEIGHT * ramp + (1.0 - _RAMP_WEIGHT) * noise
    low, high = depth.min(), depth.max()
    return ((depth - low) / (high - low)).astype(np.float32)


def transmission(params: HazeParams, depth: np.ndarray) -> np.ndarray:
    return np.exp(-params.beta_scatter * depth.astype(np.float64))


def apply_scattering(clean: np.ndarray, params: HazeParams, depth: np.ndarray | None = None) -> np.ndarray:
    """Koschmieder haze; the depth map defaults to ``synth_depth`` of the params seed."""
    _check_unit_image("apply_scattering", clean)
    airlight = np.asarray(params.airlight, dtype=np.float64)
    if airlight.shape != (3,) or np.any(airlight < 0.0) or np.any(airlight > 1.0):
        raise ContractViolationError("apply_scattering: airlight must be 3 values in [0, 1]", operation="apply_scattering")
    if depth is None:
        depth = synth_depth(clean.shape[0], clean.shape[1], params.depth_seed)
    t = transmission(params, depth)[..., None]
    hazy = clean.astype(np.float64) * t + airlight * (1.0 - t)
    return np.clip(hazy, 0.0, 1.0).astype(np.float32)


def degrade_extras(image: np.ndarray, params: HazeParams) -> np.ndarray:
    """Gamma shift, colour cast and seeded Gaussian noise, clamped to [0, 1]."""
    _check_unit_image("degrade_extras", image)
    out = np.power(image.astype(np.float64), params.gamma)
    out = out * np.asarray(params.color_cast, dtype=np.float64)
    if params.noise_sigma > 0:
        noise_rng = np.random.default_rng(params.noise_seed)
        out = out + noise_rng.normal(0.0, params.noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def synthesize(clean: np.ndarray, params: HazeParams) -> np.ndarray:
    return degrade_extras(apply_scattering(clean, params), params)


def sample_haze_params(rng: np.random.Generator, settings: Settings) -> HazeParams:
    base = rng.uniform(settings.haze_airlight_min, settings.haze_airlight_max)
    # Slightly tinted airlight, kept inside the configured range
    tint = rng.uniform(-0.03, 0.03, size=3)
    airlight = np.clip(base + tint, settings.haze_airlight_min, settings.haze_airlight_max)
    cast = 1.0 + rng.uniform(-settings.haze_cast_spread, settings.haze_cast_spread, size=3)
    return HazeParams(
        airlight=tuple(float(v) for v in airlight),
        beta_scatter=float(rng.uniform(settings.haze_beta_min, settings.haze_beta_max)),
        depth_seed=int(rng.integers(0, 2**31 - 1)),
        gamma=float(rng.uniform(settings.haze_gamma_min, settings.haze_gamma_max)),
        color_cast=tuple(float(v) for v in cast),
        noise_sigma=float(rng.uniform(0.0, settings.haze_noise_max)),
        noise_seed=int(rng.integers(0, 2**31 - 1)),
    )


def _check_unit_image(operation: str, image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[-1] != 3:
        raise ContractViolationError(f"{operation}: expected H x W x 3, got {image.shape}", operation=operation)
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ContractViolationError(f"{operation}: values must lie in [0, 1]", operation=operation)


def _crop_patch(image: np.ndarray, patch: int, rng: np.random.Generator) -> np.ndarray:
    height, width = image.shape[:2]
    if height < patch or width < patch:
        scale = patch / min(height, width)
        size = (max(patch, round(width * scale)), max(patch, round(height * scale)))
        image = np.asarray(
            Image.fromarray((image * 255.0).round().astype(np.uint8)).resize(size, Image.BICUBIC),
            dtype=np.float32,
        ) / 255.0
        height, width = image.shape[:2]
    top = int(rng.integers(0, height - patch + 1))
    left = int(rng.integers(0, width - patch + 1))
    return image[top:top + patch, left:left + patch]


class HazeDatasetBuilder:
    """Writes reproducible (clean, hazy) patch pairs plus a manifest."""

    def __init__(self, settings: Settings, repository: ManifestRepository):
        self.settings = settings
        self.repository = repository

    def _make_pair(self, index: int, sources: list[Path], seed: int) -> ManifestEntry:
        # Randomness depends only on (seed, index), never on worker scheduling
        rng = np.random.default_rng([seed, index])
        source = sources[int(rng.integers(0, len(sources)))]
        clean = quantize_8bit(_crop_patch(load_image(source), self.settings.haze_patch_size, rng))
        params = sample_haze_params(rng, self.settings)
        hazy = synthesize(clean, params)
        entry = ManifestEntry(
            clean_path=f"clean/{index:05d}.png",
            hazy_path=f"hazy/{index:05d}.png",
            params=params,
            seed=seed,
        )
        self.repository.write_pair(entry, clean, hazy)
        return entry

    def build(self, clean_dir: str | Path, count: int, seed: int) -> Manifest:
        if count < 0:
            raise ContractViolationError("make_dataset: count must be >= 0", operation="make_dataset")
        clean_path = Path(clean_dir)
        if not clean_path.is_dir():
            raise DatasetError("Clean image directory does not exist", path=str(clean_path))
        sources = list_images(clean_path)
        if not sources:
            raise DatasetError("Clean image directory holds no readable images", path=str(clean_path))

        manifest = Manifest(seed=seed, patch_size=self.settings.haze_patch_size)
        if count == 0:
            logger.info("count=0, nothing to write")
            return manifest

        self.repository.prepare()
        with ThreadPoolExecutor(max_workers=self.settings.haze_workers) as pool:
            manifest.entries = list(pool.map(lambda i: self._make_pair(i, sources, seed), range(count)))
        self.repository.save_manifest(manifest)
        logger.info(f"Wrote {count} pairs to {self.repository.root}")
        return manifest


def make_dataset(clean_dir: str | Path, count: int, seed: int, out_dir: str | Path, settings: Settings) -> Manifest:
    return HazeDatasetBuilder(settings, ManifestRepository(out_dir)).build(clean_dir, count, seed)
