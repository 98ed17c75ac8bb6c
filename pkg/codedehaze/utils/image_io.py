"""
PNG input/output and reflect padding to the encoder's stride.
"""
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from einops import rearrange
from PIL import Image

from codedehaze.utils.error_handler import handle_io_errors


@handle_io_errors
def load_image(path: str | Path) -> np.ndarray:
    """Read an image as float32 H x W x 3 in [0, 1]."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8).astype(np.float32) / 255.0


@handle_io_errors
def save_image(path: str | Path, image: np.ndarray) -> None:
    """Write H x W x 3 (or H x W) floats in [0, 1] as an 8-bit PNG."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)).save(path, format="PNG")


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def quantize_8bit(image: np.ndarray) -> np.ndarray:
    """Round-trip through 8 bits, as a PNG write/read would."""
    return to_uint8(image).astype(np.float32) / 255.0


def to_tensor(image: np.ndarray) -> torch.Tensor:
    """H x W x 3 array -> 1 x 3 x H x W float tensor."""
    return rearrange(torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)), "h w c -> 1 c h w")


def to_array(image: torch.Tensor) -> np.ndarray:
    """1 x 3 x H x W (or 3 x H x W) tensor -> H x W x 3 float array."""
    if image.dim() == 4:
        image = image[0]
    return rearrange(image.detach().float().cpu(), "c h w -> h w c").numpy()


def pad_reflect(image: torch.Tensor, multiple: int = 4) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflect-pad the bottom/right edges of an NCHW image up to the next multiple.

    Returns the padded image and the original (H, W) for ``crop_to``.
    """
    height, width = image.shape[-2:]
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if pad_h == 0 and pad_w == 0:
        return image, (height, width)
    # reflect needs pad < size; replicate covers the degenerate tiny-image case
    mode = "reflect" if pad_h < height and pad_w < width else "replicate"
    return F.pad(image, (0, pad_w, 0, pad_h), mode=mode), (height, width)


def crop_to(image: torch.Tensor, dims: tuple[int, int]) -> torch.Tensor:
    height, width = dims
    return image[..., :height, :width]


def list_images(directory: str | Path) -> list[Path]:
    suffixes = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"}
    return sorted(path for path in Path(directory).iterdir() if path.suffix.lower() in suffixes)
