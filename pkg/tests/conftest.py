import os

import numpy as np
import pytest
import torch
from PIL import Image

from codedehaze.config.settings import Settings
from codedehaze.networks.bundle import DehazeModel

TINY = {
    "model_codebook_size": 16,
    "model_embed_dim": 8,
    "model_base_channels": 4,
    "model_trunk_dim": 8,
    "model_window_size": 2,
    "model_num_heads": 2,
    "model_block_depth": 2,
    "model_predictor_groups": 2,
    "model_critic_groups": 1,
    "model_feature_dim": 8,
    "model_disc_channels": 4,
    "train_batch_size_vqgan": 2,
    "train_batch_size_stages": 2,
    "train_log_every": 1,
    "haze_patch_size": 16,
    "log_dir": "",
}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run toy training acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: toy-scale training runs, minutes on a CPU")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith("CODEDEHAZE_"):
            monkeypatch.delenv(key)


@pytest.fixture
def tiny_settings() -> Settings:
    return Settings(_env_file=None, **TINY)


@pytest.fixture
def tiny_model(tiny_settings) -> DehazeModel:
    torch.manual_seed(0)
    return DehazeModel(tiny_settings).eval()


@pytest.fixture
def generator() -> torch.Generator:
    return torch.Generator().manual_seed(1234)


def smooth_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Low-frequency colour image in [0, 1], H x W x 3."""
    coarse = (rng.random((4, 4, 3)) * 255).astype(np.uint8)
    return np.asarray(Image.fromarray(coarse).resize((width, height), Image.BILINEAR), dtype=np.float32) / 255.0


@pytest.fixture
def clean_dir(tmp_path):
    directory = tmp_path / "clean_src"
    directory.mkdir()
    rng = np.random.default_rng(7)
    for index in range(4):
        image = smooth_image(rng, 24, 28)
        Image.fromarray((image * 255).round().astype(np.uint8)).save(directory / f"img_{index}.png")
    return directory
