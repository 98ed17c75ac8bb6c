import math

import numpy as np
import pytest
import torch

from codedehaze.exceptions.errors import ContractViolationError
from codedehaze.utils.image_io import crop_to, pad_reflect, quantize_8bit, save_image, load_image
from codedehaze.utils.metrics import PSNR_SENTINEL_DB, code_accuracy, psnr, ranking_auc, ssim


def test_psnr_examples():
    zeros = np.zeros((8, 8, 3), dtype=np.float32)
    assert psnr(zeros, zeros) == PSNR_SENTINEL_DB == 99.0
    assert psnr(zeros, np.ones_like(zeros)) == pytest.approx(0.0)
    assert psnr(zeros, np.full_like(zeros, 0.5)) == pytest.approx(10 * math.log10(4))


def test_psnr_rejects_shape_mismatch():
    with pytest.raises(ContractViolationError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_ssim_bounds():
    rng = np.random.default_rng(0)
    image = rng.random((16, 16, 3)).astype(np.float32)
    assert ssim(image, image) == pytest.approx(1.0)
    other = rng.random((16, 16, 3)).astype(np.float32)
    value = ssim(image, other)
    assert -1.0 <= value < 0.5
    assert ssim(torch.from_numpy(image).permute(2, 0, 1), torch.from_numpy(image).permute(2, 0, 1)) == pytest.approx(1.0)


def test_code_accuracy_examples():
    s_h = torch.tensor([5, 1, 2])
    assert code_accuracy(s_h.clone(), s_h) == 1.0
    assert code_accuracy(torch.tensor([0, 0, 0]), s_h) == 0.0
    assert code_accuracy(torch.tensor([5, 7, 2]), s_h) == pytest.approx(2 / 3)


def test_code_accuracy_rejects_shape_mismatch():
    with pytest.raises(ContractViolationError):
        code_accuracy(torch.zeros(2, 2), torch.zeros(4))


def test_ranking_auc():
    labels = torch.tensor([0, 0, 1, 1])
    assert ranking_auc(torch.tensor([0.1, 0.2, 0.8, 0.9]), labels) == 1.0
    assert ranking_auc(torch.tensor([0.9, 0.8, 0.2, 0.1]), labels) == 0.0
    assert ranking_auc(torch.full((4,), 0.5), labels) == 0.5
    assert ranking_auc(torch.rand(3), torch.zeros(3)) is None


def test_pad_reflect_unchanged_for_multiples():
    image = torch.rand(1, 3, 64, 64)
    padded, dims = pad_reflect(image)
    assert padded is image and dims == (64, 64)


def test_pad_reflect_crop_round_trip():
    image = torch.rand(1, 3, 63, 61)
    padded, dims = pad_reflect(image)
    assert padded.shape[-2:] == (64, 64)
    assert torch.equal(crop_to(padded, dims), image)


def test_pad_then_crop_is_identity_for_any_size():
    gen = torch.Generator().manual_seed(0)
    for _ in range(25):
        height, width = (int(v) for v in torch.randint(8, 130, (2,), generator=gen))
        image = torch.rand(1, 3, height, width, generator=gen)
        padded, dims = pad_reflect(image)
        assert padded.shape[-2] % 4 == 0 and padded.shape[-1] % 4 == 0
        assert torch.equal(crop_to(padded, dims), image)


def test_png_round_trip_is_8bit(tmp_path):
    image = np.random.default_rng(0).random((5, 7, 3)).astype(np.float32)
    save_image(tmp_path / "a" / "x.png", image)
    assert np.array_equal(load_image(tmp_path / "a" / "x.png"), quantize_8bit(image))
