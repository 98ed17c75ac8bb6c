import zipfile

import pytest
import torch

from codedehaze.exceptions.errors import CheckpointFormatError, CheckpointNotFoundError
from codedehaze.networks.bundle import parameter_checksum
from codedehaze.repositories.checkpoint_repository import CheckpointPayload, CheckpointRepository
from codedehaze.schemas.checkpoint import CheckpointMetadata
from codedehaze.services.training import build_state, restore_model, save_state, train_one_step, TrainingData


def tiny_data() -> TrainingData:
    gen = torch.Generator().manual_seed(0)
    clean = torch.rand(4, 3, 16, 16, generator=gen)
    return TrainingData(clean=clean, hazy=(clean * 0.6 + 0.3), names=[str(i) for i in range(4)])


def test_save_load_save_is_byte_identical(tmp_path, tiny_settings):
    state = build_state(tiny_settings, "vqgan")
    train_one_step(state, tiny_data(), 2)
    first = tmp_path / "a.ckpt"
    save_state(state, first)

    payload = CheckpointRepository(first).load()
    second = tmp_path / "b.ckpt"
    CheckpointRepository(second).save(payload)
    assert first.read_bytes() == second.read_bytes()


def test_archive_layout(tmp_path, tiny_settings):
    state = build_state(tiny_settings, "vqgan")
    path = tmp_path / "x.ckpt"
    save_state(state, path)
    with zipfile.ZipFile(path) as archive:
        names = archive.namelist()
        assert names[0] == "metadata.json"
        assert names[1:] == sorted(names[1:])
        assert all(info.compress_type == zipfile.ZIP_STORED for info in archive.infolist())
    payload = CheckpointRepository(path).load()
    entries = {entry.name: entry for entry in payload.metadata.tensors}
    assert entries["model.codebook.codes"].dtype == "<f4"
    assert entries["model.codebook.codes"].shape == [16, 8]
    assert payload.metadata.stage == "vqgan"
    assert payload.metadata.format_version == 1


def test_restore_model_reproduces_weights(tmp_path, tiny_settings):
    state = build_state(tiny_settings, "vqgan")
    path = tmp_path / "m.ckpt"
    checkpoint_id = save_state(state, path)
    model, settings, restored_id = restore_model(path, tiny_settings)
    assert restored_id == checkpoint_id
    assert settings.model_codebook_size == 16
    assert parameter_checksum(model.state_dict().values()) == parameter_checksum(state.model.state_dict().values())


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointNotFoundError):
        CheckpointRepository(tmp_path / "nope.ckpt").load()


def test_corrupt_checkpoint(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a zip")
    with pytest.raises(CheckpointFormatError):
        CheckpointRepository(path).load()


def test_unknown_format_version(tmp_path):
    metadata = CheckpointMetadata(format_version=99, stage="vqgan", settings={})
    path = tmp_path / "v99.ckpt"
    CheckpointRepository(path).save(CheckpointPayload(metadata=metadata, tensors={"x": torch.zeros(2)}))
    with pytest.raises(CheckpointFormatError):
        CheckpointRepository(path).load()


def test_invalid_settings_snapshot_is_rejected(tmp_path, tiny_settings):
    path = tmp_path / "m.ckpt"
    save_state(build_state(tiny_settings, "vqgan"), path)
    payload = CheckpointRepository(path).load()
    payload.metadata.settings["model_codebook_size"] = 0
    tampered = tmp_path / "tampered.ckpt"
    CheckpointRepository(tampered).save(payload)
    with pytest.raises(CheckpointFormatError):
        restore_model(tampered, tiny_settings)
