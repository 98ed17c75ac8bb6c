import pytest

from codedehaze.config.settings import Settings, load_settings, settings_from_snapshot
from codedehaze.exceptions.errors import ConfigurationError


def test_toy_preset_defaults():
    settings = load_settings()
    assert settings.model_codebook_size == 128
    assert settings.model_embed_dim == 32
    assert settings.train_learning_rate == 1e-4
    assert settings.train_beta_commit == 0.25
    assert settings.train_critic_temperature == 2.0
    assert settings.decode_iters == 8


def test_full_preset_and_override():
    settings = load_settings(model_preset="full", model_window_size=4)
    assert settings.model_codebook_size == 1024
    assert settings.model_embed_dim == 256
    assert settings.model_window_size == 4


def test_config_file_then_env_then_overrides(tmp_path, monkeypatch):
    config = tmp_path / "run.env"
    config.write_text("CODEDEHAZE_SEED=5\nCODEDEHAZE_DECODE_ITERS=4\nCODEDEHAZE_TRAIN_LAMBDA_ADV=0\n")
    monkeypatch.setenv("CODEDEHAZE_DECODE_ITERS", "6")
    settings = load_settings(config, seed=9)
    assert settings.train_lambda_adv == 0.0
    assert settings.decode_iters == 6
    assert settings.seed == 9


def test_none_overrides_are_ignored():
    assert load_settings(seed=None).seed == 0


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_settings(tmp_path / "missing.env")


@pytest.mark.parametrize(
    "overrides",
    [
        {"train_learning_rate": 0},
        {"model_codebook_size": 1},
        {"haze_beta_min": 3.0, "haze_beta_max": 1.0},
        {"model_trunk_dim": 30, "model_num_heads": 4},
        {"haze_patch_size": 30},
    ],
)
def test_invalid_values(overrides):
    with pytest.raises(ConfigurationError):
        load_settings(**overrides)


def test_snapshot_round_trip(tiny_settings):
    restored = settings_from_snapshot(tiny_settings.model_dump(mode="json"))
    assert restored == tiny_settings
    assert isinstance(restored, Settings)
