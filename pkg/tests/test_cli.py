import csv
import json

import numpy as np
import pytest

from codedehaze.api.cli import run_cli
from codedehaze.utils.image_io import load_image, save_image

TINY_CONFIG = """\
CODEDEHAZE_MODEL_CODEBOOK_SIZE=16
CODEDEHAZE_MODEL_EMBED_DIM=8
CODEDEHAZE_MODEL_BASE_CHANNELS=4
CODEDEHAZE_MODEL_TRUNK_DIM=8
CODEDEHAZE_MODEL_WINDOW_SIZE=2
CODEDEHAZE_MODEL_NUM_HEADS=2
CODEDEHAZE_MODEL_BLOCK_DEPTH=1
CODEDEHAZE_MODEL_PREDICTOR_GROUPS=1
CODEDEHAZE_MODEL_CRITIC_GROUPS=1
CODEDEHAZE_MODEL_FEATURE_DIM=8
CODEDEHAZE_MODEL_DISC_CHANNELS=4
CODEDEHAZE_TRAIN_BATCH_SIZE_VQGAN=2
CODEDEHAZE_TRAIN_BATCH_SIZE_STAGES=2
CODEDEHAZE_HAZE_PATCH_SIZE=16
CODEDEHAZE_LOG_DIR=
"""


def last_json(capsys) -> dict:
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Synthesize a dataset and train all three stages for a couple of steps."""
    root = tmp_path_factory.mktemp("pipeline")
    config = root / "tiny.env"
    config.write_text(TINY_CONFIG)
    clean_dir = root / "clean_src"
    clean_dir.mkdir()
    rng = np.random.default_rng(3)
    for index in range(3):
        save_image(clean_dir / f"{index}.png", rng.random((20, 24, 3)))

    base = ["--config", str(config)]
    data = root / "data"
    assert run_cli(base + ["synth", "--clean-dir", str(clean_dir), "--count", "4", "--out-dir", str(data)]) == 0
    manifest = data / "manifest.json"
    assert run_cli(base + ["train", "--stage", "vqgan", "--manifest", str(manifest), "--out", str(root / "vqgan.ckpt"), "--steps", "2"]) == 0
    assert run_cli(base + [
        "train", "--stage", "predictor", "--manifest", str(manifest), "--out", str(root / "pred.ckpt"),
        "--steps", "2", "--init", str(root / "vqgan.ckpt"),
    ]) == 0
    assert run_cli(base + [
        "train", "--stage", "critic", "--manifest", str(manifest), "--out", str(root / "critic.ckpt"),
        "--steps", "2", "--init", str(root / "pred.ckpt"), "--metrics", str(root / "critic.csv"),
    ]) == 0
    return {"root": root, "base": base, "manifest": manifest, "ckpt": root / "critic.ckpt", "data": data}


def test_unknown_flag_is_a_usage_error():
    assert run_cli(["dehaze", "--bogus"]) == 1


def test_missing_subcommand_is_a_usage_error():
    assert run_cli([]) == 1


def test_invalid_config_value_is_a_usage_error(tmp_path):
    bad = tmp_path / "bad.env"
    bad.write_text("CODEDEHAZE_MODEL_CODEBOOK_SIZE=1\n")
    assert run_cli(["--config", str(bad), "--log-dir", "", "synth", "--clean-dir", ".", "--count", "0", "--out-dir", "x"]) == 1


def test_missing_checkpoint_is_a_runtime_error(tmp_path, capsys):
    image = tmp_path / "in.png"
    save_image(image, np.zeros((8, 8, 3)))
    code = run_cli(["--log-dir", "", "dehaze", "--input", str(image), "--ckpt", str(tmp_path / "none.ckpt"), "--output", str(tmp_path / "out.png")])
    assert code == 2
    assert "checkpoint not found" in capsys.readouterr().err


def test_training_writes_metrics(pipeline):
    lines = (pipeline["root"] / "critic.csv").read_text().strip().splitlines()
    assert lines[0] == "stage,step,bce,wrong_fraction"
    assert len(lines) == 3


def test_oneshot_equals_single_argmax_iteration(pipeline, capsys):
    root, base = pipeline["root"], pipeline["base"]
    hazy = pipeline["data"] / "hazy" / "00000.png"
    common = base + ["dehaze", "--input", str(hazy), "--ckpt", str(pipeline["ckpt"])]
    assert run_cli(common + ["--output", str(root / "oneshot.png"), "--mode", "oneshot"]) == 0
    assert run_cli(common + ["--output", str(root / "critic1.png"), "--mode", "critic", "--iters", "1", "--sample", "argmax"]) == 0
    assert (root / "oneshot.png").read_bytes() == (root / "critic1.png").read_bytes()


def test_dehaze_is_deterministic_and_traces(pipeline, capsys):
    root, base = pipeline["root"], pipeline["base"]
    hazy = pipeline["data"] / "hazy" / "00001.png"
    args = ["dehaze", "--input", str(hazy), "--ckpt", str(pipeline["ckpt"]), "--iters", "4"]
    assert run_cli(base + ["--seed", "7"] + args + ["--output", str(root / "a.png"), "--trace", str(root / "trace")]) == 0
    summary = last_json(capsys)
    assert summary["mask_counts"][-1] == 0 and len(summary["mask_counts"]) == 4
    assert run_cli(base + ["--seed", "7"] + args + ["--output", str(root / "b.png")]) == 0
    assert (root / "a.png").read_bytes() == (root / "b.png").read_bytes()
    assert load_image(root / "a.png").shape == (16, 16, 3)
    assert (root / "trace" / "trace.json").is_file()
    assert (root / "trace" / "iter_04.png").is_file()


def test_eval_report(pipeline, capsys):
    root, base = pipeline["root"], pipeline["base"]
    report = root / "eval.csv"
    assert run_cli(base + [
        "eval", "--manifest", str(pipeline["manifest"]), "--ckpt", str(pipeline["ckpt"]),
        "--iters", "3", "--report", str(report), "--critic-auc",
    ]) == 0
    summary = last_json(capsys)
    assert summary["iters"] == 3 and summary["mode"] == "critic"
    assert 0.0 <= summary["mean_code_accuracy"] <= 1.0
    with report.open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["image", "iters", "mode", "seed", "psnr_db", "ssim", "code_accuracy", "hazy_psnr_db"]
    assert len(rows) == 5
    mean = sum(float(row[4]) for row in rows[1:]) / 4
    assert summary["mean_psnr_db"] == pytest.approx(mean, abs=1e-9)


def test_sweep_emits_one_report_per_value(pipeline, capsys):
    root, base = pipeline["root"], pipeline["base"]
    assert run_cli(base + [
        "sweep-T", "--manifest", str(pipeline["manifest"]), "--ckpt", str(pipeline["ckpt"]),
        "--values", "3,4,6", "--report", str(root / "sweep.csv"),
    ]) == 0
    summary = last_json(capsys)
    assert [report["iters"] for report in summary["reports"]] == [3, 4, 6]
    assert len({report["seed"] for report in summary["reports"]}) == 1


def test_sweep_rejects_bad_values(pipeline):
    assert run_cli(pipeline["base"] + ["sweep-T", "--manifest", str(pipeline["manifest"]), "--ckpt", str(pipeline["ckpt"]), "--values", "3,x"]) == 1


def test_subcommand_seed_overrides_global(tmp_path, capsys):
    clean_dir = tmp_path / "clean"
    clean_dir.mkdir()
    save_image(clean_dir / "a.png", np.random.default_rng(0).random((20, 20, 3)))
    args = ["--log-dir", "", "--seed", "1", "synth", "--clean-dir", str(clean_dir), "--count", "1", "--patch-size", "16"]
    assert run_cli(args + ["--out-dir", str(tmp_path / "x"), "--seed", "5"]) == 0
    assert last_json(capsys)["seed"] == 5
    assert run_cli(args + ["--out-dir", str(tmp_path / "y")]) == 0
    assert last_json(capsys)["seed"] == 1
