import csv

import numpy as np
import pytest
from PIL import Image

from codedehaze.config.settings import Settings
from codedehaze.repositories.manifest_repository import ManifestRepository
from codedehaze.schemas.report import EvalReport, EvalRow
from codedehaze.services.evaluation import (
    critic_auc,
    evaluate_manifest,
    evaluate_pairs,
    image_seed,
    summarize,
    sweep_iterations,
    write_report_csv,
)
from codedehaze.services.haze_synth import HazeDatasetBuilder, make_dataset
from codedehaze.services.training import TrainingData, run_training
from codedehaze.utils.image_io import save_image

SWEEP = [3, 4, 6, 8, 10]


@pytest.fixture
def tiny_pairs(tmp_path, clean_dir, tiny_settings):
    manifest = make_dataset(clean_dir, 3, 11, tmp_path / "pairs", tiny_settings)
    assert len(manifest.entries) == 3
    return tmp_path / "pairs" / "manifest.json"


def test_image_seed_depends_on_seed_and_index():
    assert image_seed(0, 3) == image_seed(0, 3)
    assert image_seed(0, 3) != image_seed(0, 4)
    assert image_seed(0, 3) != image_seed(1, 3)


def test_summarize_takes_row_means():
    rows = [
        EvalRow(image="a", psnr_db=20.0, ssim=0.5, code_accuracy=0.25, hazy_psnr_db=10.0),
        EvalRow(image="b", psnr_db=30.0, ssim=0.7, code_accuracy=0.75, hazy_psnr_db=14.0),
    ]
    report = summarize(EvalReport(iters=8, mode="critic", seed=0, checkpoint_id="x", rows=rows))
    assert report.mean_psnr_db == pytest.approx(25.0)
    assert report.mean_ssim == pytest.approx(0.6)
    assert report.mean_code_accuracy == pytest.approx(0.5)
    assert report.mean_hazy_psnr_db == pytest.approx(12.0)


def test_summarize_keeps_zero_means_without_rows():
    report = summarize(EvalReport(iters=1, mode="oneshot", seed=0, checkpoint_id=""))
    assert report.mean_psnr_db == 0.0 and report.mean_code_accuracy == 0.0


def test_evaluation_is_deterministic_per_seed(tiny_model, tiny_pairs):
    first = evaluate_manifest(tiny_model, tiny_pairs, 4, seed=5)
    second = evaluate_manifest(tiny_model, tiny_pairs, 4, seed=5, workers=3)
    assert [row.model_dump() for row in first.rows] == [row.model_dump() for row in second.rows]
    assert len(first.rows) == 3
    for row in first.rows:
        assert 0.0 <= row.code_accuracy <= 1.0


def test_critic_auc_is_a_probability_or_none(tiny_model, tiny_pairs):
    cleans, hazies, _ = ManifestRepository.from_manifest_file(tiny_pairs).load_all()
    value = critic_auc(tiny_model, cleans, hazies, seed=0)
    assert value is None or 0.0 <= value <= 1.0
    assert critic_auc(tiny_model, [], [], seed=0) is None


def test_sweep_shares_images_and_writes_csv(tmp_path, tiny_model, tiny_pairs):
    reports = sweep_iterations(tiny_model, tiny_pairs, [1, 2], seed=3)
    assert [report.iters for report in reports] == [1, 2]
    assert [row.image for row in reports[0].rows] == [row.image for row in reports[1].rows]

    path = write_report_csv(reports, tmp_path / "out" / "sweep.csv")
    with path.open(newline="") as handle:
        lines = list(csv.reader(handle))
    assert tuple(lines[0]) == EvalReport.CSV_HEADER
    assert len(lines) == 1 + 2 * 3
    assert {line[1] for line in lines[1:]} == {"1", "2"}


def write_sources(directory, count: int, seed: int) -> None:
    directory.mkdir(parents=True)
    rng = np.random.default_rng(seed)
    for index in range(count):
        coarse = (rng.random((6, 6, 3)) * 255).astype(np.uint8)
        image = np.asarray(Image.fromarray(coarse).resize((96, 96), Image.BILINEAR), dtype=np.float32) / 255.0
        save_image(directory / f"{index:03d}.png", image)


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    """Toy preset trained through all three stages on 240 synthetic pairs; 40 held-out pairs."""
    root = tmp_path_factory.mktemp("toy_run")
    settings = Settings(_env_file=None, log_dir="", train_log_every=500)
    write_sources(root / "train_src", 24, seed=0)
    write_sources(root / "test_src", 8, seed=1)
    HazeDatasetBuilder(settings, ManifestRepository(root / "train")).build(root / "train_src", 240, seed=0)
    HazeDatasetBuilder(settings, ManifestRepository(root / "test")).build(root / "test_src", 40, seed=1)

    data = TrainingData.from_manifest(root / "train" / "manifest.json")
    run_training(settings, "vqgan", data, root / "vqgan.ckpt", progress=False)
    run_training(settings, "predictor", data, root / "pred.ckpt", init_path=root / "vqgan.ckpt", progress=False)
    state = run_training(settings, "critic", data, root / "critic.ckpt", init_path=root / "pred.ckpt", progress=False)

    cleans, hazies, names = ManifestRepository.from_manifest_file(root / "test" / "manifest.json").load_all()
    return {
        "model": state.model.eval(),
        "manifest": root / "test" / "manifest.json",
        "pairs": (cleans, hazies, names),
    }


@pytest.mark.slow
def test_iterative_critic_beats_one_shot(toy_run):
    model, (cleans, hazies, names) = toy_run["model"], toy_run["pairs"]
    critic = evaluate_pairs(model, cleans, hazies, names, 8, mode="critic", seed=0)
    single = evaluate_pairs(model, cleans, hazies, names, 1, mode="critic", seed=0)
    oneshot = evaluate_pairs(model, cleans, hazies, names, 1, mode="oneshot", seed=0)
    assert critic.mean_code_accuracy > oneshot.mean_code_accuracy
    assert critic.mean_psnr_db >= single.mean_psnr_db - 0.1


@pytest.mark.slow
def test_critic_beats_confidence_and_ranks_mistakes(toy_run):
    model, (cleans, hazies, names) = toy_run["model"], toy_run["pairs"]
    critic = evaluate_pairs(model, cleans, hazies, names, 8, mode="critic", seed=0, with_critic_auc=True)
    confidence = evaluate_pairs(model, cleans, hazies, names, 8, mode="confidence", seed=0)
    assert critic.mean_code_accuracy >= confidence.mean_code_accuracy
    assert critic.critic_auc is not None and critic.critic_auc > 0.6


@pytest.mark.slow
def test_code_accuracy_grows_with_iterations(toy_run):
    reports = sweep_iterations(toy_run["model"], toy_run["manifest"], SWEEP, mode="critic", seed=0)
    accuracy = {report.iters: report.mean_code_accuracy for report in reports}
    upto_eight = [accuracy[t] for t in SWEEP if t <= 8]
    for before, after in zip(upto_eight, upto_eight[1:]):
        assert after >= before - 0.005
