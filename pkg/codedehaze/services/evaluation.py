"""Paired evaluation of a trained model over a manifest, and the T sweep."""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import torch

from codedehaze.networks.bundle import DehazeModel
from codedehaze.repositories.manifest_repository import ManifestRepository
from codedehaze.schemas.report import EvalReport, EvalRow
from codedehaze.services.inference import DecodeMode, DecodeOptions, dehaze_array
from codedehaze.utils.error_handler import handle_io_errors
from codedehaze.utils.image_io import pad_reflect, to_tensor
from codedehaze.utils.metrics import code_accuracy, psnr, ranking_auc, ssim

logger = logging.getLogger(__name__)


def image_seed(seed: int, index: int) -> int:
    """Per-image seed that depends only on (seed, index)."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@torch.no_grad()
def clean_codes(model: DehazeModel, clean: np.ndarray) -> torch.Tensor:
    """S_h: codes of the clean image's quantized latent, shape (m, n)."""
    device = next(model.parameters()).device
    padded, _ = pad_reflect(to_tensor(clean).to(device), 4)
    z_h, _ = model.encoder_h(padded)
    indices, _ = model.codebook.quantize(z_h)
    return indices[0].cpu()


def evaluate_pair(
    model: DehazeModel,
    clean: np.ndarray,
    hazy: np.ndarray,
    name: str,
    mode: DecodeMode,
    iters: int,
    options: DecodeOptions,
    seed: int,
    ssim_window: int = 8,
) -> EvalRow:
    restored, trace = dehaze_array(hazy, model, mode, iters, options, seed)
    return EvalRow(
        image=name,
        psnr_db=psnr(restored, clean),
        ssim=ssim(restored, clean, ssim_window),
        code_accuracy=code_accuracy(trace.final_codes, clean_codes(model, clean)),
        hazy_psnr_db=psnr(hazy, clean),
    )


@torch.no_grad()
def critic_auc(
    model: DehazeModel,
    cleans: list[np.ndarray],
    hazies: list[np.ndarray],
    seed: int,
    temperature: float = 1.0,
) -> float | None:
    """Ranking AUC of critic scores against wrongness of a first-pass sample.

    Codes are sampled from the predictor with every position masked; the
    positive class is a code that differs from the clean code.
    """
    device = next(model.parameters()).device
    all_scores, all_labels = [], []
    for index, (clean, hazy) in enumerate(zip(cleans, hazies)):
        generator = torch.Generator().manual_seed(image_seed(seed, index))
        padded, _ = pad_reflect(to_tensor(hazy).to(device), 4)
        z_l, _ = model.encoder_l(padded)
        _, m, n, _ = z_l.shape
        logits = model.predictor(z_l)
        probs = torch.softmax(logits / temperature, dim=-1).reshape(m * n, -1).cpu().to(torch.float64)
        sampled = torch.multinomial(probs, 1, generator=generator).reshape(1, m, n).to(device)
        scores = model.critic(sampled)[0].cpu()
        all_scores.append(scores.reshape(-1))
        all_labels.append((sampled[0].cpu() != clean_codes(model, clean)).reshape(-1))
    if not all_scores:
        return None
    return ranking_auc(torch.cat(all_scores), torch.cat(all_labels))


def summarize(report: EvalReport) -> EvalReport:
    """Fill the mean_* fields from the rows."""
    if report.rows:
        report.mean_psnr_db = float(np.mean([row.psnr_db for row in report.rows]))
        report.mean_ssim = float(np.mean([row.ssim for row in report.rows]))
        report.mean_code_accuracy = float(np.mean([row.code_accuracy for row in report.rows]))
        report.mean_hazy_psnr_db = float(np.mean([row.hazy_psnr_db for row in report.rows]))
    return report


def evaluate_pairs(
    model: DehazeModel,
    cleans: list[np.ndarray],
    hazies: list[np.ndarray],
    names: list[str],
    iters: int,
    mode: DecodeMode = "critic",
    seed: int = 0,
    options: DecodeOptions | None = None,
    checkpoint_id: str = "",
    ssim_window: int = 8,
    workers: int = 1,
    with_critic_auc: bool = False,
) -> EvalReport:
    options = options or DecodeOptions()
    model.eval()

    def run(index: int) -> EvalRow:
        return evaluate_pair(
            model, cleans[index], hazies[index], names[index], mode, iters, options, image_seed(seed, index), ssim_window
        )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(run, range(len(names))))
    report = summarize(EvalReport(iters=iters, mode=mode, seed=seed, checkpoint_id=checkpoint_id, rows=rows))
    if with_critic_auc:
        report.critic_auc = critic_auc(model, cleans, hazies, seed, options.temperature)
    logger.info(
        f"Evaluated {len(rows)} images (mode={mode}, T={iters}): "
        f"PSNR {report.mean_psnr_db:.2f} dB, SSIM {report.mean_ssim:.4f}, "
        f"code accuracy {report.mean_code_accuracy:.4f}, hazy PSNR {report.mean_hazy_psnr_db:.2f} dB"
    )
    return report


def evaluate_manifest(model: DehazeModel, manifest_path: str | Path, iters: int, **kwargs) -> EvalReport:
    cleans, hazies, names = ManifestRepository.from_manifest_file(manifest_path).load_all()
    return evaluate_pairs(model, cleans, hazies, names, iters, **kwargs)


def sweep_iterations(
    model: DehazeModel,
    manifest_path: str | Path,
    values: list[int],
    **kwargs,
) -> list[EvalReport]:
    """One report per T over the same images and seed."""
    cleans, hazies, names = ManifestRepository.from_manifest_file(manifest_path).load_all()
    reports = []
    for iters in values:
        reports.append(evaluate_pairs(model, cleans, hazies, names, iters, **kwargs))
    return reports


@handle_io_errors
def write_report_csv(reports: list[EvalReport], path: str | Path) -> Path:
    """Per-image rows of every report under the fixed header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(EvalReport.CSV_HEADER)
        for report in reports:
            for row in report.rows:
                writer.writerow([
                    row.image, report.iters, report.mode, report.seed,
                    repr(row.psnr_db), repr(row.ssim), repr(row.code_accuracy), repr(row.hazy_psnr_db),
                ])
    return path
