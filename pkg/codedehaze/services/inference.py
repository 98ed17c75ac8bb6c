"""Iterative Predictor-Critic decoding and its ablation baselines.

All decoders share one loop: start with every position masked, fuse the
low-quality tokens with the codes kept so far, predict codes, then score them
and re-mask the ``ceil(gamma(t / T) * N)`` least trustworthy positions. They
differ only in how codes are produced and how positions are scored.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal

import numpy as np
import torch

from codedehaze.config.settings import Settings
from codedehaze.exceptions.errors import ContractViolationError
from codedehaze.networks.bundle import DehazeModel
from codedehaze.networks.vq_codebook import squared_distances
from codedehaze.schemas.trace import DecodeStepRecord, DecodeTraceRecord
from codedehaze.services.losses import temperature_softmax
from codedehaze.services.mask_schedule import fuse, mask_count, select_mask_by_critic
from codedehaze.utils.error_handler import handle_io_errors
from codedehaze.utils.image_io import crop_to, pad_reflect, save_image, to_array
from codedehaze.utils.validation import require_spatial_multiple

logger = logging.getLogger(__name__)

DecodeMode = Literal["critic", "confidence", "nn", "oneshot"]
DECODE_MODES: tuple[str, ...] = ("critic", "confidence", "nn", "oneshot")

# Scorer: (codes (1, N), logits (1, N, K), grid dims) -> rejection scores (1, N)
Scorer = Callable[[torch.Tensor, torch.Tensor, tuple[int, int]], torch.Tensor]


@dataclass
class DecodeOptions:
    sample: Literal["multinomial", "argmax"] = "multinomial"
    selection: Literal["topk", "stochastic"] = "topk"
    temperature: float = 1.0
    freeze_retained: bool = False
    nested_masks: bool = False
    trace_images: bool = False

    @classmethod
    def from_settings(cls, settings: Settings, **overrides) -> "DecodeOptions":
        values = {
            "sample": settings.decode_sample,
            "selection": settings.decode_selection,
            "temperature": settings.decode_sample_temperature,
            "freeze_retained": settings.decode_freeze_retained,
            "nested_masks": settings.decode_nested_masks,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


@dataclass
class DecodeStep:
    t: int
    codes: torch.Tensor
    mask: torch.Tensor
    mask_count: int
    distances: torch.Tensor | None = None
    image: torch.Tensor | None = None


@dataclass
class DecodeTrace:
    mode: str
    iters: int
    seed: int | None = None
    steps: list[DecodeStep] = field(default_factory=list)

    @property
    def mask_counts(self) -> list[int]:
        return [step.mask_count for step in self.steps]

    @property
    def final_codes(self) -> torch.Tensor:
        return self.steps[-1].codes

    def to_record(self, frames: bool = False) -> DecodeTraceRecord:
        steps = [
            DecodeStepRecord(
                t=step.t,
                codes=step.codes.tolist(),
                mask=step.mask.to(torch.int64).tolist(),
                mask_count=step.mask_count,
                distances=step.distances.tolist() if step.distances is not None else None,
                frame=f"iter_{step.t:02}.png" if frames and step.image is not None else None,
            )
            for step in self.steps
        ]
        return DecodeTraceRecord(mode=self.mode, iters=self.iters, seed=self.seed, steps=steps)

    @handle_io_errors
    def save(self, directory: str | Path) -> Path:
        """Write ``trace.json``, mask frames and any decoded frames."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for step in self.steps:
            # white = retained, black = re-predicted next
            save_image(directory / f"mask_{step.t:02}.png", (~step.mask).to(torch.float32).numpy())
            if step.image is not None:
                save_image(directory / f"iter_{step.t:02}.png", to_array(step.image))
        path = directory / "trace.json"
        record = self.to_record(frames=True).model_dump(mode="json")
        path.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
        return path


def critic_scorer(model: DehazeModel) -> Scorer:
    def score(codes: torch.Tensor, logits: torch.Tensor, dims: tuple[int, int]) -> torch.Tensor:
        return model.critic(codes.reshape(1, *dims)).reshape(1, -1)
    return score


def confidence_scorer(codes: torch.Tensor, logits: torch.Tensor, dims: tuple[int, int]) -> torch.Tensor:
    """1 - max softmax probability, so the least confident positions get re-masked."""
    return 1.0 - torch.softmax(logits, dim=-1).max(dim=-1).values


def _prepare(image: torch.Tensor, iters: int, operation: str) -> torch.Tensor:
    if iters < 1:
        raise ContractViolationError(f"{operation}: T must be >= 1, got {iters}", operation=operation)
    if image.dim() == 3:
        image = image.unsqueeze(0)
    if image.dim() != 4 or image.shape[0] != 1 or image.shape[1] != 3:
        raise ContractViolationError(
            f"{operation}: expected one 3-channel image, got {tuple(image.shape)}",
            operation=operation,
        )
    require_spatial_multiple(operation, image, 4)
    return image


def _sample_codes(
    logits: torch.Tensor, options: DecodeOptions, generator: torch.Generator | None
) -> torch.Tensor:
    if options.sample == "argmax":
        return logits.argmax(dim=-1)
    probs = temperature_softmax(logits, options.temperature)
    flat = probs.reshape(-1, probs.shape[-1]).detach().cpu().to(torch.float64)
    return torch.multinomial(flat, 1, generator=generator).reshape(logits.shape[:-1]).to(logits.device)


def _next_mask(
    scores: torch.Tensor,
    k: int,
    current: torch.Tensor,
    options: DecodeOptions,
    generator: torch.Generator | None,
) -> torch.Tensor:
    if options.selection == "stochastic":
        scores = scores.clamp_min(1e-12)
    if options.nested_masks:
        # Retained positions can never be re-masked
        floor = -1.0 if options.selection == "topk" else 0.0
        scores = scores.masked_fill(~current, floor)
    return select_mask_by_critic(scores, k, options.selection, generator)


@torch.no_grad()
def _predictive_decode(
    image: torch.Tensor,
    model: DehazeModel,
    iters: int,
    scorer: Scorer,
    options: DecodeOptions,
    generator: torch.Generator | None,
    mode: str,
    seed: int | None = None,
) -> tuple[torch.Tensor, DecodeTrace]:
    image = _prepare(image, iters, f"{mode}_decode")
    z_l, skips = model.encoder_l(image)
    _, m, n, d = z_l.shape
    n_tokens = m * n

    mask = torch.ones(1, n_tokens, dtype=torch.bool, device=z_l.device)
    z_c = torch.zeros_like(z_l)
    codes: torch.Tensor | None = None
    trace = DecodeTrace(mode=mode, iters=iters, seed=seed)

    for t in range(1, iters + 1):
        logits = model.predictor(fuse(z_l, z_c, mask))
        sampled = _sample_codes(logits, options, generator)
        if options.freeze_retained and codes is not None:
            sampled = torch.where(mask, sampled, codes)
        codes = sampled
        z_c = model.codebook.lookup(codes).reshape(1, m, n, d)

        k = mask_count(t / iters, n_tokens)
        scores = scorer(codes, logits, (m, n))
        mask = _next_mask(scores, k, mask, options, generator)
        trace.steps.append(
            DecodeStep(
                t=t,
                codes=codes.reshape(m, n).cpu(),
                mask=mask.reshape(m, n).cpu(),
                mask_count=int(mask.sum()),
                image=model.decoder(z_c, skips).cpu() if options.trace_images else None,
            )
        )

    return model.decoder(z_c, skips), trace


def iterative_decode(
    image: torch.Tensor,
    model: DehazeModel,
    iters: int = 8,
    generator: torch.Generator | None = None,
    options: DecodeOptions | None = None,
    seed: int | None = None,
) -> tuple[torch.Tensor, DecodeTrace]:
    """Predictor-Critic decoding: the critic decides which codes to re-predict."""
    return _predictive_decode(
        image, model, iters, critic_scorer(model), options or DecodeOptions(), generator, "critic", seed
    )


def confidence_decode(
    image: torch.Tensor,
    model: DehazeModel,
    iters: int = 8,
    generator: torch.Generator | None = None,
    options: DecodeOptions | None = None,
    seed: int | None = None,
) -> tuple[torch.Tensor, DecodeTrace]:
    """Same loop with predictor confidence in place of the critic."""
    return _predictive_decode(
        image, model, iters, confidence_scorer, options or DecodeOptions(), generator, "confidence", seed
    )


def one_shot_decode(image: torch.Tensor, model: DehazeModel) -> tuple[torch.Tensor, DecodeTrace]:
    """A single argmax prediction with every position masked. Uses no randomness."""
    return _predictive_decode(
        image, model, 1, critic_scorer(model), DecodeOptions(sample="argmax"), None, "oneshot"
    )


@torch.no_grad()
def nn_matching_decode(
    image: torch.Tensor,
    model: DehazeModel,
    iters: int = 8,
    trace_images: bool = False,
) -> tuple[torch.Tensor, DecodeTrace]:
    """Nearest-neighbour matching in place of the predictor.

    Positions furthest from their code are re-masked. Retained positions hold
    exact code rows, so every iteration selects the same codes again.
    """
    image = _prepare(image, iters, "nn_decode")
    z_l, skips = model.encoder_l(image)
    _, m, n, d = z_l.shape
    n_tokens = m * n

    mask = torch.ones(1, n_tokens, dtype=torch.bool, device=z_l.device)
    z_c = torch.zeros_like(z_l)
    trace = DecodeTrace(mode="nn", iters=iters)

    for t in range(1, iters + 1):
        z_t = fuse(z_l, z_c, mask)
        distances = squared_distances(z_t, model.codebook.codes).reshape(1, n_tokens, -1)
        codes = distances.argmin(dim=-1)
        nearest = distances.gather(-1, codes.unsqueeze(-1)).squeeze(-1).sqrt()
        z_c = model.codebook.lookup(codes).reshape(1, m, n, d)

        k = mask_count(t / iters, n_tokens)
        mask = select_mask_by_critic(nearest, k, "topk")
        trace.steps.append(
            DecodeStep(
                t=t,
                codes=codes.reshape(m, n).cpu(),
                mask=mask.reshape(m, n).cpu(),
                mask_count=int(mask.sum()),
                distances=nearest.reshape(m, n).cpu(),
                image=model.decoder(z_c, skips).cpu() if trace_images else None,
            )
        )

    return model.decoder(z_c, skips), trace


def decode(
    image: torch.Tensor,
    model: DehazeModel,
    mode: DecodeMode,
    iters: int,
    options: DecodeOptions | None = None,
    seed: int = 0,
) -> tuple[torch.Tensor, DecodeTrace]:
    """Dispatch on ``mode`` with a fresh generator seeded from ``seed``."""
    options = options or DecodeOptions()
    generator = torch.Generator().manual_seed(seed)
    if mode == "critic":
        return iterative_decode(image, model, iters, generator, options, seed)
    if mode == "confidence":
        return confidence_decode(image, model, iters, generator, options, seed)
    if mode == "nn":
        return nn_matching_decode(image, model, iters, options.trace_images)
    if mode == "oneshot":
        return one_shot_decode(image, model)
    raise ContractViolationError(f"Unknown decode mode {mode!r}", operation="decode")


def dehaze_array(
    image: np.ndarray,
    model: DehazeModel,
    mode: DecodeMode,
    iters: int,
    options: DecodeOptions | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, DecodeTrace]:
    """H x W x 3 array in, restored array out; pads to the encoder stride and crops back."""
    device = next(model.parameters()).device
    tensor = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1).unsqueeze(0)
    padded, dims = pad_reflect(tensor.to(device), 4)
    restored, trace = decode(padded, model, mode, iters, options, seed)
    for step in trace.steps:
        if step.image is not None:
            step.image = crop_to(step.image, dims)
    return to_array(crop_to(restored, dims)), trace
