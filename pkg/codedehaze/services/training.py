"""Three-stage training: VQGAN pretraining, Code-Predictor (Stage I) and
Code-Critic (Stage II).

Each ``*_step`` function performs exactly one optimisation step on a batch and
returns a ``StepMetrics``. Parameters outside a stage's trainable set have
``requires_grad`` switched off and are never handed to an optimizer, so they
stay bit-identical across steps.
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import torch
from torch import nn
from tqdm import tqdm

from codedehaze.config.settings import Settings, settings_from_snapshot
from codedehaze.exceptions.errors import CheckpointFormatError, ConfigurationError, ValidationError
from codedehaze.networks.bundle import DehazeModel, set_trainable
from codedehaze.networks.vq_codebook import code_loss, straight_through
from codedehaze.repositories.checkpoint_repository import (
    CheckpointPayload,
    CheckpointRepository,
    pack_optimizer,
    unpack_optimizer,
)
from codedehaze.repositories.manifest_repository import ManifestRepository
from codedehaze.schemas.checkpoint import CheckpointMetadata
from codedehaze.schemas.training import Stage, StepMetrics
from codedehaze.services.losses import (
    loss_adv,
    loss_bce,
    loss_ce,
    loss_l1,
    loss_perceptual,
    temperature_softmax,
)
from codedehaze.services.mask_schedule import fuse, sample_training_masks
from codedehaze.utils.error_handler import check_finite_terms, handle_io_errors
from codedehaze.utils.image_io import to_tensor
from codedehaze.utils.validation import require_choice

logger = logging.getLogger(__name__)

STAGES: tuple[Stage, ...] = ("vqgan", "predictor", "critic")
# Stage a checkpoint must come from when used as --init
INIT_SOURCE: dict[str, str] = {"predictor": "vqgan", "critic": "predictor"}

METRIC_COLUMNS: dict[str, list[str]] = {
    "vqgan": ["l1", "code", "perceptual", "adv_g", "adv_d", "total", "revived"],
    "predictor": ["l1", "perceptual", "adv_g", "adv_d", "ce", "total"],
    "critic": ["bce", "wrong_fraction"],
}

MODEL_PREFIX = "model."
RNG_NAME = "train"


@dataclass
class TrainingData:
    """Paired patches held in memory as ``(P, 3, H, W)`` tensors."""
    clean: torch.Tensor
    hazy: torch.Tensor
    names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.clean.shape[0]

    @classmethod
    def from_manifest(cls, manifest_path: str | Path) -> "TrainingData":
        repository = ManifestRepository.from_manifest_file(manifest_path)
        cleans, hazies, names = repository.load_all()
        if not names:
            raise ValidationError("Manifest holds no training pairs", field="manifest")
        shapes = {image.shape for image in cleans + hazies}
        if len(shapes) != 1:
            raise ValidationError(
                "Training pairs must share one patch size",
                field="manifest",
                details={"shapes": sorted(str(shape) for shape in shapes)},
            )
        return cls(
            clean=torch.cat([to_tensor(image) for image in cleans]),
            hazy=torch.cat([to_tensor(image) for image in hazies]),
            names=names,
        )

    def sample_batch(
        self, batch_size: int, generator: torch.Generator, flip: bool = True
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Draw a batch with replacement; both images of a pair share the flip."""
        picks = torch.randint(len(self), (batch_size,), generator=generator)
        clean, hazy = self.clean[picks], self.hazy[picks]
        if flip:
            flipped = (torch.rand(batch_size, generator=generator) < 0.5).view(-1, 1, 1, 1)
            clean = torch.where(flipped, clean.flip(-1), clean)
            hazy = torch.where(flipped, hazy.flip(-1), hazy)
        return clean, hazy


@dataclass
class TrainState:
    settings: Settings
    model: DehazeModel
    stage: Stage
    optimizers: dict[str, torch.optim.Optimizer]
    generator: torch.Generator
    step: int = 0

    @property
    def device(self) -> torch.device:
        return next(self.model.parameters()).device


def trainable_parameters(model: DehazeModel, stage: Stage) -> dict[str, list[nn.Parameter]]:
    """Optimizer name -> parameter list for a stage."""
    if stage == "vqgan":
        generator_params = (
            list(model.encoder_h.parameters())
            + model.decoder.backbone_parameters()
            + list(model.codebook.parameters())
            + list(model.feature_proj.parameters())
        )
        return {"generator": generator_params, "discriminator": list(model.discriminator.parameters())}
    if stage == "predictor":
        generator_params = (
            list(model.encoder_l.parameters())
            + list(model.predictor.parameters())
            + list(model.decoder.sft.parameters())
        )
        return {"generator": generator_params, "discriminator": list(model.discriminator.parameters())}
    if stage == "critic":
        return {"critic": list(model.critic.parameters())}
    raise ValidationError(f"Unknown training stage {stage!r}", field="stage")


def build_state(settings: Settings, stage: Stage, model: DehazeModel | None = None) -> TrainState:
    """Fresh model (seeded from ``settings.seed``), stage freezing and Adam optimizers."""
    if model is None:
        torch.manual_seed(settings.seed)
        model = DehazeModel(settings)
    model.to(settings.device)
    groups = trainable_parameters(model, stage)
    set_trainable([model], False)
    for params in groups.values():
        set_trainable([params], True)
    optimizers = {
        name: torch.optim.Adam(
            params,
            lr=settings.train_learning_rate,
            betas=(settings.train_adam_beta1, settings.train_adam_beta2),
        )
        for name, params in groups.items()
    }
    generator = torch.Generator().manual_seed(settings.seed)
    return TrainState(settings=settings, model=model, stage=stage, optimizers=optimizers, generator=generator)


def _discriminator_update(state: TrainState, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    optimizer = state.optimizers["discriminator"]
    optimizer.zero_grad(set_to_none=True)
    disc = state.model.discriminator
    d_loss = loss_adv(disc(real), disc(fake.detach()), side="discriminator")
    check_finite_terms(state.stage, state.step, {"adv_d": float(d_loss)})
    d_loss.backward()
    optimizer.step()
    return d_loss.detach()


def vqgan_step(state: TrainState, clean: torch.Tensor) -> StepMetrics:
    """L_1 + L_code + L_per + lambda_adv * L_adv on (E_H, D_H, C), then one D update."""
    model, s = state.model, state.settings
    model.train()
    clean = clean.to(state.device)

    z_h, _ = model.encoder_h(clean)
    indices, z_q = model.codebook.quantize(z_h)
    i_rec = model.decoder(straight_through(z_h, z_q))

    feat_h = model.features(clean).detach()
    l1 = loss_l1(clean, i_rec)
    l_code = code_loss(z_h, z_q, model.project_tokens(z_h), feat_h, s.train_beta_commit, s.train_lambda_g)
    l_per = loss_perceptual(feat_h, model.features(i_rec))
    adv_g = loss_adv(None, model.discriminator(i_rec), side="generator")
    total = l1 + l_code + s.train_lambda_per * l_per + s.train_lambda_adv * adv_g

    terms = {"l1": float(l1), "code": float(l_code), "perceptual": float(l_per), "adv_g": float(adv_g), "total": float(total)}
    check_finite_terms(state.stage, state.step, terms)
    optimizer = state.optimizers["generator"]
    optimizer.zero_grad(set_to_none=True)
    total.backward()
    optimizer.step()

    terms["adv_d"] = float(_discriminator_update(state, clean, i_rec))
    terms["revived"] = float(model.codebook.update_usage(indices, z_h.detach(), state.generator))
    state.step += 1
    return StepMetrics(stage="vqgan", step=state.step, terms=terms)


def _clean_targets(model: DehazeModel, clean: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(S_h, Z_c) from the frozen high-quality path."""
    with torch.no_grad():
        z_h, _ = model.encoder_h(clean)
        return model.codebook.quantize(z_h)


def predictor_step(state: TrainState, clean: torch.Tensor, hazy: torch.Tensor) -> StepMetrics:
    """Stage I: cross-entropy on fused tokens plus image losses through SFT."""
    model, s = state.model, state.settings
    model.train()
    clean, hazy = clean.to(state.device), hazy.to(state.device)

    s_h, z_c = _clean_targets(model, clean)
    z_l, skips = model.encoder_l(hazy)
    batch, m, n, _ = z_l.shape
    _, masks = sample_training_masks(batch, m * n, state.generator)
    z_t = fuse(z_l, z_c, masks.to(state.device))

    logits = model.predictor(z_t)
    l_theta = loss_ce(logits, s_h.reshape(batch, -1))

    # Soft code mixture forward-valued as the argmax code so image losses reach G_theta
    codes = model.codebook.codes.detach()
    z_soft = torch.softmax(logits, dim=-1) @ codes
    z_hard = model.codebook.lookup(logits.argmax(dim=-1))
    z_pred = straight_through(z_soft, z_hard).reshape(batch, m, n, -1)
    i_rec = model.decoder(z_pred, skips)

    feat_h = model.features(clean).detach()
    l1 = loss_l1(clean, i_rec)
    l_per = loss_perceptual(feat_h, model.features(i_rec))
    adv_g = loss_adv(None, model.discriminator(i_rec), side="generator")
    total = l1 + s.train_lambda_per * l_per + s.train_lambda_adv * adv_g + l_theta

    terms = {"l1": float(l1), "perceptual": float(l_per), "adv_g": float(adv_g), "ce": float(l_theta), "total": float(total)}
    check_finite_terms(state.stage, state.step, terms)
    optimizer = state.optimizers["generator"]
    optimizer.zero_grad(set_to_none=True)
    total.backward()
    optimizer.step()

    terms["adv_d"] = float(_discriminator_update(state, clean, i_rec))
    state.step += 1
    return StepMetrics(stage="predictor", step=state.step, terms=terms)


def critic_labels(sampled: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """1 where the sampled code differs from the clean code."""
    return (sampled != target).to(torch.float32)


def critic_step(state: TrainState, clean: torch.Tensor, hazy: torch.Tensor) -> StepMetrics:
    """Stage II: BCE of critic scores against (S != S_h) for S drawn at Temp."""
    model, s = state.model, state.settings
    model.train()
    clean, hazy = clean.to(state.device), hazy.to(state.device)

    with torch.no_grad():
        s_h, z_c = _clean_targets(model, clean)
        z_l, _ = model.encoder_l(hazy)
        batch, m, n, _ = z_l.shape
        _, masks = sample_training_masks(batch, m * n, state.generator)
        logits = model.predictor(fuse(z_l, z_c, masks.to(state.device)))
        probs = temperature_softmax(logits, s.train_critic_temperature)
        sampled = torch.multinomial(
            probs.reshape(-1, probs.shape[-1]).cpu().to(torch.float64), 1, generator=state.generator
        ).reshape(batch, m, n).to(state.device)
        target = critic_labels(sampled, s_h)

    scores = model.critic(sampled)
    l_phi = loss_bce(scores, target)
    terms = {"bce": float(l_phi), "wrong_fraction": float(target.mean())}
    check_finite_terms(state.stage, state.step, terms)
    optimizer = state.optimizers["critic"]
    optimizer.zero_grad(set_to_none=True)
    l_phi.backward()
    optimizer.step()

    state.step += 1
    return StepMetrics(stage="critic", step=state.step, terms=terms)


def train_one_step(state: TrainState, data: TrainingData, batch_size: int) -> StepMetrics:
    clean, hazy = data.sample_batch(batch_size, state.generator, flip=state.settings.train_flip)
    if state.stage == "vqgan":
        return vqgan_step(state, clean)
    if state.stage == "predictor":
        return predictor_step(state, clean, hazy)
    return critic_step(state, clean, hazy)


# Checkpoint conversion

def state_to_payload(state: TrainState) -> CheckpointPayload:
    tensors = {MODEL_PREFIX + name: value for name, value in state.model.state_dict().items()}
    optimizer_meta = {}
    for name, optimizer in state.optimizers.items():
        meta, optimizer_tensors = pack_optimizer(name, optimizer)
        optimizer_meta[name] = meta
        tensors.update(optimizer_tensors)
    tensors[f"rng.{RNG_NAME}"] = state.generator.get_state()
    metadata = CheckpointMetadata(
        stage=state.stage,
        step=state.step,
        settings=state.settings.model_dump(mode="json"),
        optimizers=optimizer_meta,
        rng={RNG_NAME: f"rng.{RNG_NAME}"},
    )
    return CheckpointPayload(metadata=metadata, tensors=tensors)


def load_model_weights(model: DehazeModel, payload: CheckpointPayload) -> None:
    weights = {
        name[len(MODEL_PREFIX):]: value
        for name, value in payload.tensors.items()
        if name.startswith(MODEL_PREFIX)
    }
    try:
        model.load_state_dict(weights, strict=True)
    except RuntimeError as exc:
        raise CheckpointFormatError(f"Checkpoint weights do not fit the model: {exc}") from exc


def architecture_settings(settings: Settings, snapshot: dict) -> Settings:
    """``settings`` with every ``model_*`` key taken from a checkpoint snapshot.

    The merged document is validated again, so a snapshot that no longer
    satisfies the settings constraints is rejected as a bad checkpoint.
    """
    merged = settings.model_dump(mode="json")
    merged.update({key: value for key, value in snapshot.items() if key.startswith("model_")})
    try:
        return settings_from_snapshot(merged)
    except ConfigurationError as exc:
        raise CheckpointFormatError("Checkpoint settings snapshot failed validation", details=exc.details) from exc


def restore_model(ckpt_path: str | Path, settings: Settings) -> tuple[DehazeModel, Settings, str]:
    """Model with checkpoint weights in eval mode, its settings and checkpoint id."""
    repository = CheckpointRepository(ckpt_path)
    payload = repository.load()
    settings = architecture_settings(settings, payload.metadata.settings)
    model = DehazeModel(settings)
    load_model_weights(model, payload)
    model.to(settings.device).eval()
    return model, settings, repository.checkpoint_id()


def initialize_from(settings: Settings, stage: Stage, init_path: str | Path) -> TrainState:
    """Start ``stage`` from the weights of the previous stage's checkpoint."""
    payload = CheckpointRepository(init_path).load()
    expected = INIT_SOURCE.get(stage)
    if payload.metadata.stage not in {expected, stage}:
        raise ValidationError(
            f"Cannot start stage {stage} from a {payload.metadata.stage} checkpoint",
            field="init",
            details={"expected": expected},
        )
    settings = architecture_settings(settings, payload.metadata.settings)
    torch.manual_seed(settings.seed)
    model = DehazeModel(settings)
    load_model_weights(model, payload)
    if stage == "predictor" and payload.metadata.stage == "vqgan":
        model.sync_low_quality_encoder()
    logger.info(f"Initialised {stage} training from {payload.metadata.stage} checkpoint {init_path}")
    return build_state(settings, stage, model)


def resume_from(settings: Settings, stage: Stage, resume_path: str | Path) -> TrainState:
    """Continue an interrupted run with its optimizer and generator state."""
    payload = CheckpointRepository(resume_path).load()
    if payload.metadata.stage != stage:
        raise ValidationError(
            f"Checkpoint stage {payload.metadata.stage} does not match --stage {stage}",
            field="resume",
        )
    settings = architecture_settings(settings, payload.metadata.settings)
    model = DehazeModel(settings)
    load_model_weights(model, payload)
    state = build_state(settings, stage, model)
    for name, optimizer in state.optimizers.items():
        if name not in payload.metadata.optimizers:
            raise CheckpointFormatError(f"Checkpoint lacks optimizer state {name!r}", path=str(resume_path))
        unpack_optimizer(name, optimizer, payload.metadata.optimizers[name], payload.tensors)
    state.generator.set_state(payload.tensors[payload.metadata.rng[RNG_NAME]].to(torch.uint8))
    state.step = payload.metadata.step
    logger.info(f"Resumed {stage} training at step {state.step} from {resume_path}")
    return state


def save_state(state: TrainState, path: str | Path) -> str:
    return CheckpointRepository(path).save(state_to_payload(state))


class MetricsWriter:
    """Appends one CSV line per step; writes the header for a new file."""

    def __init__(self, path: str | Path | None, stage: Stage):
        self.path = Path(path) if path else None
        self.columns = METRIC_COLUMNS[stage]

    @handle_io_errors
    def write(self, metrics: StepMetrics) -> None:
        if self.path is None:
            return
        is_new = not self.path.exists()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            if is_new:
                writer.writerow(["stage", "step", *self.columns])
            writer.writerow(metrics.csv_row(self.columns))


def run_training(
    settings: Settings,
    stage: Stage,
    data: TrainingData,
    out_path: str | Path,
    steps: int | None = None,
    batch_size: int | None = None,
    init_path: str | Path | None = None,
    resume_path: str | Path | None = None,
    metrics_path: str | Path | None = None,
    progress: bool = True,
    on_step: Callable[[TrainState, StepMetrics], None] | None = None,
) -> TrainState:
    """Train ``stage`` until ``steps`` total steps and save the final checkpoint.

    ``steps`` counts from the start of the stage, so a resumed run stops at the
    same step an unbroken run would.
    """
    require_choice(stage, STAGES, "stage")
    if init_path and resume_path:
        raise ValidationError("--init and --resume are mutually exclusive", field="init")
    if stage != "vqgan" and not (init_path or resume_path):
        raise ValidationError(f"Stage {stage} needs --init or --resume", field="init")

    if resume_path:
        state = resume_from(settings, stage, resume_path)
    elif init_path:
        state = initialize_from(settings, stage, init_path)
    else:
        state = build_state(settings, stage)
    s = state.settings

    total_steps = steps if steps is not None else getattr(s, f"train_steps_{stage}")
    if batch_size is None:
        batch_size = s.train_batch_size_vqgan if stage == "vqgan" else s.train_batch_size_stages
    writer = MetricsWriter(metrics_path, stage)
    logger.info(f"Training {stage} for {total_steps} steps (batch {batch_size}, {len(data)} pairs, device {s.device})")

    with tqdm(total=total_steps, initial=state.step, desc=stage, disable=not progress) as bar:
        while state.step < total_steps:
            metrics = train_one_step(state, data, batch_size)
            writer.write(metrics)
            if on_step is not None:
                on_step(state, metrics)
            if metrics.step % s.train_log_every == 0:
                summary = ", ".join(f"{name}={value:.4f}" for name, value in metrics.terms.items())
                logger.info(f"{stage} step {metrics.step}: {summary}")
            if s.train_save_every and metrics.step % s.train_save_every == 0:
                save_state(state, out_path)
            bar.update(1)

    save_state(state, out_path)
    return state
