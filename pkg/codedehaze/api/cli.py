"""
Command-line surface: ``python -m codedehaze <command>``.

Every command prints a JSON summary on stdout; human-readable progress goes
through logging.
"""
import argparse
import json
import logging
from pathlib import Path
from typing import Any, Callable

from codedehaze.config.logging import configure_logging
from codedehaze.config.settings import Settings, load_settings
from codedehaze.middleware.error_handler import EXIT_OK, EXIT_USAGE, run_guarded
from codedehaze.services.evaluation import evaluate_manifest, sweep_iterations, write_report_csv
from codedehaze.services.haze_synth import make_dataset
from codedehaze.services.inference import DECODE_MODES, DecodeOptions, dehaze_array
from codedehaze.services.training import STAGES, TrainingData, restore_model, run_training
from codedehaze.utils.image_io import load_image, save_image
from codedehaze.utils.validation import parse_int_list

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace, Settings], dict[str, Any]]


def _emit(payload: dict[str, Any]) -> None:
    print(json.dumps(payload, sort_keys=True))


def _add_decode_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=DECODE_MODES, default="critic")
    parser.add_argument("--sample", choices=("multinomial", "argmax"), default=None)
    parser.add_argument("--selection", choices=("topk", "stochastic"), default=None)
    parser.add_argument("--temperature", type=float, default=None, help="Sampling temperature at inference")
    parser.add_argument("--freeze-retained", action="store_true", default=None)
    parser.add_argument("--nested-masks", action="store_true", default=None)


def _decode_options(args: argparse.Namespace, settings: Settings, trace_images: bool = False) -> DecodeOptions:
    return DecodeOptions.from_settings(
        settings,
        sample=args.sample,
        selection=args.selection,
        temperature=args.temperature,
        freeze_retained=args.freeze_retained,
        nested_masks=args.nested_masks,
        trace_images=trace_images,
    )


def cmd_synth(args: argparse.Namespace, settings: Settings) -> dict[str, Any]:
    manifest = make_dataset(args.clean_dir, args.count, settings.seed, args.out_dir, settings)
    return {"command": "synth", "count": len(manifest.entries), "out_dir": str(args.out_dir), "seed": manifest.seed}


def cmd_train(args: argparse.Namespace, settings: Settings) -> dict[str, Any]:
    data = TrainingData.from_manifest(args.manifest)
    state = run_training(
        settings,
        args.stage,
        data,
        args.out,
        steps=args.steps,
        batch_size=args.batch_size,
        init_path=args.init,
        resume_path=args.resume,
        metrics_path=args.metrics,
    )
    return {"command": "train", "stage": state.stage, "step": state.step, "checkpoint": str(args.out)}


def cmd_dehaze(args: argparse.Namespace, settings: Settings) -> dict[str, Any]:
    model, settings, checkpoint_id = restore_model(args.ckpt, settings)
    options = _decode_options(args, settings, trace_images=args.trace is not None)
    iters = args.iters or settings.decode_iters
    restored, trace = dehaze_array(load_image(args.input), model, args.mode, iters, options, settings.seed)
    save_image(args.output, restored)
    summary = {
        "command": "dehaze",
        "output": str(args.output),
        "mode": args.mode,
        "iters": trace.iters,
        "seed": settings.seed,
        "checkpoint_id": checkpoint_id,
        "mask_counts": trace.mask_counts,
    }
    if args.trace is not None:
        summary["trace"] = str(trace.save(args.trace))
    return summary


def cmd_eval(args: argparse.Namespace, settings: Settings) -> dict[str, Any]:
    model, settings, checkpoint_id = restore_model(args.ckpt, settings)
    report = evaluate_manifest(
        model,
        args.manifest,
        args.iters or settings.decode_iters,
        mode=args.mode,
        seed=settings.seed,
        options=_decode_options(args, settings),
        checkpoint_id=checkpoint_id,
        ssim_window=settings.eval_ssim_window,
        workers=settings.eval_workers,
        with_critic_auc=args.critic_auc,
    )
    if args.report:
        write_report_csv([report], args.report)
    return {"command": "eval", **report.model_dump(mode="json", exclude={"rows"})}


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> dict[str, Any]:
    values = parse_int_list(args.values, "values")
    model, settings, checkpoint_id = restore_model(args.ckpt, settings)
    reports = sweep_iterations(
        model,
        args.manifest,
        values,
        mode=args.mode,
        seed=settings.seed,
        options=_decode_options(args, settings),
        checkpoint_id=checkpoint_id,
        ssim_window=settings.eval_ssim_window,
        workers=settings.eval_workers,
    )
    if args.report:
        write_report_csv(reports, args.report)
    return {
        "command": "sweep-T",
        "reports": [report.model_dump(mode="json", exclude={"rows"}) for report in reports],
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="codedehaze", description="Iterative code-prediction dehazing")
    parser.add_argument("--config", type=Path, default=None, help="Flat CODEDEHAZE_KEY=value settings file")
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--log-dir", default=None, help="Directory for the log file; empty string disables it")
    parser.add_argument("--preset", choices=("toy", "full"), default=None)
    parser.add_argument("--device", default=None)
    parser.add_argument("--seed", type=int, default=None)
    commands = parser.add_subparsers(dest="command", required=True)
    # Subcommands also accept --seed; SUPPRESS keeps the global value when omitted
    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, default=argparse.SUPPRESS)

    synth = commands.add_parser("synth", parents=[seeded], help="Synthesize a paired hazy dataset")
    synth.add_argument("--clean-dir", type=Path, required=True)
    synth.add_argument("--count", type=int, required=True)
    synth.add_argument("--out-dir", type=Path, required=True)
    synth.add_argument("--patch-size", type=int, default=None)
    synth.set_defaults(handler=cmd_synth)

    train = commands.add_parser("train", parents=[seeded], help="Train one stage")
    train.add_argument("--stage", choices=STAGES, required=True)
    train.add_argument("--manifest", type=Path, required=True)
    train.add_argument("--out", type=Path, required=True)
    train.add_argument("--init", type=Path, default=None, help="Checkpoint of the previous stage")
    train.add_argument("--resume", type=Path, default=None, help="Checkpoint of this stage to continue")
    train.add_argument("--steps", type=int, default=None)
    train.add_argument("--batch-size", type=int, default=None)
    train.add_argument("--metrics", type=Path, default=None, help="CSV file for per-step loss terms")
    train.set_defaults(handler=cmd_train)

    dehaze = commands.add_parser("dehaze", parents=[seeded], help="Restore one image")
    dehaze.add_argument("--input", type=Path, required=True)
    dehaze.add_argument("--ckpt", type=Path, required=True)
    dehaze.add_argument("--output", type=Path, required=True)
    dehaze.add_argument("--iters", type=int, default=None)
    dehaze.add_argument("--trace", type=Path, default=None, help="Directory for trace.json and frames")
    _add_decode_flags(dehaze)
    dehaze.set_defaults(handler=cmd_dehaze)

    evaluate = commands.add_parser("eval", parents=[seeded], help="Evaluate on a manifest")
    evaluate.add_argument("--manifest", type=Path, required=True)
    evaluate.add_argument("--ckpt", type=Path, required=True)
    evaluate.add_argument("--iters", type=int, default=None)
    evaluate.add_argument("--report", type=Path, default=None)
    evaluate.add_argument("--critic-auc", action="store_true")
    _add_decode_flags(evaluate)
    evaluate.set_defaults(handler=cmd_eval)

    sweep = commands.add_parser("sweep-T", parents=[seeded], help="Evaluate over several iteration counts")
    sweep.add_argument("--manifest", type=Path, required=True)
    sweep.add_argument("--ckpt", type=Path, required=True)
    sweep.add_argument("--values", default="3,4,6,8,10")
    sweep.add_argument("--report", type=Path, default=None)
    _add_decode_flags(sweep)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    def body() -> int:
        settings = load_settings(
            args.config,
            log_level=args.log_level,
            log_dir=args.log_dir,
            model_preset=args.preset,
            device=args.device,
            seed=args.seed,
            haze_patch_size=getattr(args, "patch_size", None),
        )
        configure_logging(settings.log_level, settings.log_dir or None)
        _emit(args.handler(args, settings))
        return EXIT_OK

    return run_guarded(args.command, body)
