#!/usr/bin/env python3
"""
Command-line entry point for the grid-dropout ordinal toolkit.

Usage:
    python cli.py synth --out DIR
    python cli.py augment --data DIR --out DIR [--limit N]
    python cli.py train --data DIR --out DIR [--mode MODE] [--override K=V ...]
    python cli.py eval --checkpoint FILE --data DIR
    python cli.py cam --checkpoint FILE --image FILE --out DIR [--class C] [--relu]
    python cli.py gradcheck
    python cli.py multiplicity [--s S] [--p P]      # P may be a fraction, e.g. 2/9
    python cli.py ablation --data DIR --out DIR [--seeds 0,1,2,3,4] [--fold I]

Every subcommand accepts --config PATH, --override KEY=VALUE (repeatable),
--seed N and --mode MODE. --out falls back to $OUTPUT_DIR.

Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from functools import partial
from pathlib import Path

from config import RunConfig
from core.constants import (
    EXIT_CHECK_FAILED,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_USAGE,
    GRADCHECK_PROBES,
    GRADCHECK_TOLERANCE,
    IMAGES_DIR,
)
from core.enums import ABLATION_MODES, TrainMode
from core.errors import ConfigError, LabelRangeError, NumericalAbortError, PgmFormatError, ShapeError
from core.validate import check_masked_sample, validate_samples
from data.augment import augment_sample, multiplicity, sample_stream
from data.dataset import class_counts, read_dataset, read_manifest, write_dataset
from data.pgm import load_pgm, save_pgm
from data.synth import generate
from ml.ablation import run_ablation
from ml.cam import compute_cam
from ml.checkpoint import load_model
from ml.gradcheck import run_suite
from ml.train import evaluate, run_training

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Missing or inconsistent command-line input."""


def _ratio(raw: str) -> float:
    try:
        return float(Fraction(raw))
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"invalid ratio {raw!r}") from e


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Run config JSON")
    common.add_argument("--out", type=Path, default=None, help="Output directory (default: $OUTPUT_DIR)")
    common.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="K=V",
        help="Config override, e.g. base_lr=0.002 or train.epochs=10 (repeatable)",
    )
    common.add_argument("--mode", choices=[m.value for m in TrainMode], default=None)
    common.add_argument("--seed", type=int, default=None)

    parser = argparse.ArgumentParser(description="Grid-dropout ordinal classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="Write a synthetic disk-radius dataset")

    p = sub.add_parser("augment", parents=[common], help="Write grid-masked previews with their masking labels")
    p.add_argument("--data", type=Path, default=None, help="Dataset directory (default: synthesize from config)")
    p.add_argument("--limit", type=int, default=None, help="Augment only the first N samples")

    p = sub.add_parser("train", parents=[common], help="k-fold training in the selected mode")
    p.add_argument("--data", type=Path, required=True, help="Dataset directory")
    p.add_argument("--fold", type=int, action="append", default=None, help="Train only this fold (repeatable)")
    p.add_argument("--stream", action="store_true", help="Echo per-step JSON loss records")

    p = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("cam", parents=[common], help="Export a gradient-weighted class activation map")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True, help="Input PGM image")
    p.add_argument("--class", dest="class_index", type=int, default=None, help="Class (default: predicted)")
    p.add_argument("--relu", action="store_true", help="Render the post-ReLU map")

    p = sub.add_parser("gradcheck", parents=[common], help="Finite-difference check of every op")
    p.add_argument("--probes", type=int, default=GRADCHECK_PROBES)

    p = sub.add_parser("multiplicity", parents=[common], help="Number of distinct masks C(s*s, k)")
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--p", type=_ratio, default=None, help="Drop ratio, decimal or fraction (2/9)")

    p = sub.add_parser("ablation", parents=[common], help="Train every mode over matched folds and seeds")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--seeds", type=str, default="0,1,2,3,4", help="Comma-separated seeds")
    p.add_argument("--fold", type=int, action="append", default=None, help="Train only this fold (repeatable)")
    p.add_argument(
        "--modes",
        type=str,
        default=",".join(m.value for m in ABLATION_MODES),
        help="Comma-separated modes (table rows)",
    )
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides = list(args.override)
    if args.mode is not None:
        overrides.append(f"train.mode={args.mode}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return config.with_overrides(overrides) if overrides else config


def output_dir(args: argparse.Namespace) -> Path:
    out = args.out or (Path(os.environ["OUTPUT_DIR"]) if os.environ.get("OUTPUT_DIR") else None)
    if out is None:
        raise UsageError(f"{args.command}: --out is required (or set OUTPUT_DIR)")
    return out


# ---- Subcommands ----


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    out = output_dir(args)
    samples = generate(config.synth_spec(), config.synth["count_per_class"])
    write_dataset(samples, out)
    print(f"Wrote {len(samples)} samples to {out}")
    for level, count in class_counts(samples).items():
        print(f"  level {level}: {count}")
    return EXIT_OK


def cmd_augment(args: argparse.Namespace, config: RunConfig) -> int:
    out = output_dir(args)
    spec = config.grid_spec()
    if args.data is not None:
        samples = read_dataset(args.data)
        manifest = read_manifest(args.data)
        sources = {str(i): str(args.data / p) for i, p in zip(manifest["id"], manifest["path"])}
    else:
        samples = generate(config.synth_spec(), config.synth["count_per_class"])
        sources = {}
    if args.limit is not None:
        samples = samples[: args.limit]

    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, sample in enumerate(samples):
        masked = augment_sample(sample, spec, sample_stream(config.seed, 0, i))
        preview = out / IMAGES_DIR / f"{sample.id}.pgm"
        save_pgm(preview, masked.image)
        record = {
            "source": sources.get(sample.id, str(preview)),
            "mask": list(masked.mask_label.bits),
            "k": spec.k,
            "s": spec.s,
        }
        lines.append(json.dumps(record))
    (out / "augment.jsonl").write_text("".join(line + "\n" for line in lines))
    print(f"Augmented {len(samples)} samples (s={spec.s}, k={spec.k}) into {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    out = output_dir(args)
    train_config = config.train_config()
    samples = read_dataset(args.data)
    validate_samples(samples, config.synth["num_classes"])
    smallest = int(class_counts(samples).min())
    if smallest < train_config.folds:
        logger.warning("smallest level has %d samples, fewer than %d folds", smallest, train_config.folds)
    hook = partial(check_masked_sample, spec=train_config.grid) if train_config.mode.uses_grid else None

    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    run_training(samples, train_config, config.model_config(), out, stream=args.stream, folds=args.fold, hook=hook)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    model = load_model(args.checkpoint)
    samples = read_dataset(args.data)
    validate_samples(samples, model.config.num_classes)
    loss, accuracy, mae = evaluate(model, samples)
    print(f"Samples: {len(samples)}")
    print(f"  Loss:      {loss:.4f}")
    print(f"  Accuracy:  {accuracy:.3f}")
    print(f"  MAE:       {mae:.3f}")
    out = args.out or (Path(os.environ["OUTPUT_DIR"]) if os.environ.get("OUTPUT_DIR") else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        result = {"samples": len(samples), "loss": loss, "accuracy": accuracy, "mae": mae}
        (out / "eval.json").write_text(json.dumps(result, indent=2) + "\n")
    return EXIT_OK


def cmd_cam(args: argparse.Namespace, config: RunConfig) -> int:
    out = output_dir(args)
    model = load_model(args.checkpoint)
    image = load_pgm(args.image)
    result = compute_cam(model, image, class_index=args.class_index, apply_relu=args.relu)
    out.mkdir(parents=True, exist_ok=True)
    save_pgm(out / "heatmap.pgm", result.display_map[None])
    sidecar = {
        "class": result.class_index,
        "weights": [float(w) for w in result.channel_weights],
        "l": int(result.raw_map.shape[0]),
    }
    (out / "weights.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    print(f"CAM for class {result.class_index} written to {out}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace, config: RunConfig) -> int:
    results = run_suite(probes=args.probes, seed=config.seed)
    failed = {name: err for name, err in results.items() if not err < GRADCHECK_TOLERANCE}
    print("Gradient check (max relative error):")
    for name, err in results.items():
        status = "FAIL" if name in failed else "ok"
        print(f"  {name:<24s} {err:.3e}  {status}")
    if failed:
        for name, err in failed.items():
            print(f"gradcheck failed: {name} (max relative error {err:.3e})", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_multiplicity(args: argparse.Namespace, config: RunConfig) -> int:
    s = args.s if args.s is not None else config.grid["s"]
    p = args.p if args.p is not None else config.grid["p"]
    print(multiplicity(s, p))
    return EXIT_OK


def cmd_ablation(args: argparse.Namespace, config: RunConfig) -> int:
    out = output_dir(args)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        modes = [TrainMode(m.strip()) for m in args.modes.split(",") if m.strip()]
    except ValueError as e:
        raise UsageError(f"ablation: {e}") from e
    samples = read_dataset(args.data)
    validate_samples(samples, config.synth["num_classes"])
    run_ablation(samples, config.train_config(), config.model_config(), seeds, modes, out, folds=args.fold)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "augment": cmd_augment,
    "train": cmd_train,
    "eval": cmd_eval,
    "cam": cmd_cam,
    "gradcheck": cmd_gradcheck,
    "multiplicity": cmd_multiplicity,
    "ablation": cmd_ablation,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except NumericalAbortError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (
        AssertionError,
        ConfigError,
        LabelRangeError,
        ShapeError,
        PgmFormatError,
        UsageError,
        OSError,
        ValueError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
