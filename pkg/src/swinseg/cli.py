"""Command-line surface: synth, train, eval, predict.

Exit codes are a stable contract: 0 success, 1 usage error, 2 data error,
3 checkpoint/config mismatch.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from . import tensor as T
from .checkpoint import CheckpointError, load_checkpoint
from .data import SplitSpec, load_corpus, resize_bilinear, resize_nearest, split
from .metrics import (
    aggregate,
    aggregates_csv,
    confusion_csv,
    evaluate_pair,
    report_csv,
    report_json,
)
from .model import ConfigError, Model, ModelConfig
from .synth import generate_corpus
from .training import BINARIZE_THRESHOLD, TrainSettings, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECKPOINT = 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    scale: Fraction = Fraction(1)
    window: int = 4
    heads: int = 8
    lr: float = 1e-4
    optimizer: str = "adam"
    epochs: int = 100
    batch: int = 16
    seed: int = 0
    augment: bool = True

    def model_config(self) -> ModelConfig:
        return ModelConfig.scaled(self.scale, window=self.window, heads=self.heads)


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


_CONFIG_PARSERS = {
    "scale": lambda v: Fraction(v),
    "window": int,
    "heads": int,
    "lr": float,
    "optimizer": lambda v: v.strip().lower(),
    "epochs": int,
    "batch": int,
    "seed": int,
    "augment": _parse_bool,
}


def parse_config_file(path) -> dict:
    """key=value lines with # comments; unknown keys are rejected by name."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_PARSERS:
            raise UsageError(f"{path}:{lineno}: unknown config key: {key}")
        try:
            out[key] = _CONFIG_PARSERS[key](value)
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r} ({exc})")
    return out


def resolve_run_config(args) -> RunConfig:
    rc = RunConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        rc = replace(rc, **parse_config_file(path))
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "scale", None) is not None:
        try:
            overrides["scale"] = Fraction(args.scale)
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"bad --scale value: {args.scale!r}")
    if overrides:
        rc = replace(rc, **overrides)
    if rc.optimizer not in ("adam", "sgd"):
        raise UsageError(f"optimizer must be adam or sgd, got {rc.optimizer!r}")
    return rc


def _load_split_corpus(rc: RunConfig, corpus_dir, which: str):
    cfg = rc.model_config()
    report = load_corpus(corpus_dir, cfg.input_hw[0])
    for err in report.errors:
        print(f"warning: {err}", file=sys.stderr)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not report.samples:
        raise DataError(f"no usable samples in corpus {corpus_dir}")
    if which == "all":
        return cfg, report.samples
    parts = split(report.samples, SplitSpec(seed=rc.seed))
    chosen = {"train": parts.train, "val": parts.val, "test": parts.test}[which]
    if not chosen:
        raise DataError(f"split {which!r} is empty for corpus {corpus_dir}")
    return cfg, chosen


# -- commands -------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be ≥ 1, got {args.n}")
    out = Path(args.out)
    try:
        ids = generate_corpus(out, n=args.n, size=args.size, seed=args.seed or 0)
    except OSError as exc:
        raise DataError(f"cannot write corpus to {out}: {exc}")
    print(f"wrote {len(ids)} image/mask pairs under {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    rc = resolve_run_config(args)
    cfg = rc.model_config()
    report = load_corpus(args.corpus, cfg.input_hw[0])
    for err in report.errors:
        print(f"warning: {err}", file=sys.stderr)
    if not report.samples:
        raise DataError(f"no usable samples in corpus {args.corpus}")
    parts = split(report.samples, SplitSpec(seed=rc.seed))
    if not parts.train:
        raise DataError("training split is empty")
    model = Model(cfg, seed=rc.seed)
    settings = TrainSettings(
        epochs=rc.epochs,
        batch=rc.batch,
        lr=rc.lr,
        optimizer=rc.optimizer,
        seed=rc.seed,
        augment=rc.augment,
    )
    out_dir = Path(args.out)
    result = train(model, parts.train, parts.val, settings, out_dir)
    (out_dir / "loss_log.csv").write_text(result.log_csv())
    last = result.rows[-1]
    print(
        f"trained {rc.epochs} epochs on {len(parts.train)} samples "
        f"(val {len(parts.val)}, test held out {len(parts.test)})"
    )
    print(f"final: train_loss {last.train_loss:.4f} val_dice {last.val_dice:.4f}")
    print(f"best val_dice {result.best_val_dice:.4f} at epoch {result.best_epoch}")
    print(f"checkpoints: {result.best_path} {result.final_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    rc = resolve_run_config(args)
    cfg, samples = _load_split_corpus(rc, args.corpus, args.split)
    model = load_checkpoint(args.checkpoint, cfg)
    evals = []
    for s in samples:
        prob = model.predict(T.Tensor(s.image[None]))
        hard = (prob[0, 0] >= BINARIZE_THRESHOLD).astype(np.uint8)
        evals.append(evaluate_pair(hard, s.mask[0].astype(np.uint8)))
    rep = aggregate(evals)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.csv").write_text(report_csv(rep))
    (out_dir / "aggregates.csv").write_text(aggregates_csv(rep))
    (out_dir / "confusion.csv").write_text(confusion_csv(rep))
    (out_dir / "report.json").write_text(report_json(rep))
    sys.stdout.write(report_csv(rep))
    sys.stdout.write(aggregates_csv(rep))
    print(f"reports written to {out_dir}")
    return EXIT_OK


def _overlay(rgb: np.ndarray, mask: np.ndarray) -> np.ndarray:
    tint = np.array([255.0, 40.0, 40.0])
    out = rgb.astype(np.float64).copy()
    out[mask] = 0.55 * out[mask] + 0.45 * tint
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def cmd_predict(args) -> int:
    rc = resolve_run_config(args)
    cfg = rc.model_config()
    model = load_checkpoint(args.checkpoint, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ok = 0
    for image_path in args.images:
        path = Path(image_path)
        try:
            with Image.open(path) as img:
                rgb = np.asarray(img.convert("RGB"), dtype=np.float32)
        except Exception as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            continue
        h0, w0 = rgb.shape[:2]
        planes = resize_bilinear(rgb.transpose(2, 0, 1) / 255.0, *cfg.input_hw)
        prob = model.predict(T.Tensor(planes[None].astype(np.float32)))
        hard = prob[0, 0] >= BINARIZE_THRESHOLD
        full = resize_nearest(hard.astype(np.uint8), h0, w0).astype(bool)
        Image.fromarray(full.astype(np.uint8) * 255, mode="L").save(
            out_dir / f"{path.stem}_mask.png"
        )
        Image.fromarray(_overlay(rgb, full), mode="RGB").save(
            out_dir / f"{path.stem}_overlay.png"
        )
        ok += 1
    if ok == 0:
        raise DataError("no image could be processed")
    print(f"wrote {ok} mask/overlay pairs to {out_dir}")
    return EXIT_OK


# -- argument plumbing ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="swinseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--out", required=True, help="corpus directory to create")
    p_synth.add_argument("--n", type=int, default=8)
    p_synth.add_argument("--size", type=int, default=64)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train on a corpus")
    p_train.add_argument("--corpus", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--config")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--scale")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint against a corpus")
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--config")
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--epochs", type=int)
    p_eval.add_argument("--scale")
    p_eval.add_argument("--split", choices=("all", "train", "val", "test"), default="all")
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", help="emit mask + overlay PNGs")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--out", required=True)
    p_pred.add_argument("--config")
    p_pred.add_argument("--seed", type=int)
    p_pred.add_argument("--epochs", type=int)
    p_pred.add_argument("--scale")
    p_pred.add_argument("images", nargs="+")
    p_pred.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CheckpointError as exc:
        print(f"checkpoint error ({exc.kind}): {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT


if __name__ == "__main__":
    sys.exit(main())
