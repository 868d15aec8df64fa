"""Epoch loop: batching, on-the-fly augmentation, validation, checkpointing."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import tensor as T
from .checkpoint import save_checkpoint
from .data import Sample, augment, batch_tensors, sample_rng
from .losses import combined_loss
from .metrics import ConfusionCounts, confusion, region_metrics
from .model import Model, train_step
from .optim import make_optimizer

BINARIZE_THRESHOLD = 0.5


@dataclass
class TrainSettings:
    epochs: int = 100
    batch: int = 16
    lr: float = 1e-4
    optimizer: str = "adam"
    seed: int = 0
    augment: bool = True


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    val_loss: float
    val_dice: float

    def csv(self) -> str:
        return f"{self.epoch},{self.train_loss:.6f},{self.val_loss:.6f},{self.val_dice:.6f}"


@dataclass
class TrainResult:
    rows: List[EpochRow]
    best_epoch: int
    best_val_dice: float
    best_path: Optional[Path]
    final_path: Optional[Path]

    def log_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_dice"]
        lines += [r.csv() for r in self.rows]
        return "\n".join(lines) + "\n"


def evaluate_samples(model: Model, samples: List[Sample]):
    """(mean combined loss, lesion dice from summed counts) in eval mode."""
    losses = []
    total = ConfusionCounts(0, 0, 0, 0)
    for s in samples:
        images, masks = batch_tensors([s])
        with T.no_grad():
            pred = model.forward(images, training=False)
            losses.append(combined_loss(pred, masks).item())
        hard = (pred.data >= BINARIZE_THRESHOLD).astype(np.uint8)
        total = total + confusion(hard[0, 0], s.mask[0].astype(np.uint8))
    dice, _, _ = region_metrics(total)
    return float(np.mean(losses)), float(dice)


def train(
    model: Model,
    train_samples: List[Sample],
    val_samples: List[Sample],
    settings: TrainSettings,
    out_dir=None,
) -> TrainResult:
    if not train_samples:
        raise ValueError("no training samples")
    opt = make_optimizer(settings.optimizer, settings.lr)
    monitor = val_samples if val_samples else train_samples
    out_dir = Path(out_dir) if out_dir is not None else None
    best_path = final_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        best_path = out_dir / "best.ckpt"
        final_path = out_dir / "final.ckpt"

    rows: List[EpochRow] = []
    best_dice = -1.0
    best_epoch = -1
    order_rng = np.random.default_rng(np.random.SeedSequence([settings.seed, 0xB41C]))
    batch = max(1, settings.batch)
    for epoch in range(settings.epochs):
        opt.set_epoch(epoch)
        perm = order_rng.permutation(len(train_samples))
        step_losses = []
        for start in range(0, len(perm), batch):
            chunk = [train_samples[i] for i in perm[start : start + batch]]
            if settings.augment:
                chunk = [
                    augment(s, sample_rng(settings.seed, epoch, s.id)) for s in chunk
                ]
            images, masks = batch_tensors(chunk)
            step_losses.append(train_step(model, images, masks, opt))
        val_loss, val_dice = evaluate_samples(model, monitor)
        rows.append(EpochRow(epoch, float(np.mean(step_losses)), val_loss, val_dice))
        if val_dice > best_dice:
            best_dice = val_dice
            best_epoch = epoch
            if best_path is not None:
                save_checkpoint(model, best_path)
    if final_path is not None:
        save_checkpoint(model, final_path)
    if best_path is not None and not best_path.exists():
        save_checkpoint(model, best_path)
    return TrainResult(rows, best_epoch, best_dice, best_path, final_path)
