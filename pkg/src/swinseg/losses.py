"""Training losses: clamped binary cross-entropy, smoothed dice, and their mean."""

from __future__ import annotations

from . import tensor as T
from .tensor import Tensor

PROB_EPS = 1e-7
DICE_SMOOTH = 1.0


def _check_shapes(pred: Tensor, target: Tensor):
    if pred.shape != target.shape:
        raise T.ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")


def bce_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross-entropy; predictions clamped to [1e-7, 1-1e-7]."""
    _check_shapes(pred, target)
    p = T.clamp(pred, PROB_EPS, 1.0 - PROB_EPS)
    pos = T.mul(target, T.tlog(p))
    neg = T.mul(1.0 - target, T.tlog(1.0 - p))
    return -T.tmean(T.add(pos, neg))


def dice_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Smoothed soft dice: 1 - (2·Σpy + 1) / (Σp + Σy + 1); defined on empty masks."""
    _check_shapes(pred, target)
    inter = T.tsum(T.mul(pred, target))
    total = T.add(T.tsum(pred), T.tsum(target))
    return 1.0 - (2.0 * inter + DICE_SMOOTH) / (total + DICE_SMOOTH)


def combined_loss(pred: Tensor, target: Tensor) -> Tensor:
    """(BCE + dice) / 2, differentiable end to end."""
    return 0.5 * T.add(bce_loss(pred, target), dice_loss(pred, target))
