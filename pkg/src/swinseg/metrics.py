"""Segmentation evaluation: confusion counts, per-region metrics, boundary F1,
and dataset aggregation into the two-region report shape.

Lesion and background are both scored (background swaps TP/TN and FP/FN
roles). Dataset-level DSC/accuracy/IoU come from summed confusion counts; the
boundary score is averaged per image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.ndimage import distance_transform_edt

BF_TOLERANCE_FRACTION = 0.0075  # of the image diagonal, rounded up
REGIONS = ("lesion", "background")


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionCounts":
        """The same tallies from the background's perspective."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


def _as_binary(arr: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(arr)
    if not np.isin(a, (0, 1)).all():
        raise MetricsError(f"{what} must be binary 0/1")
    return a.astype(bool)


def confusion(pred_mask, target) -> ConfusionCounts:
    p = _as_binary(pred_mask, "prediction")
    t = _as_binary(target, "target")
    if p.shape != t.shape:
        raise MetricsError(f"shape mismatch: prediction {p.shape} vs target {t.shape}")
    return ConfusionCounts(
        tp=int((p & t).sum()),
        fp=int((p & ~t).sum()),
        fn=int((~p & t).sum()),
        tn=int((~p & ~t).sum()),
    )


def region_metrics(cc: ConfusionCounts):
    """(DSC, accuracy, IoU). A region absent from both sides scores 1.0."""
    if cc.total == 0:
        raise MetricsError("confusion counts are all zero")
    if cc.tp + cc.fp + cc.fn == 0:
        dsc, iou = 1.0, 1.0
    else:
        dsc = 2.0 * cc.tp / (2.0 * cc.tp + cc.fp + cc.fn)
        iou = cc.tp / (cc.tp + cc.fp + cc.fn)
    acc = (cc.tp + cc.tn) / cc.total
    return dsc, acc, iou


def recall(cc: ConfusionCounts) -> float:
    if cc.tp + cc.fn == 0:
        return 1.0
    return cc.tp / (cc.tp + cc.fn)


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbor outside the region (image edge counts)."""
    m = np.asarray(mask, dtype=bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return m & ~interior


def default_bf_tolerance(h: int, w: int) -> float:
    return float(math.ceil(BF_TOLERANCE_FRACTION * math.hypot(h, w)))


def bf_score(pred_mask, target, tolerance: Optional[float] = None) -> float:
    """Boundary F1: precision/recall of boundary pixels within ``tolerance``."""
    p = _as_binary(pred_mask, "prediction")
    t = _as_binary(target, "target")
    if p.shape != t.shape:
        raise MetricsError(f"shape mismatch: prediction {p.shape} vs target {t.shape}")
    if tolerance is None:
        tolerance = default_bf_tolerance(*p.shape)
    pb = boundary_pixels(p)
    tb = boundary_pixels(t)
    if not pb.any() and not tb.any():
        return 1.0
    if not pb.any() or not tb.any():
        return 0.0
    dist_to_t = distance_transform_edt(~tb)
    dist_to_p = distance_transform_edt(~pb)
    precision = (dist_to_t[pb] <= tolerance).mean()
    rec = (dist_to_p[tb] <= tolerance).mean()
    if precision + rec == 0:
        return 0.0
    return float(2.0 * precision * rec / (precision + rec))


# -- dataset aggregation --------------------------------------------------------


@dataclass
class ImageEval:
    """Per-image tallies from the lesion's perspective plus boundary scores."""

    counts: ConfusionCounts
    bf_lesion: float
    bf_background: float


def evaluate_pair(pred_mask, target) -> ImageEval:
    cc = confusion(pred_mask, target)
    p = np.asarray(pred_mask).astype(bool)
    t = np.asarray(target).astype(bool)
    return ImageEval(
        counts=cc,
        bf_lesion=bf_score(p, t),
        bf_background=bf_score(~p, ~t),
    )


@dataclass
class RegionReport:
    dsc: float
    accuracy: float
    iou: float
    bf_score: float


@dataclass
class MetricsReport:
    lesion: RegionReport
    background: RegionReport
    global_acc: float
    mean_acc: float
    mean_iou: float
    weighted_iou: float
    mean_bf: float
    counts: ConfusionCounts

    def as_dict(self) -> dict:
        return {
            "regions": {
                name: {
                    "dsc": r.dsc,
                    "accuracy": r.accuracy,
                    "iou": r.iou,
                    "bf_score": r.bf_score,
                }
                for name, r in (("lesion", self.lesion), ("background", self.background))
            },
            "aggregates": {
                "global_acc": self.global_acc,
                "mean_acc": self.mean_acc,
                "mean_iou": self.mean_iou,
                "weighted_iou": self.weighted_iou,
                "mean_bf": self.mean_bf,
            },
            "confusion": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "fn": self.counts.fn,
                "tn": self.counts.tn,
            },
        }


def aggregate(images: List[ImageEval]) -> MetricsReport:
    """Fold per-image evaluations into the two-region dataset report."""
    if not images:
        raise MetricsError("aggregate needs at least one image")
    total = images[0].counts
    for ev in images[1:]:
        total = total + ev.counts
    bf_l = float(np.mean([ev.bf_lesion for ev in images]))
    bf_b = float(np.mean([ev.bf_background for ev in images]))

    dsc_l, acc_l, iou_l = region_metrics(total)
    dsc_b, acc_b, iou_b = region_metrics(total.swapped())
    share_l = (total.tp + total.fn) / total.total
    share_b = (total.tn + total.fp) / total.total
    return MetricsReport(
        lesion=RegionReport(dsc_l, acc_l, iou_l, bf_l),
        background=RegionReport(dsc_b, acc_b, iou_b, bf_b),
        global_acc=(total.tp + total.tn) / total.total,
        mean_acc=(recall(total) + recall(total.swapped())) / 2.0,
        mean_iou=(iou_l + iou_b) / 2.0,
        weighted_iou=share_l * iou_l + share_b * iou_b,
        mean_bf=(bf_l + bf_b) / 2.0,
        counts=total,
    )


# -- serialization ----------------------------------------------------------------

CSV_HEADER = "region,dsc,accuracy,iou,bf_score"


def report_csv(report: MetricsReport) -> str:
    lines = [CSV_HEADER]
    for name, r in (("lesion", report.lesion), ("background", report.background)):
        lines.append(f"{name},{r.dsc:.6f},{r.accuracy:.6f},{r.iou:.6f},{r.bf_score:.6f}")
    return "\n".join(lines) + "\n"


AGGREGATES_HEADER = "global_acc,mean_acc,mean_iou,weighted_iou,mean_bf"


def aggregates_csv(report: MetricsReport) -> str:
    vals = (
        report.global_acc,
        report.mean_acc,
        report.mean_iou,
        report.weighted_iou,
        report.mean_bf,
    )
    return AGGREGATES_HEADER + "\n" + ",".join(f"{v:.6f}" for v in vals) + "\n"


def confusion_csv(report: MetricsReport) -> str:
    """Row-normalized 2×2 table: actual region vs predicted region."""
    c = report.counts
    lesion_total = max(c.tp + c.fn, 1)
    bg_total = max(c.fp + c.tn, 1)
    lines = [
        "actual,pred_lesion,pred_background",
        f"lesion,{c.tp / lesion_total:.6f},{c.fn / lesion_total:.6f}",
        f"background,{c.fp / bg_total:.6f},{c.tn / bg_total:.6f}",
    ]
    return "\n".join(lines) + "\n"


def report_json(report: MetricsReport) -> str:
    return json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"
