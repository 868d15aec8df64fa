"""Corpus ingestion, deterministic splitting, and geometric augmentation.

Corpus layout: ``root/images/*.png`` and ``root/masks/*_mask*.png`` (stems
match; multiple mask files per image, ``<stem>_mask_1.png`` etc., are
OR-merged; class subfolders are flattened). Images land as [0,1] float32 RGB
planes, masks as strict {0,1} planes.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np
from PIL import Image
from scipy import ndimage

from .tensor import Tensor

MASK_THRESHOLD = 127  # of 255
CROP_RATIO = 0.9
MAX_ROTATION_DEG = 10.0


@dataclass
class Sample:
    id: str
    image: np.ndarray  # (3, H, W) float32 in [0, 1]
    mask: np.ndarray  # (1, H, W) float32 in {0, 1}


@dataclass
class LoadReport:
    samples: List[Sample] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


# -- resampling (half-pixel-center convention) --------------------------------


def resize_nearest(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of the trailing two axes."""
    in_h, in_w = arr.shape[-2:]
    rows = np.minimum(((np.arange(out_h) + 0.5) * in_h / out_h).astype(np.int64), in_h - 1)
    cols = np.minimum(((np.arange(out_w) + 0.5) * in_w / out_w).astype(np.int64), in_w - 1)
    return arr[..., rows[:, None], cols[None, :]]


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of the trailing two axes (edge-clamped)."""
    in_h, in_w = arr.shape[-2:]
    sy = (np.arange(out_h) + 0.5) * in_h / out_h - 0.5
    sx = (np.arange(out_w) + 0.5) * in_w / out_w - 0.5
    y0 = np.clip(np.floor(sy), 0, in_h - 1).astype(np.int64)
    x0 = np.clip(np.floor(sx), 0, in_w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(sy - y0, 0.0, 1.0)
    wx = np.clip(sx - x0, 0.0, 1.0)
    top = arr[..., y0[:, None], x0[None, :]] * (1 - wx) + arr[..., y0[:, None], x1[None, :]] * wx
    bot = arr[..., y1[:, None], x0[None, :]] * (1 - wx) + arr[..., y1[:, None], x1[None, :]] * wx
    return (top * (1 - wy[:, None]) + bot * wy[:, None]).astype(arr.dtype)


# -- loading -------------------------------------------------------------------


def _mask_paths_for(stem: str, mask_files: dict) -> List[Path]:
    out = []
    for mstem, path in mask_files.items():
        if mstem == f"{stem}_mask" or mstem.startswith(f"{stem}_mask_"):
            out.append(path)
    return sorted(out)


def _read_binary_mask(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return arr > MASK_THRESHOLD


def load_corpus(root, size: int) -> LoadReport:
    """Load every image/mask pair under ``root``, resized to ``size``².

    Missing or unreadable files are collected as per-file errors; an empty
    directory yields an empty corpus plus a warning, not a crash.
    """
    root = Path(root)
    report = LoadReport()
    img_dir = root / "images"
    mask_dir = root / "masks"
    if not img_dir.is_dir():
        report.warnings.append(f"no images directory under {root}")
        return report
    image_files = sorted(p for p in img_dir.rglob("*.png"))
    mask_files = {p.stem: p for p in mask_dir.rglob("*.png")} if mask_dir.is_dir() else {}
    if not image_files:
        report.warnings.append(f"no PNG images under {img_dir}")
        return report

    for img_path in image_files:
        stem = img_path.stem
        masks = _mask_paths_for(stem, mask_files)
        if not masks:
            report.errors.append(f"{img_path.name}: no mask file found")
            continue
        try:
            with Image.open(img_path) as img:
                rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        except Exception as exc:  # corrupt PNG
            report.errors.append(f"{img_path.name}: {exc}")
            continue
        try:
            merged = None
            for mpath in masks:
                m = _read_binary_mask(mpath)
                merged = m if merged is None else (merged | m)
        except Exception as exc:
            report.errors.append(f"{img_path.name}: mask unreadable ({exc})")
            continue
        if merged.shape != rgb.shape[:2]:
            report.errors.append(
                f"{img_path.name}: mask size {merged.shape} != image size {rgb.shape[:2]}"
            )
            continue
        image = resize_bilinear(rgb.transpose(2, 0, 1), size, size).astype(np.float32)
        mask = resize_nearest(merged.astype(np.float32), size, size)
        mask = (mask > 0.5).astype(np.float32)[None]
        report.samples.append(Sample(id=stem, image=np.clip(image, 0.0, 1.0), mask=mask))
    return report


def batch_tensors(samples: List[Sample]):
    images = Tensor(np.stack([s.image for s in samples]))
    masks = Tensor(np.stack([s.mask for s in samples]))
    return images, masks


# -- splitting -----------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    train_fraction: float = 0.8
    val_fraction: float = 0.1


@dataclass
class Split:
    train: List[Sample]
    val: List[Sample]
    test: List[Sample]


def split(samples: List[Sample], spec: SplitSpec) -> Split:
    """Deterministic shuffle over lexicographically sorted ids, then cut.

    The test set takes the tail of the permutation; the validation set the
    tail of what remains (at least one sample when ≥ 2 training samples).
    """
    ordered = sorted(samples, key=lambda s: s.id)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5B117]))
    perm = rng.permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]
    n = len(shuffled)
    if n < 2:
        return Split(train=shuffled, val=[], test=[])
    n_train_total = min(max(int(round(n * spec.train_fraction)), 1), n - 1)
    test = shuffled[n_train_total:]
    pool = shuffled[:n_train_total]
    if len(pool) >= 2:
        n_val = min(max(int(len(pool) * spec.val_fraction), 1), len(pool) - 1)
    else:
        n_val = 0
    val = pool[len(pool) - n_val :] if n_val else []
    train = pool[: len(pool) - n_val]
    return Split(train=train, val=val, test=test)


# -- augmentation ----------------------------------------------------------------


def sample_rng(base_seed: int, epoch: int, sample_id: str) -> np.random.Generator:
    """Per-(epoch, sample) generator so parallel order never matters."""
    return np.random.default_rng(
        np.random.SeedSequence([base_seed, epoch, zlib.crc32(sample_id.encode())])
    )


def hflip(arr: np.ndarray) -> np.ndarray:
    return arr[..., ::-1].copy()


def vflip(arr: np.ndarray) -> np.ndarray:
    return arr[..., ::-1, :].copy()


def rotate(arr: np.ndarray, angle_deg: float, order: int) -> np.ndarray:
    """Rotate the trailing two axes about the center, zero-filled."""
    return ndimage.rotate(
        arr, angle_deg, axes=(-2, -1), reshape=False, order=order, mode="constant",
        cval=0.0, prefilter=False,
    ).astype(arr.dtype)


def center_crop_resize(arr: np.ndarray, ratio: float, order: int) -> np.ndarray:
    """Crop the central ``ratio`` portion and resize back to the input size."""
    h, w = arr.shape[-2:]
    ch = max(1, int(round(h * ratio)))
    cw = max(1, int(round(w * ratio)))
    top = (h - ch) // 2
    left = (w - cw) // 2
    cropped = arr[..., top : top + ch, left : left + cw]
    if order == 0:
        return resize_nearest(cropped, h, w)
    return resize_bilinear(cropped, h, w)


def augment(sample: Sample, rng: np.random.Generator) -> Sample:
    """Random flips, a ≤10° rotation and an optional 90% center crop.

    The identical geometric map is applied to image and mask (bilinear vs
    nearest resampling); the mask is re-binarized afterwards.
    """
    image, mask = sample.image, sample.mask
    if rng.random() < 0.5:
        image, mask = hflip(image), hflip(mask)
    if rng.random() < 0.5:
        image, mask = vflip(image), vflip(mask)
    angle = float(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))
    if angle != 0.0:
        image = np.clip(rotate(image, angle, order=1), 0.0, 1.0)
        mask = rotate(mask, angle, order=0)
    if rng.random() < 0.5:
        image = np.clip(center_crop_resize(image, CROP_RATIO, order=1), 0.0, 1.0)
        mask = center_crop_resize(mask, CROP_RATIO, order=0)
    mask = (mask > 0.5).astype(np.float32)
    return Sample(id=sample.id, image=image.astype(np.float32), mask=mask)
