"""Hermetic synthetic corpus: dark elliptical lesions on speckled tissue texture.

Every byte is a pure function of the seed, so pipeline and training tests can
assert byte-identical reruns.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .data import resize_bilinear

LESION_FRACTION_RANGE = (0.02, 0.40)


def _ellipse_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample an ellipse whose area fraction lies in the target range."""
    lo, hi = LESION_FRACTION_RANGE
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    for _ in range(64):
        cy = rng.uniform(0.3, 0.7) * size
        cx = rng.uniform(0.3, 0.7) * size
        a = rng.uniform(0.10, 0.30) * size
        b = rng.uniform(0.10, 0.30) * size
        theta = rng.uniform(0.0, np.pi)
        ct, st = np.cos(theta), np.sin(theta)
        u = (xx - cx) * ct + (yy - cy) * st
        v = -(xx - cx) * st + (yy - cy) * ct
        mask = (u * u) / (a * a) + (v * v) / (b * b) <= 1.0
        frac = mask.mean()
        if lo <= frac <= hi:
            return mask
    raise RuntimeError("could not sample a lesion in the target area range")


def _texture(size: int, rng: np.random.Generator, cells: int, amplitude: float) -> np.ndarray:
    grid = rng.uniform(-1.0, 1.0, (cells, cells))
    return amplitude * resize_bilinear(grid, size, size)


def synth_image(size: int, rng: np.random.Generator):
    """One (image, mask) pair: float image in [0,1], boolean mask."""
    mask = _ellipse_mask(size, rng)
    base = rng.uniform(0.48, 0.60)
    tissue = base + _texture(size, rng, max(3, size // 12), 0.08)
    lesion_level = rng.uniform(0.14, 0.22)
    img = np.where(mask, lesion_level + _texture(size, rng, max(3, size // 16), 0.03), tissue)
    speckle = 1.0 + 0.10 * rng.standard_normal((size, size))
    img = np.clip(img * speckle, 0.0, 1.0)
    return img, mask


def generate_corpus(root, n: int, size: int, seed: int) -> list[str]:
    """Write ``n`` image/mask pairs in the standard corpus layout; returns ids."""
    if n < 1:
        raise ValueError(f"need n ≥ 1, got {n}")
    root = Path(root)
    img_dir = root / "images"
    mask_dir = root / "masks"
    img_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E3D]))
    ids = []
    for i in range(n):
        img, mask = synth_image(size, rng)
        stem = f"synth_{i:04d}"
        gray = np.round(img * 255.0).astype(np.uint8)
        rgb = np.stack([gray, gray, gray], axis=-1)
        Image.fromarray(rgb, mode="RGB").save(img_dir / f"{stem}.png")
        Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(
            mask_dir / f"{stem}_mask.png"
        )
        ids.append(stem)
    return ids
