"""Windowed multi-head self-attention with optional cyclic shift.

A feature map is cut into non-overlapping M×M token windows; attention runs
independently per window. Odd-indexed blocks roll the map by (-M/2, -M/2)
first so information crosses window borders, and a precomputed additive mask
blocks the token pairs that the roll glued together across the wrap-around
boundary.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .blocks import Mlp
from .tensor import Tensor

MASK_FILL = -1e9


def window_partition(x: Tensor, window: int, shift: int = 0):
    """(N,C,H,W) -> (N·nWin, M², C) tokens plus the attention mask (or None).

    When shift > 0 a cyclic roll by (-shift, -shift) precedes partitioning;
    ``window_reverse`` undoes both exactly.
    """
    n, c, h, w = x._nchw()
    if h % window or w % window:
        raise T.ShapeError(f"spatial dims {h}x{w} not divisible by window {window}")
    if shift:
        x = T.roll2d(x, -shift, -shift)
    gh, gw = h // window, w // window
    t = T.reshape(x, (n, c, gh, window, gw, window))
    t = T.transpose(t, (0, 2, 4, 3, 5, 1))
    tokens = T.reshape(t, (n * gh * gw, window * window, c))
    mask = attention_mask(h, w, window, shift) if shift else None
    return tokens, mask


def window_reverse(tokens: Tensor, window: int, shift: int, n: int, c: int, h: int, w: int) -> Tensor:
    gh, gw = h // window, w // window
    t = T.reshape(tokens, (n, gh, gw, window, window, c))
    t = T.transpose(t, (0, 5, 1, 3, 2, 4))
    x = T.reshape(t, (n, c, h, w))
    if shift:
        x = T.roll2d(x, shift, shift)
    return x


def _region_ids(h: int, w: int, window: int, shift: int) -> np.ndarray:
    ids = np.zeros((h, w), dtype=np.int64)
    slices = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    cnt = 0
    for hs in slices:
        for ws in slices:
            ids[hs, ws] = cnt
            cnt += 1
    return ids


def attention_mask(h: int, w: int, window: int, shift: int) -> np.ndarray:
    """Additive (nWin, 1, M², M²) mask for shifted windows: 0 allowed, -1e9 blocked.

    The region canvas already describes the rolled layout (its last `shift`
    rows/cols are the wrapped content), so it is partitioned as-is; two tokens
    may attend iff they share both a row and a column region.
    """
    ids = _region_ids(h, w, window, shift)
    gh, gw = h // window, w // window
    win = ids.reshape(gh, window, gw, window).transpose(0, 2, 1, 3).reshape(
        gh * gw, window * window
    )
    blocked = win[:, :, None] != win[:, None, :]
    return np.where(blocked, MASK_FILL, 0.0).astype(np.float32)[:, None, :, :]


class WindowAttention:
    """softmax(QKᵀ/√d + mask)·V per window and head, then an output projection."""

    def __init__(self, store, prefix: str, dim: int, heads: int):
        if dim % heads:
            raise ValueError(f"heads ({heads}) must divide dim ({dim})")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / np.sqrt(self.head_dim)
        self.wq = store.param(f"{prefix}.wq", (dim, dim), "xavier-normal")
        self.wk = store.param(f"{prefix}.wk", (dim, dim), "xavier-normal")
        self.wv = store.param(f"{prefix}.wv", (dim, dim), "xavier-normal")
        self.wo = store.param(f"{prefix}.wo", (dim, dim), "xavier-normal")

    def __call__(self, tokens: Tensor, mask=None) -> Tensor:
        b, t, d = tokens.shape
        if d != self.dim:
            raise T.ShapeError(f"attention expects dim {self.dim}, got {d}")
        h, hd = self.heads, self.head_dim

        def split_heads(z):
            z = T.reshape(z, (b, t, h, hd))
            return T.transpose(z, (0, 2, 1, 3))

        q = split_heads(T.linear(tokens, self.wq.tensor))
        k = split_heads(T.linear(tokens, self.wk.tensor))
        v = split_heads(T.linear(tokens, self.wv.tensor))
        logits = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * self.scale
        if mask is not None:
            n_img = b // mask.shape[0]
            tiled = np.tile(mask, (n_img, 1, 1, 1)).astype(logits.data.dtype)
            logits = T.add(logits, Tensor(tiled))
        attn = T.softmax(logits, axis=-1)
        out = T.matmul(attn, v)
        out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (b, t, d))
        return T.linear(out, self.wo.tensor)


class SwinBlock:
    """LN → W-MSA → residual, LN → MLP → residual, inside a window partition.

    ``block_index`` selects the shift: even blocks attend in the plain grid,
    odd blocks in the half-window-shifted grid.
    """

    def __init__(self, store, prefix: str, dim: int, heads: int, window: int, block_index: int):
        self.dim = dim
        self.window = window
        self.shift = (window // 2) if block_index % 2 else 0
        self.ln1_g = store.param(f"{prefix}.ln1.gamma", (dim,), "ones")
        self.ln1_b = store.param(f"{prefix}.ln1.beta", (dim,), "zeros")
        self.attn = WindowAttention(store, f"{prefix}.attn", dim, heads)
        self.ln2_g = store.param(f"{prefix}.ln2.gamma", (dim,), "ones")
        self.ln2_b = store.param(f"{prefix}.ln2.beta", (dim,), "zeros")
        self.mlp = Mlp(store, f"{prefix}.mlp", dim)

    def __call__(self, x: Tensor) -> Tensor:
        n, c, h, w = x._nchw()
        if c != self.dim:
            raise T.ShapeError(f"swin block expects {self.dim} channels, got {c}")
        tokens, mask = window_partition(x, self.window, self.shift)
        z = T.add(tokens, self.attn(T.layer_norm(tokens, self.ln1_g.tensor, self.ln1_b.tensor), mask))
        z = T.add(z, self.mlp(T.layer_norm(z, self.ln2_g.tensor, self.ln2_b.tensor)))
        return window_reverse(z, self.window, self.shift, n, c, h, w)
