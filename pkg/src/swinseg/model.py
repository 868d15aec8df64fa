"""Full segmentation network: config, assembly, forward pass, training step.

Encoder: two residual-conv stages, then two windowed-attention stages, each
stage LoG-enhanced before pooling (the enhanced map is also the skip). The
decoder fuses channel-attended skips at H/8, H/4 and H/2, and the head maps a
40-filter block through 2× upsampling, pixel attention and a sigmoid 1×1 conv
to a full-resolution probability mask.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import tensor as T
from .attention import SwinBlock
from .blocks import ConvReluBlock, ResidualBlock
from .losses import combined_loss
from .params import ParamStore
from .refine import Mscas, PixelAttention, log_enhance
from .tensor import Tensor


class ConfigError(ValueError):
    """Invalid model configuration; names the violated invariant."""


class ValidationError(ValueError):
    """Invalid runtime input (e.g. non-binary masks)."""


BASE_INPUT = 256
BASE_CHANNELS = (64, 128, 256, 512)
BASE_HEAD_FILTERS = 40
LR_DECAY_PER_EPOCH = 0.98


@dataclass(frozen=True)
class ModelConfig:
    input_hw: tuple = (BASE_INPUT, BASE_INPUT)
    in_channels: int = 3
    stage_channels: tuple = BASE_CHANNELS
    stage_pool: tuple = ("avg", "max", "avg", "max")
    window: int = 4
    heads: int = 8
    swin_blocks_per_stage: int = 2
    head_filters: int = BASE_HEAD_FILTERS
    scale: Fraction = field(default_factory=lambda: Fraction(1))

    @classmethod
    def scaled(cls, scale, window: Optional[int] = None, heads: Optional[int] = None) -> "ModelConfig":
        """Uniformly shrink input size and channel widths by a rational factor."""
        frac = Fraction(scale) if not isinstance(scale, Fraction) else scale
        if frac <= 0:
            raise ConfigError(f"scale must be positive, got {frac}")
        size = BASE_INPUT * frac
        if size.denominator != 1:
            raise ConfigError(f"scale {frac} does not divide the {BASE_INPUT} input size")
        chans = []
        for c in BASE_CHANNELS:
            ch = c * frac
            if ch.denominator != 1:
                raise ConfigError(f"scale {frac} does not divide channel width {c}")
            chans.append(int(ch))
        head = max(1, round(BASE_HEAD_FILTERS * float(frac)))
        cfg = cls(
            input_hw=(int(size), int(size)),
            stage_channels=tuple(chans),
            window=window if window is not None else 4,
            heads=heads if heads is not None else 8,
            head_filters=head,
            scale=frac,
        )
        cfg.validate()
        return cfg

    def validate(self):
        h, w = self.input_hw
        if h < 16 or w < 16 or h % 16 or w % 16:
            raise ConfigError(f"input size {h}x{w} must be a multiple of 16")
        if len(self.stage_channels) != 4 or any(c < 1 for c in self.stage_channels):
            raise ConfigError(f"need 4 positive stage channels, got {self.stage_channels}")
        for a, b in zip(self.stage_channels, self.stage_channels[1:]):
            if b != 2 * a:
                raise ConfigError(f"stage channels must double: {self.stage_channels}")
        if len(self.stage_pool) != 4 or any(p not in ("avg", "max") for p in self.stage_pool):
            raise ConfigError(f"stage_pool entries must be avg/max, got {self.stage_pool}")
        if self.window < 2:
            raise ConfigError(f"window must be ≥ 2, got {self.window}")
        for div in (4, 8):  # spatial sizes where attention runs
            if (h // div) % self.window or (w // div) % self.window:
                raise ConfigError(
                    f"swin size {h // div}x{w // div} not divisible by window {self.window}"
                )
        for c in self.stage_channels[2:]:
            if c % self.heads:
                raise ConfigError(f"heads ({self.heads}) must divide swin channels ({c})")
        if self.swin_blocks_per_stage < 1:
            raise ConfigError("need at least one swin block per stage")
        if self.head_filters < 1:
            raise ConfigError(f"head_filters must be ≥ 1, got {self.head_filters}")

    def canonical(self) -> str:
        return (
            f"hw={self.input_hw[0]}x{self.input_hw[1]};in={self.in_channels};"
            f"ch={','.join(map(str, self.stage_channels))};pool={','.join(self.stage_pool)};"
            f"window={self.window};heads={self.heads};blocks={self.swin_blocks_per_stage};"
            f"headf={self.head_filters}"
        )

    def config_hash(self) -> int:
        return zlib.crc32(self.canonical().encode()) & 0xFFFFFFFF

    def encoder_schedule(self) -> list[tuple[int, int, int]]:
        """Expected (channels, h, w) of each encoder stage output (post-pool)."""
        h, w = self.input_hw
        return [
            (c, h >> (s + 1), w >> (s + 1)) for s, c in enumerate(self.stage_channels)
        ]


class Model:
    def __init__(self, config: ModelConfig, seed: int):
        config.validate()
        self.config = config
        self.seed = seed
        store = ParamStore(seed)
        self.store = store
        c1, c2, c3, c4 = config.stage_channels
        cin, heads, window = config.in_channels, config.heads, config.window

        self.enc1_res = ResidualBlock(store, "enc1.res", cin, c1)
        self.enc1_conv = ConvReluBlock(store, "enc1.conv", c1, c1)
        self.enc2_res = ResidualBlock(store, "enc2.res", c1, c2)
        self.enc2_conv = ConvReluBlock(store, "enc2.conv", c2, c2)
        self.enc3_proj_w = store.param("enc3.proj.w", (c3, c2, 1, 1), "xavier-normal")
        self.enc3_proj_b = store.param("enc3.proj.b", (c3,), "zeros")
        self.enc3_swin = [
            SwinBlock(store, f"enc3.swin{i}", c3, heads, window, i)
            for i in range(config.swin_blocks_per_stage)
        ]
        self.enc4_proj_w = store.param("enc4.proj.w", (c4, c3, 1, 1), "xavier-normal")
        self.enc4_proj_b = store.param("enc4.proj.b", (c4,), "zeros")
        self.enc4_swin = [
            SwinBlock(store, f"enc4.swin{i}", c4, heads, window, i)
            for i in range(config.swin_blocks_per_stage)
        ]

        self.dec4_mscas = Mscas(store, "dec4.mscas", c4)
        self.dec4_res = ResidualBlock(store, "dec4.res", c4 + c4, c4)
        self.dec3_mscas = Mscas(store, "dec3.mscas", c3)
        self.dec3_res = ResidualBlock(store, "dec3.res", c3 + c4, c3)
        self.dec2_mscas = Mscas(store, "dec2.mscas", c2)
        self.dec2_res = ResidualBlock(store, "dec2.res", c2 + c3, c2)

        f = config.head_filters
        self.head_conv = ConvReluBlock(store, "head.conv", c2, f)
        self.head_pa = PixelAttention(store, "head.pa", f)
        self.head_out_w = store.param("head.out.w", (1, f, 1, 1), "xavier-normal")
        self.head_out_b = store.param("head.out.b", (1,), "zeros")

    # -- parameter access ---------------------------------------------------

    def parameters(self):
        return self.store.params

    def trainable_parameters(self):
        return [p for p in self.store.params.values() if p.trainable]

    def zero_grad(self):
        for p in self.store.params.values():
            p.zero_grad()

    def manifest(self):
        return self.store.manifest()

    # -- forward ------------------------------------------------------------

    def _refined_skip(self, mscas: Mscas, skip: Tensor, training: bool) -> Tensor:
        boundary = T.sub(log_enhance(skip), skip)
        return mscas(skip, boundary, training)

    def forward(self, batch: Tensor, training: bool = False, collect_stages: bool = False):
        n, c, h, w = batch._nchw()
        if c != self.config.in_channels or (h, w) != tuple(self.config.input_hw):
            raise T.ShapeError(
                f"input shape {batch.shape} does not match config "
                f"(N,{self.config.in_channels},{self.config.input_hw[0]},{self.config.input_hw[1]})"
            )
        pool = self.config.stage_pool

        s1 = log_enhance(self.enc1_conv(self.enc1_res(batch)))
        p1 = T.pool2d(s1, pool[0], 2)
        s2 = log_enhance(self.enc2_conv(self.enc2_res(p1)))
        p2 = T.pool2d(s2, pool[1], 2)

        t3 = T.conv2d(p2, self.enc3_proj_w.tensor, self.enc3_proj_b.tensor, 1, 0)
        for blk in self.enc3_swin:
            t3 = blk(t3)
        s3 = log_enhance(t3)
        p3 = T.pool2d(s3, pool[2], 2)

        t4 = T.conv2d(p3, self.enc4_proj_w.tensor, self.enc4_proj_b.tensor, 1, 0)
        for blk in self.enc4_swin:
            t4 = blk(t4)
        s4 = log_enhance(t4)
        p4 = T.pool2d(s4, pool[3], 2)

        d = T.upsample2x(p4)
        d = self.dec4_res(T.concat_channels(self._refined_skip(self.dec4_mscas, s4, training), d))
        d = T.upsample2x(d)
        d = self.dec3_res(T.concat_channels(self._refined_skip(self.dec3_mscas, s3, training), d))
        d = T.upsample2x(d)
        d = self.dec2_res(T.concat_channels(self._refined_skip(self.dec2_mscas, s2, training), d))

        u = T.upsample2x(self.head_conv(d))
        gated = self.head_pa(log_enhance(u), u)
        out = T.sigmoid(T.conv2d(gated, self.head_out_w.tensor, self.head_out_b.tensor, 1, 0))
        if collect_stages:
            return out, [p1, p2, p3, p4]
        return out

    def predict(self, batch: Tensor) -> np.ndarray:
        """Probability map without taping (eval mode)."""
        with T.no_grad():
            return self.forward(batch, training=False).data


def _check_binary(arr: np.ndarray, what: str):
    if not np.isin(arr, (0.0, 1.0)).all():
        bad = arr[~np.isin(arr, (0.0, 1.0))]
        raise ValidationError(f"{what} must be binary 0/1, found value {bad.flat[0]!r}")


def train_step(model: Model, batch: Tensor, masks: Tensor, opt) -> float:
    """One forward/backward/update cycle; returns the pre-update loss."""
    _check_binary(masks.data, "masks")
    model.zero_grad()
    pred = model.forward(batch, training=True)
    loss = combined_loss(pred, masks)
    loss.backward()
    opt.step(model.trainable_parameters())
    return loss.item()
