"""Parameter updates: SGD and Adam with a per-epoch multiplicative lr schedule."""

from __future__ import annotations

import numpy as np

from .model import LR_DECAY_PER_EPOCH
from .tensor import Parameter

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class Sgd:
    def __init__(self, lr: float, decay: float = LR_DECAY_PER_EPOCH):
        self.base_lr = lr
        self.lr = lr
        self.decay = decay
        self.steps = 0

    def set_epoch(self, epoch: int):
        self.lr = self.base_lr * self.decay**epoch

    def step(self, params: list[Parameter]):
        self.steps += 1
        for p in params:
            g = p.grad
            if g is None:
                continue
            p.tensor.data -= (self.lr * g).astype(p.data.dtype, copy=False)


class Adam:
    def __init__(self, lr: float, betas=ADAM_BETAS, eps: float = ADAM_EPS, decay: float = LR_DECAY_PER_EPOCH):
        self.base_lr = lr
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.decay = decay
        self.steps = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def set_epoch(self, epoch: int):
        self.lr = self.base_lr * self.decay**epoch

    def step(self, params: list[Parameter]):
        b1, b2 = self.betas
        self.steps += 1
        t = self.steps
        bias1 = 1.0 - b1**t
        bias2 = 1.0 - b2**t
        for p in params:
            g = p.grad
            if g is None:
                continue
            g = g.astype(np.float32, copy=False)
            m = self._m.get(p.name)
            if m is None:
                m = self._m[p.name] = np.zeros_like(p.data)
                self._v[p.name] = np.zeros_like(p.data)
            v = self._v[p.name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.tensor.data -= (self.lr * update).astype(p.data.dtype, copy=False)


def make_optimizer(kind: str, lr: float):
    if kind == "adam":
        return Adam(lr)
    if kind == "sgd":
        return Sgd(lr)
    raise ValueError(f"unknown optimizer kind: {kind!r}")
