"""Parameter/buffer registry: deterministic names, (name, seed)-pure init."""

from __future__ import annotations

from typing import Dict

import numpy as np

from .tensor import Parameter, Tensor, init_array


class ParamStore:
    """Collects named parameters and running-stat buffers for one model.

    Insertion order is the manifest order; init values depend only on
    (name, seed), so two builds with the same seed are bit-identical.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self.params: Dict[str, Parameter] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    def param(self, name: str, shape: tuple, init: str) -> Parameter:
        if name in self.params or name in self.buffers:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Parameter(name, Tensor(init_array(name, shape, init, self.seed), requires_grad=True), init)
        self.params[name] = p
        return p

    def buffer(self, name: str, shape: tuple, fill: float) -> np.ndarray:
        if name in self.params or name in self.buffers:
            raise ValueError(f"duplicate buffer name: {name}")
        buf = np.full(shape, fill, dtype=np.float32)
        self.buffers[name] = buf
        return buf

    def manifest(self) -> list[tuple[str, tuple]]:
        """Ordered (name, shape) pairs: parameters first, then buffers."""
        out = [(n, tuple(p.data.shape)) for n, p in self.params.items()]
        out += [(n, tuple(b.shape)) for n, b in self.buffers.items()]
        return out
