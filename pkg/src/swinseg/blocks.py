"""Convolutional building blocks: residual conv blocks, conv-ReLU, and the token MLP.

The residual block computes relu(w2·relu(w1·x) + shortcut): a 1×1 channel
transformation, a 3×3 projection (pad 1, so spatial size is preserved), and an
identity shortcut that becomes a learned 1×1 projection when the channel count
changes.
"""

from __future__ import annotations

from . import tensor as T
from .tensor import Tensor

MLP_HIDDEN_RATIO = 4


class ResidualBlock:
    def __init__(self, store, prefix: str, c_in: int, c_out: int):
        self.c_in = c_in
        self.c_out = c_out
        self.conv1_w = store.param(f"{prefix}.conv1.w", (c_out, c_in, 1, 1), "kaiming-normal")
        self.conv1_b = store.param(f"{prefix}.conv1.b", (c_out,), "zeros")
        self.conv2_w = store.param(f"{prefix}.conv2.w", (c_out, c_out, 3, 3), "xavier-normal")
        self.conv2_b = store.param(f"{prefix}.conv2.b", (c_out,), "zeros")
        if c_in != c_out:
            self.proj_w = store.param(f"{prefix}.proj.w", (c_out, c_in, 1, 1), "xavier-normal")
            self.proj_b = store.param(f"{prefix}.proj.b", (c_out,), "zeros")
        else:
            self.proj_w = None
            self.proj_b = None

    def __call__(self, x: Tensor) -> Tensor:
        if x.c != self.c_in:
            raise T.ShapeError(
                f"residual block expects {self.c_in} channels, got {x.c} ({x.shape})"
            )
        t = T.relu(T.conv2d(x, self.conv1_w.tensor, self.conv1_b.tensor, 1, 0))
        t = T.conv2d(t, self.conv2_w.tensor, self.conv2_b.tensor, 1, 1)
        if self.proj_w is not None:
            shortcut = T.conv2d(x, self.proj_w.tensor, self.proj_b.tensor, 1, 0)
        else:
            shortcut = x
        return T.relu(T.add(t, shortcut))


class ConvReluBlock:
    """3×3 conv (stride 1, pad 1) followed by ReLU."""

    def __init__(self, store, prefix: str, c_in: int, c_out: int):
        self.w = store.param(f"{prefix}.w", (c_out, c_in, 3, 3), "kaiming-normal")
        self.b = store.param(f"{prefix}.b", (c_out,), "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return T.relu(T.conv2d(x, self.w.tensor, self.b.tensor, 1, 1))


class Mlp:
    """Token-wise two-layer perceptron with GELU and hidden width 4·D."""

    def __init__(self, store, prefix: str, dim: int):
        hidden = MLP_HIDDEN_RATIO * dim
        self.fc1_w = store.param(f"{prefix}.fc1.w", (hidden, dim), "kaiming-normal")
        self.fc1_b = store.param(f"{prefix}.fc1.b", (hidden,), "zeros")
        self.fc2_w = store.param(f"{prefix}.fc2.w", (dim, hidden), "xavier-normal")
        self.fc2_b = store.param(f"{prefix}.fc2.b", (dim,), "zeros")

    def __call__(self, tokens: Tensor) -> Tensor:
        h = T.gelu(T.linear(tokens, self.fc1_w.tensor, self.fc1_b.tensor))
        return T.linear(h, self.fc2_w.tensor, self.fc2_b.tensor)
