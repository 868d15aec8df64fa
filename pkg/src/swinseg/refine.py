"""Feature refinement: LoG enhancement, channel attention (MSCAS), pixel attention."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

LOG_KERNEL_SIZE = 5
LOG_SIGMA = 1.0


def log_kernel(size: int = LOG_KERNEL_SIZE, sigma: float = LOG_SIGMA) -> np.ndarray:
    """Zero-sum 2D Laplacian-of-Gaussian kernel (negative center, positive ring)."""
    half = (size - 1) / 2.0
    y, x = np.mgrid[-half : half + 1, -half : half + 1]
    r2 = x * x + y * y
    g = np.exp(-r2 / (2.0 * sigma**2))
    k = g * (r2 - 2.0 * sigma**2) / (2.0 * np.pi * sigma**6 * g.sum())
    k -= k.mean()
    return k.astype(np.float64)


_LOG_KERNEL = log_kernel()


def log_enhance(x: Tensor) -> Tensor:
    """Residual edge enhancement: x plus its depthwise LoG response.

    The kernel sums to zero, so constant regions pass through unchanged.
    """
    return T.add(x, T.filter2d(x, _LOG_KERNEL))


class Mscas:
    """Channel attention over a fused boundary/global stream pair.

    concat(x_b, x_g) is squeezed to C channels by a 1×1 conv + batch norm; a
    global-average descriptor feeds a C→C fully connected layer whose softmax
    yields per-channel weights. The squeezed map is rescaled by C·s so that
    uniform attention (zero fc) is exactly the identity.
    """

    def __init__(self, store, prefix: str, channels: int):
        self.channels = channels
        self.squeeze_w = store.param(
            f"{prefix}.squeeze.w", (channels, 2 * channels, 1, 1), "xavier-normal"
        )
        self.bn_gamma = store.param(f"{prefix}.bn.gamma", (channels,), "ones")
        self.bn_beta = store.param(f"{prefix}.bn.beta", (channels,), "zeros")
        self.bn_mean = store.buffer(f"{prefix}.bn.running_mean", (channels,), 0.0)
        self.bn_var = store.buffer(f"{prefix}.bn.running_var", (channels,), 1.0)
        self.fc_w = store.param(f"{prefix}.fc.w", (channels, channels), "xavier-normal")
        self.fc_b = store.param(f"{prefix}.fc.b", (channels,), "zeros")

    def __call__(self, x_g: Tensor, x_b: Tensor, training: bool = False) -> Tensor:
        if x_g.shape != x_b.shape:
            raise T.ShapeError(
                f"stream shapes differ: global {x_g.shape} vs boundary {x_b.shape}"
            )
        fused = T.concat_channels(x_b, x_g)
        squeezed = T.batch_norm(
            T.conv2d(fused, self.squeeze_w.tensor, None, 1, 0),
            self.bn_gamma.tensor,
            self.bn_beta.tensor,
            self.bn_mean,
            self.bn_var,
            training,
        )
        z = T.tmean(squeezed, axis=(2, 3))
        p = T.linear(z, self.fc_w.tensor, self.fc_b.tensor)
        s = T.softmax(p, axis=1)
        weights = T.reshape(s * float(self.channels), (z.shape[0], self.channels, 1, 1))
        return T.mul(squeezed, weights)

    def attention_weights(self, x_g: Tensor, x_b: Tensor) -> np.ndarray:
        """Softmax channel distribution (sums to 1), for inspection/tests."""
        fused = T.concat_channels(x_b, x_g)
        squeezed = T.batch_norm(
            T.conv2d(fused, self.squeeze_w.tensor, None, 1, 0),
            self.bn_gamma.tensor,
            self.bn_beta.tensor,
            self.bn_mean,
            self.bn_var,
            False,
        )
        z = T.tmean(squeezed, axis=(2, 3))
        p = T.linear(z, self.fc_w.tensor, self.fc_b.tensor)
        return T.softmax(p, axis=1).data


class PixelAttention:
    """Single-channel spatial gate in [0,1] multiplied over all feature channels.

    h = relu(M1·z_enh + M2·s_mn + b1);  M_p = sigmoid(g·h + b2);  out = M_p ⊙ z_enh.
    """

    def __init__(self, store, prefix: str, channels: int):
        self.channels = channels
        self.m1 = store.param(f"{prefix}.m1.w", (channels, channels, 1, 1), "kaiming-normal")
        self.m2 = store.param(f"{prefix}.m2.w", (channels, channels, 1, 1), "kaiming-normal")
        self.b1 = store.param(f"{prefix}.b1", (channels,), "zeros")
        self.g = store.param(f"{prefix}.g.w", (1, channels, 1, 1), "xavier-normal")
        self.b2 = store.param(f"{prefix}.b2", (1,), "zeros")

    def __call__(self, z_enh: Tensor, s_mn: Tensor) -> Tensor:
        if z_enh.shape != s_mn.shape:
            raise T.ShapeError(
                f"pixel attention inputs differ: {z_enh.shape} vs {s_mn.shape}"
            )
        pre = T.add(
            T.conv2d(z_enh, self.m1.tensor, None, 1, 0),
            T.conv2d(s_mn, self.m2.tensor, None, 1, 0),
        )
        h = T.relu(T.add(pre, T.reshape(self.b1.tensor, (1, self.channels, 1, 1))))
        gate = T.sigmoid(
            T.add(T.conv2d(h, self.g.tensor, None, 1, 0), T.reshape(self.b2.tensor, (1, 1, 1, 1)))
        )
        return T.mul(z_enh, gate)

    def attention_map(self, z_enh: Tensor, s_mn: Tensor) -> np.ndarray:
        pre = T.add(
            T.conv2d(z_enh, self.m1.tensor, None, 1, 0),
            T.conv2d(s_mn, self.m2.tensor, None, 1, 0),
        )
        h = T.relu(T.add(pre, T.reshape(self.b1.tensor, (1, self.channels, 1, 1))))
        gate = T.sigmoid(
            T.add(T.conv2d(h, self.g.tensor, None, 1, 0), T.reshape(self.b2.tensor, (1, 1, 1, 1)))
        )
        return gate.data
