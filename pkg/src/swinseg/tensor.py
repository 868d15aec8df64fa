"""Dense N×C×H×W tensors with taped reverse-mode gradients.

Every differentiable operation records a backward closure on the output;
``Tensor.backward`` walks the tape in reverse topological order. Storage is
float32 by default; feeding float64 arrays keeps the whole graph in float64,
which is how the finite-difference oracle gets its shadow path.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import erf, expit


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; names both shapes."""


_FLOAT_TYPES = (np.float32, np.float64)


class _GradMode(threading.local):
    enabled = True


_grad_mode = _GradMode()


class no_grad:
    """Context manager that disables tape recording (eval / predict paths)."""

    def __enter__(self):
        self._prev = _grad_mode.enabled
        _grad_mode.enabled = False
        return self

    def __exit__(self, *exc):
        _grad_mode.enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_TYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._bwd: Optional[Callable] = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def _nchw(self):
        if self.data.ndim != 4:
            raise ShapeError(f"expected NCHW tensor, got shape {self.shape}")
        return self.data.shape

    @property
    def n(self):
        return self._nchw()[0]

    @property
    def c(self):
        return self._nchw()[1]

    @property
    def h(self):
        return self._nchw()[2]

    @property
    def w(self):
        return self._nchw()[3]

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.grad is not None})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- autodiff ------------------------------------------------------------

    def backward(self, seed: Optional[np.ndarray] = None):
        """Accumulate gradients of this (scalar) value into the tape's leaves."""
        if seed is None:
            if self.data.size != 1:
                raise ShapeError(
                    f"backward() without seed needs a scalar, got shape {self.shape}"
                )
            seed = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.asarray(seed, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._bwd is not None and node.grad is not None:
                node._bwd(node.grad)

    def _accumulate(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other, self.data.dtype))

    def __radd__(self, other):
        return add(_wrap(other, self.data.dtype), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self.data.dtype))

    def __rsub__(self, other):
        return sub(_wrap(other, self.data.dtype), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self.data.dtype))

    def __rmul__(self, other):
        return mul(_wrap(other, self.data.dtype), self)

    def __truediv__(self, other):
        return div(self, _wrap(other, self.data.dtype))

    def __rtruediv__(self, other):
        return div(_wrap(other, self.data.dtype), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0, self.data.dtype))

    def __matmul__(self, other):
        return matmul(self, _wrap(other, self.data.dtype))


def _wrap(x, dtype=np.float32) -> Tensor:
    """Lift a python scalar / array to a constant Tensor in the peer's dtype."""
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], bwd: Callable) -> Tensor:
    """Create an op output, taping it only when a parent needs gradients."""
    needs = _grad_mode.enabled and any(p.requires_grad or p._bwd is not None for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.astype(g.dtype, copy=False)


# -- elementwise arithmetic ---------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g, a.data.shape).astype(a.data.dtype, copy=False))
        b._accumulate(_unbroadcast(g, b.data.shape).astype(b.data.dtype, copy=False))

    return _make(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g, a.data.shape).astype(a.data.dtype, copy=False))
        b._accumulate(_unbroadcast(-g, b.data.shape).astype(b.data.dtype, copy=False))

    return _make(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape).astype(a.data.dtype, copy=False))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape).astype(b.data.dtype, copy=False))

    return _make(out, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g / b.data, a.data.shape).astype(a.data.dtype, copy=False))
        b._accumulate(
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape).astype(
                b.data.dtype, copy=False
            )
        )

    return _make(out, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. For stacked (>2D) operands the batch dims must match."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs ≥2D operands, got {a.shape} @ {b.shape}")
    if a.data.ndim != b.data.ndim or (
        a.data.ndim > 2 and a.data.shape[:-2] != b.data.shape[:-2]
    ):
        raise ShapeError(f"matmul batch dims must match, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        a._accumulate(g @ b.data.swapaxes(-1, -2))
        b._accumulate(a.data.swapaxes(-1, -2) @ g)

    return _make(out, (a, b), bwd)


# -- shape movement -----------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    old = x.data.shape
    out = x.data.reshape(shape)

    def bwd(g):
        x._accumulate(g.reshape(old))

    return _make(out, (x,), bwd)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def bwd(g):
        x._accumulate(np.ascontiguousarray(g.transpose(inverse)))

    return _make(out, (x,), bwd)


def roll2d(x: Tensor, shift_h: int, shift_w: int) -> Tensor:
    """Cyclic roll over the two trailing spatial axes."""
    out = np.roll(x.data, (shift_h, shift_w), axis=(-2, -1))

    def bwd(g):
        x._accumulate(np.roll(g, (-shift_h, -shift_w), axis=(-2, -1)))

    return _make(out, (x,), bwd)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    na, ca, ha, wa = a._nchw()
    nb, cb, hb, wb = b._nchw()
    if (na, ha, wa) != (nb, hb, wb):
        raise ShapeError(
            f"concat_channels needs matching batch/spatial dims: {a.shape} vs {b.shape}"
        )
    out = np.concatenate([a.data, b.data], axis=1)

    def bwd(g):
        a._accumulate(np.ascontiguousarray(g[:, :ca]))
        b._accumulate(np.ascontiguousarray(g[:, ca:]))

    return _make(out, (a, b), bwd)


# -- reductions ---------------------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=True))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(ge, x.data.shape).astype(x.data.dtype, copy=True))

    return _make(out, (x,), bwd)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.data.shape[a] for a in axes]))
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            ge = np.broadcast_to(g, x.data.shape)
        else:
            ge = np.broadcast_to(g if keepdims else np.expand_dims(g, axis), x.data.shape)
        x._accumulate((ge / count).astype(x.data.dtype, copy=False))

    return _make(out, (x,), bwd)


# -- pointwise nonlinearities -------------------------------------------------


def tlog(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def bwd(g):
        x._accumulate(g / x.data)

    return _make(out, (x,), bwd)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(x.data, lo, hi)
    inside = (x.data > lo) & (x.data < hi)

    def bwd(g):
        x._accumulate(np.where(inside, g, 0).astype(x.data.dtype, copy=False))

    return _make(out, (x,), bwd)


_SQRT_2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def activate(x: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity: 'relu', 'sigmoid' or 'gelu'."""
    if kind == "relu":
        out = np.maximum(x.data, 0)

        def bwd(g):
            x._accumulate(np.where(x.data > 0, g, 0).astype(x.data.dtype, copy=False))

    elif kind == "sigmoid":
        out = expit(x.data).astype(x.data.dtype, copy=False)

        def bwd(g, s=out):
            x._accumulate((g * s * (1.0 - s)).astype(x.data.dtype, copy=False))

    elif kind == "gelu":
        cdf = 0.5 * (1.0 + erf(x.data / _SQRT_2))
        out = (x.data * cdf).astype(x.data.dtype, copy=False)

        def bwd(g, cdf=cdf):
            pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
            x._accumulate((g * (cdf + x.data * pdf)).astype(x.data.dtype, copy=False))

    else:
        raise ValueError(f"unknown activation kind: {kind!r}")
    return _make(out, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    return activate(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return activate(x, "sigmoid")


def gelu(x: Tensor) -> Tensor:
    return activate(x, "gelu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``; rows sum to 1 within 1e-6."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g, s=out):
        dot = (g * s).sum(axis=axis, keepdims=True)
        x._accumulate((s * (g - dot)).astype(x.data.dtype, copy=False))

    return _make(out, (x,), bwd)


# -- dense / convolutional kernels --------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Token-wise affine map: y = x·Wᵀ + b over the trailing feature axis."""
    dout, din = weight.data.shape
    if x.data.shape[-1] != din:
        raise ShapeError(f"linear: input dim {x.data.shape[-1]} != weight dim {din}")
    lead = x.data.shape[:-1]
    flat = reshape(x, (-1, din)) if x.data.ndim != 2 else x
    wt = transpose(weight, (1, 0))
    out = matmul(flat, wt)
    if bias is not None:
        out = add(out, bias)
    if x.data.ndim != 2:
        out = reshape(out, lead + (dout,))
    return out


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv window {kh}x{kw} too large for input {x.shape} with pad {pad}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    s = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        (n, c, ho, wo, kh, kw),
        (s[0], s[1], s[2] * stride, s[3] * stride, s[2], s[3]),
        writeable=False,
    )
    cols = view.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return cols, ho, wo


def _col2im(dcols: np.ndarray, xshape, kh, kw, stride, pad, ho, wo) -> np.ndarray:
    n, c, h, w = xshape
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d = dcols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d[
                :, :, i, j
            ]
    if pad:
        return dxp[:, :, pad : pad + h, pad : pad + w]
    return dxp


def conv2d(
    x: Tensor, weight: Tensor, bias: Optional[Tensor], stride: int = 1, pad: int = 0
) -> Tensor:
    """2D cross-correlation over NCHW input with an [outC,inC,kH,kW] kernel."""
    n, c, h, w = x._nchw()
    oc, ic, kh, kw = weight.data.shape
    if c != ic:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {ic} ({x.shape} vs {weight.shape})")
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: stride must be ≥1 and pad ≥0, got {stride}, {pad}")
    cols, ho, wo = _im2col(x.data, kh, kw, stride, pad)
    wmat = weight.data.reshape(oc, ic * kh * kw)
    out_mat = cols @ wmat.T
    if bias is not None:
        out_mat = out_mat + bias.data
    out = np.ascontiguousarray(out_mat.reshape(n, ho, wo, oc).transpose(0, 3, 1, 2))

    parents = [x, weight] if bias is None else [x, weight, bias]

    def bwd(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, oc)
        weight._accumulate((gmat.T @ cols).reshape(weight.data.shape))
        if bias is not None:
            bias._accumulate(gmat.sum(axis=0))
        dcols = gmat @ wmat
        x._accumulate(_col2im(dcols, (n, c, h, w), kh, kw, stride, pad, ho, wo))

    return _make(out, parents, bwd)


def filter2d(x: Tensor, kernel: np.ndarray) -> Tensor:
    """Depthwise correlation with one shared 2D kernel, stride 1, same padding.

    Borders are edge-replicated, so a zero-sum kernel maps constant inputs to
    exactly zero everywhere. The kernel is a constant (no gradient); the pass
    is realized as k·k shifted adds so it stays cheap at full resolution.
    """
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"filter2d kernel must be odd-sized, got {kernel.shape}")
    n, c, h, w = x._nchw()
    ph, pw = kh // 2, kw // 2
    k = kernel.astype(x.data.dtype)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode="edge")
    out = np.zeros_like(x.data)
    for i in range(kh):
        for j in range(kw):
            if k[i, j] != 0:
                out += k[i, j] * xp[:, :, i : i + h, j : j + w]

    def bwd(g):
        dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=x.data.dtype)
        for i in range(kh):
            for j in range(kw):
                if k[i, j] != 0:
                    dxp[:, :, i : i + h, j : j + w] += k[i, j] * g
        # fold replicated borders back onto their source pixels
        dxp[:, :, ph, :] += dxp[:, :, :ph, :].sum(axis=2)
        dxp[:, :, h + ph - 1, :] += dxp[:, :, h + ph :, :].sum(axis=2)
        dxp[:, :, :, pw] += dxp[:, :, :, :pw].sum(axis=3)
        dxp[:, :, :, w + pw - 1] += dxp[:, :, :, w + pw :].sum(axis=3)
        x._accumulate(dxp[:, :, ph : ph + h, pw : pw + w])

    return _make(out, (x,), bwd)


def pool2d(x: Tensor, mode: str, window: int = 2) -> Tensor:
    """Non-overlapping avg/max pooling; spatial dims must divide the window."""
    n, c, h, w = x._nchw()
    if h % window or w % window:
        raise ShapeError(
            f"pool2d: spatial dims {h}x{w} not divisible by window {window}"
        )
    ho, wo = h // window, w // window
    tiles = x.data.reshape(n, c, ho, window, wo, window)
    if mode == "avg":
        out = tiles.mean(axis=(3, 5))

        def bwd(g):
            ge = g[:, :, :, None, :, None] / (window * window)
            x._accumulate(
                np.broadcast_to(ge, (n, c, ho, window, wo, window))
                .reshape(n, c, h, w)
                .astype(x.data.dtype, copy=True)
            )

    elif mode == "max":
        flat = tiles.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, window * window)
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

        def bwd(g):
            dflat = np.zeros((n, c, ho, wo, window * window), dtype=x.data.dtype)
            np.put_along_axis(dflat, idx[..., None], g[..., None], axis=-1)
            x._accumulate(
                dflat.reshape(n, c, ho, wo, window, window)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(n, c, h, w)
            )

    else:
        raise ValueError(f"unknown pool mode: {mode!r}")
    return _make(out, (x,), bwd)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor 2× upsampling; backward sums each 2×2 fan-out."""
    n, c, h, w = x._nchw()
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bwd(g):
        x._accumulate(g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    return _make(out, (x,), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the trailing feature axis per token, then apply affine."""
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match dim {d}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bwd(g):
        dims = tuple(range(g.ndim - 1))
        gamma._accumulate((g * xhat).sum(axis=dims))
        beta._accumulate(g.sum(axis=dims))
        gx = g * gamma.data
        m1 = gx.mean(axis=-1, keepdims=True)
        m2 = (gx * xhat).mean(axis=-1, keepdims=True)
        x._accumulate((inv * (gx - m1 - xhat * m2)).astype(x.data.dtype, copy=False))

    return _make(out, (x, gamma, beta), bwd)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    eps: float = 1e-5,
    momentum: float = 0.1,
) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Training mode normalizes with batch statistics and updates the running
    buffers in place; eval mode normalizes with the running buffers (init
    stats mean 0 / var 1 before any training step).
    """
    n, c, h, w = x._nchw()
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batch_norm affine shapes do not match {c} channels")
    gshape = (1, c, 1, 1)
    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        xc = x.data - mu.reshape(gshape)
        var = (xc * xc).mean(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.astype(running_mean.dtype)
        running_var *= 1.0 - momentum
        running_var += momentum * var.astype(running_var.dtype)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv.reshape(gshape)
        out = xhat * gamma.data.reshape(gshape) + beta.data.reshape(gshape)

        def bwd(g):
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
            beta._accumulate(g.sum(axis=(0, 2, 3)))
            gx = g * gamma.data.reshape(gshape)
            m1 = gx.mean(axis=(0, 2, 3)).reshape(gshape)
            m2 = (gx * xhat).mean(axis=(0, 2, 3)).reshape(gshape)
            x._accumulate(
                (inv.reshape(gshape) * (gx - m1 - xhat * m2)).astype(
                    x.data.dtype, copy=False
                )
            )

        return _make(out, (x, gamma, beta), bwd)

    inv = 1.0 / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean.reshape(gshape)) * inv.reshape(gshape)
    out = xhat * gamma.data.reshape(gshape) + beta.data.reshape(gshape)

    def bwd_eval(g):
        gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        beta._accumulate(g.sum(axis=(0, 2, 3)))
        x._accumulate(
            (g * (gamma.data * inv).reshape(gshape)).astype(x.data.dtype, copy=False)
        )

    return _make(out, (x, gamma, beta), bwd_eval)


# -- parameters ----------------------------------------------------------------


_INIT_KINDS = ("kaiming-normal", "xavier-normal", "zeros", "ones")


class Parameter:
    """Named learnable tensor; init is a pure function of (name, seed)."""

    __slots__ = ("name", "tensor", "init", "trainable")

    def __init__(self, name: str, tensor: Tensor, init: str, trainable: bool = True):
        if init not in _INIT_KINDS:
            raise ValueError(f"unknown init kind: {init!r}")
        self.name = name
        self.tensor = tensor
        self.init = init
        self.trainable = trainable

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    def zero_grad(self):
        self.tensor.grad = None


def _name_rng(name: str, seed: int) -> np.random.Generator:
    import zlib

    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


def init_array(name: str, shape: tuple, kind: str, seed: int) -> np.ndarray:
    """Deterministic parameter init.

    kaiming-normal (fan-in, gain √2) feeds ReLU paths; xavier-normal (gain 1)
    keeps pure-linear and pre-sigmoid/softmax maps variance-preserving so the
    untrained network does not saturate.
    """
    if kind == "zeros":
        return np.zeros(shape, dtype=np.float32)
    if kind == "ones":
        return np.ones(shape, dtype=np.float32)
    if kind in ("kaiming-normal", "xavier-normal"):
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else int(shape[0])
        gain = np.sqrt(2.0) if kind == "kaiming-normal" else 1.0
        std = gain / np.sqrt(fan_in)
        rng = _name_rng(name, seed)
        return (rng.standard_normal(shape) * std).astype(np.float32)
    raise ValueError(f"unknown init kind: {kind!r}")


# -- gradient oracle ----------------------------------------------------------


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-4,
    indices: Optional[Iterable[int]] = None,
) -> float:
    """Max relative error between reverse-mode and 64-bit central differences.

    ``f`` must be scalar-valued. The analytic gradient is taken from the graph
    ``f`` builds on ``x`` (whatever precision that runs at); the numerical side
    perturbs a float64 copy of ``x`` element by element.
    """
    probe = Tensor(x.data.copy(), requires_grad=True)
    out = f(probe)
    if out.data.size != 1:
        raise ShapeError(f"grad_check needs a scalar-valued f, got shape {out.shape}")
    out.backward()
    analytic = probe.grad.reshape(-1).astype(np.float64)

    base = x.data.astype(np.float64).reshape(-1)
    idx = range(base.size) if indices is None else list(indices)
    worst = 0.0
    for i in idx:
        bumped = base.copy()
        bumped[i] = base[i] + eps
        hi = f(Tensor(bumped.reshape(x.data.shape))).item()
        bumped[i] = base[i] - eps
        lo = f(Tensor(bumped.reshape(x.data.shape))).item()
        numeric = (hi - lo) / (2.0 * eps)
        denom = max(abs(analytic[i]) + abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
