"""Convolution, pooling, normalization and structured-dropout operations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from caunet.errors import ConfigurationError, ContractError, DimensionError
from caunet.tensor.core import Function, Tensor, as_tensor, mul


@dataclass(frozen=True)
class ConvSpec:
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0
    dilation: int = 1

    def __post_init__(self):
        if min(self.kernel_h, self.kernel_w, self.stride, self.dilation) < 1 or self.padding < 0:
            raise ConfigurationError(f"invalid convolution spec {self}")

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        oh = (h + 2 * self.padding - self.dilation * (self.kernel_h - 1) - 1) // self.stride + 1
        ow = (w + 2 * self.padding - self.dilation * (self.kernel_w - 1) - 1) // self.stride + 1
        if oh < 1 or ow < 1:
            raise DimensionError(f"conv2d: spec {self} gives empty output for input {h}x{w}")
        return oh, ow


def _require_4d(x: np.ndarray, op: str) -> None:
    if x.ndim != 4:
        raise DimensionError(f"{op}: expected N×C×H×W input, got shape {x.shape}")


class Conv2d(Function):
    """Cross-correlation via an explicit im2col matrix."""

    def forward(self, x, w, b, spec: ConvSpec):
        _require_4d(x, "conv2d")
        if w.ndim != 4:
            raise DimensionError(f"conv2d: weight must be 4-D, got shape {w.shape}")
        n, c, h, wd = x.shape
        o, ci, kh, kw = w.shape
        if ci != c:
            raise DimensionError(f"conv2d: weight axis 1 (in_channels={ci}) does not match input axis 1 (channels={c})")
        if b.shape != (o,):
            raise DimensionError(f"conv2d: bias shape {b.shape} does not match weight axis 0 (out_channels={o})")
        oh, ow = spec.output_size(h, wd)
        cols = _im2col(x, kh, kw, spec, oh, ow)
        w2 = w.reshape(o, -1)
        out = cols @ w2.T + b
        self.cols, self.w2, self.spec = cols, w2, spec
        self.geom = (x.shape, oh, ow, kh, kw)
        return np.ascontiguousarray(out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2))

    def backward(self, grad):
        x, w, b = self.parents
        (n, c, h, wd), oh, ow, kh, kw = self.geom
        p, s, d = self.spec.padding, self.spec.stride, self.spec.dilation
        o = w.shape[0]
        g2 = grad.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (g2.T @ self.cols).reshape(w.shape) if w.requires_grad else None
        gb = grad.sum(axis=(0, 2, 3)) if b.requires_grad else None
        gx = None
        if x.requires_grad:
            full = d * (kh - 1) - p
            if s == 1 and full >= 0 and kh == kw:
                gx = _stride1_input_grad(grad, w.data, self.spec, h, wd)
            else:
                gx = _col2im(g2 @ self.w2, self.spec, (n, c, h, wd), oh, ow, kh, kw)
        return gx, gw, gb


def _im2col(x: np.ndarray, kh: int, kw: int, spec: ConvSpec, oh: int, ow: int) -> np.ndarray:
    n, c = x.shape[:2]
    p, s, d = spec.padding, spec.stride, spec.dilation
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    eh, ew = d * (kh - 1) + 1, d * (kw - 1) + 1
    win = sliding_window_view(xp, (eh, ew), axis=(2, 3))[:, :, ::s, ::s, ::d, ::d][:, :, :oh, :ow]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)


def _col2im(gcols: np.ndarray, spec: ConvSpec, shape, oh: int, ow: int, kh: int, kw: int) -> np.ndarray:
    n, c, h, wd = shape
    p, s, d = spec.padding, spec.stride, spec.dilation
    g = gcols.reshape(n, oh, ow, c, kh, kw).transpose(4, 5, 0, 3, 1, 2)
    gxp = np.zeros((n, c, h + 2 * p, wd + 2 * p), dtype=gcols.dtype)
    for i in range(kh):
        for j in range(kw):
            ri, cj = i * d, j * d
            gxp[:, :, ri:ri + s * (oh - 1) + 1:s, cj:cj + s * (ow - 1) + 1:s] += g[i, j]
    return gxp[:, :, p:p + h, p:p + wd] if p else gxp


def _stride1_input_grad(grad: np.ndarray, w: np.ndarray, spec: ConvSpec, h: int, wd: int) -> np.ndarray:
    """Input gradient of a stride-1 conv: correlate the output gradient with the flipped kernel."""
    k, d = w.shape[2], spec.dilation
    wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    back = ConvSpec(k, k, 1, d * (k - 1) - spec.padding, d)
    oh, ow = back.output_size(*grad.shape[2:])
    cols = _im2col(grad, k, k, back, oh, ow)
    out = cols @ wt.reshape(wt.shape[0], -1).T
    n = grad.shape[0]
    return np.ascontiguousarray(out.reshape(n, oh, ow, -1).transpose(0, 3, 1, 2))[:, :, :h, :wd]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, dilation: int = 1) -> Tensor:
    spec = ConvSpec(weight.shape[2], weight.shape[3], stride, padding, dilation)
    if bias is None:
        bias = Tensor(np.zeros(weight.shape[0], dtype=weight.dtype))
    return Conv2d.apply(as_tensor(x), weight, bias, spec=spec)


class ConvTranspose2d(Function):
    """Transposed convolution with kernel == stride (non-overlapping scatter).

    Weight layout is ``C_in × C_out × k × k``.
    """

    def forward(self, x, w, b, stride: int):
        _require_4d(x, "conv_transpose2d")
        n, c, h, wd = x.shape
        ci, o, kh, kw = w.shape
        if ci != c:
            raise DimensionError(f"conv_transpose2d: weight axis 0 (in_channels={ci}) does not match input axis 1 (channels={c})")
        if kh != stride or kw != stride:
            raise ConfigurationError(f"conv_transpose2d: kernel {kh}x{kw} must equal stride {stride}")
        if b.shape != (o,):
            raise DimensionError(f"conv_transpose2d: bias shape {b.shape} does not match weight axis 1 (out_channels={o})")
        y = np.tensordot(x, w, axes=([1], [0]))  # n, h, w, o, kh, kw
        y = y.transpose(0, 3, 1, 4, 2, 5).reshape(n, o, h * kh, wd * kw)
        return y + b[None, :, None, None]

    def backward(self, grad):
        x, w, b = self.parents
        n, c, h, wd = x.shape
        _, o, kh, kw = w.shape
        g = grad.reshape(n, o, h, kh, wd, kw)
        gx = np.tensordot(g, w.data, axes=([1, 3, 5], [1, 2, 3])).transpose(0, 3, 1, 2) if x.requires_grad else None
        gw = np.tensordot(x.data, g, axes=([0, 2, 3], [0, 2, 4])) if w.requires_grad else None
        gb = grad.sum(axis=(0, 2, 3)) if b.requires_grad else None
        return gx, gw, gb


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 2) -> Tensor:
    if bias is None:
        bias = Tensor(np.zeros(weight.shape[1], dtype=weight.dtype))
    return ConvTranspose2d.apply(as_tensor(x), weight, bias, stride=stride)


class MaxPool2d(Function):
    """2×2 / stride-2 max pooling; ties route to the lowest linear index."""

    def forward(self, x):
        _require_4d(x, "maxpool2d")
        n, c, h, w = x.shape
        if h % 2:
            raise DimensionError(f"maxpool2d: axis 2 (height={h}) must be even")
        if w % 2:
            raise DimensionError(f"maxpool2d: axis 3 (width={w}) must be even")
        win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        self.arg = win.argmax(axis=-1)
        return np.take_along_axis(win, self.arg[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        (x,) = self.parents
        n, c, h, w = x.shape
        gwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad.dtype)
        np.put_along_axis(gwin, self.arg[..., None], grad[..., None], axis=-1)
        gx = gwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)


def maxpool2d(x: Tensor) -> Tensor:
    return MaxPool2d.apply(x)


class _Reduce(Function):
    """Mean or max over a set of axes, keeping dims. Max ties go to the first index."""

    axes: tuple[int, ...] = ()

    def forward(self, x, mode: str):
        _require_4d(x, type(self).__name__)
        if mode not in ("avg", "max"):
            raise ContractError(f"pool mode must be 'avg' or 'max', got {mode!r}")
        self.mode = mode
        if mode == "avg":
            return x.mean(axis=self.axes, keepdims=True)
        moved = self._flatten(x)
        self.arg = moved.argmax(axis=-1)
        out = np.take_along_axis(moved, self.arg[..., None], axis=-1)
        return self._restore(out, x.shape)

    def backward(self, grad):
        (x,) = self.parents
        if self.mode == "avg":
            count = np.prod([x.shape[a] for a in self.axes])
            return (np.broadcast_to(grad / count, x.shape).astype(grad.dtype),)
        moved_shape = self._flatten(np.empty(x.shape, dtype=np.bool_)).shape
        gm = np.zeros(moved_shape, dtype=grad.dtype)
        np.put_along_axis(gm, self.arg[..., None], self._flatten(grad), axis=-1)
        return (self._restore(gm, x.shape),)


class GlobalPool(_Reduce):
    axes = (2, 3)

    def _flatten(self, a):
        return a.reshape(a.shape[0], a.shape[1], -1)

    def _restore(self, a, shape):
        return a.reshape(shape[0], shape[1], *((1, 1) if a.shape[-1] == 1 else shape[2:]))


class ChannelReduce(_Reduce):
    axes = (1,)

    def _flatten(self, a):
        return np.moveaxis(a, 1, -1)

    def _restore(self, a, shape):
        return np.ascontiguousarray(np.moveaxis(a, -1, 1)).reshape(shape[0], a.shape[-1], *shape[2:])


def global_pool(x: Tensor, mode: str) -> Tensor:
    """Per-channel spatial mean or max, N×C×H×W -> N×C×1×1."""
    return GlobalPool.apply(x, mode=mode)


def channel_reduce(x: Tensor, mode: str) -> Tensor:
    """Per-pixel mean or max across channels, N×C×H×W -> N×1×H×W."""
    return ChannelReduce.apply(x, mode=mode)


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


class BatchNorm2d(Function):
    def forward(self, x, gamma, beta, state: BatchNormState, eps: float, momentum: float, training: bool):
        _require_4d(x, "batchnorm2d")
        n, c, h, w = x.shape
        if gamma.shape != (c,) or beta.shape != (c,):
            raise DimensionError(f"batchnorm2d: affine params must have shape ({c},) matching axis 1")
        self.training = training
        if training:
            count = n * h * w
            if count < 2:
                raise ContractError("batchnorm2d: training mode needs batch*H*W >= 2")
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            inv_std = 1.0 / np.sqrt(var + eps)
            xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
            state.running_mean[...] = (1 - momentum) * state.running_mean + momentum * mean
            state.running_var[...] = (1 - momentum) * state.running_var + momentum * var * count / (count - 1)
            self.xhat, self.inv_std, self.count = xhat, inv_std, count
            return (gamma[None, :, None, None] * xhat + beta[None, :, None, None]).astype(x.dtype, copy=False)
        inv_std = 1.0 / np.sqrt(state.running_var + eps)
        scale = gamma / np.sqrt(state.running_var + eps)
        shift = beta - state.running_mean * scale
        self.xhat = (x - state.running_mean[None, :, None, None]) * inv_std[None, :, None, None]
        self.scale = scale
        return (x * scale[None, :, None, None] + shift[None, :, None, None]).astype(x.dtype, copy=False)

    def backward(self, grad):
        x, gamma, beta = self.parents
        ggamma = (grad * self.xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = grad.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            if self.training:
                g_sum = grad.sum(axis=(0, 2, 3))[None, :, None, None]
                gx_sum = (grad * self.xhat).sum(axis=(0, 2, 3))[None, :, None, None]
                k = (gamma.data * self.inv_std / self.count)[None, :, None, None]
                gx = k * (self.count * grad - g_sum - self.xhat * gx_sum)
            else:
                gx = grad * self.scale[None, :, None, None]
        return gx, ggamma, gbeta


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool,
                eps: float = 1e-5, momentum: float = 0.1) -> Tensor:
    return BatchNorm2d.apply(x, gamma, beta, state=state, eps=eps, momentum=momentum, training=training)


def dropblock_gamma(drop_prob: float, block_size: int, h: int, w: int) -> float:
    """Seed rate that makes the expected dropped area ``drop_prob`` absent block overlap."""
    return drop_prob * (h * w) / (block_size**2 * (h - block_size + 1) * (w - block_size + 1))


def dropblock_mask(shape: tuple[int, ...], block_size: int, drop_prob: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Boolean keep-mask of shape N×1×H×W; blocks lie fully inside the map."""
    n, _, h, w = shape
    if block_size > min(h, w):
        raise ConfigurationError(f"dropblock: block_size={block_size} exceeds feature map {h}x{w}")
    gamma = min(1.0, dropblock_gamma(drop_prob, block_size, h, w))
    vh, vw = h - block_size + 1, w - block_size + 1
    seeds = rng.random((n, vh, vw)) < gamma
    dropped = np.zeros((n, h, w), dtype=bool)
    for i in range(block_size):
        for j in range(block_size):
            dropped[:, i:i + vh, j:j + vw] |= seeds
    return ~dropped[:, None]


def dropblock(x: Tensor, block_size: int, drop_prob: float, rng: np.random.Generator,
              training: bool) -> Tensor:
    """Zero contiguous square regions (shared across channels) and rescale survivors."""
    if not 0.0 <= drop_prob <= 1.0:
        raise ConfigurationError(f"dropblock: drop_prob={drop_prob} outside [0, 1]")
    if not training or drop_prob == 0.0:
        return x
    keep = dropblock_mask(x.shape, block_size, drop_prob, rng)
    kept = int(keep.sum())
    scale = keep.size / kept if kept else 0.0
    return mul(x, Tensor((keep * scale).astype(x.dtype)))
