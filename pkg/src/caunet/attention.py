"""Bottleneck attention: channel gate, spatial gate and their residual composition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from caunet.errors import ConfigurationError, DimensionError
from caunet.tensor import (
    DEFAULT_DTYPE,
    Tensor,
    channel_reduce,
    concat_channels,
    conv2d,
    global_pool,
    parameter,
    relu,
    sigmoid,
)

SPATIAL_KERNEL = 7


def effective_reduction(channels: int, r: int) -> int:
    """Clamp ``r`` so the hidden width channels // r is at least one."""
    if r < 1:
        raise ConfigurationError(f"reduction ratio must be positive, got {r}")
    r = min(r, channels)
    if channels % r:
        raise ConfigurationError(f"channels={channels} not divisible by reduction ratio r={r}")
    return r


def _kaiming(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


@dataclass
class ChannelAttentionParams:
    w0: Tensor  # (C/r)×C×1×1, no bias
    w1: Tensor  # C×(C/r)×1×1, no bias
    r: int

    @classmethod
    def init(cls, channels: int, r: int, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        r = effective_reduction(channels, r)
        hidden = channels // r
        w0 = _kaiming(rng, (hidden, channels, 1, 1), channels, dtype)
        w1 = _kaiming(rng, (channels, hidden, 1, 1), hidden, dtype)
        return cls(parameter(w0, dtype), parameter(w1, dtype), r)

    @classmethod
    def zeros(cls, channels: int, r: int, dtype=DEFAULT_DTYPE):
        r = effective_reduction(channels, r)
        hidden = channels // r
        return cls(parameter(np.zeros((hidden, channels, 1, 1)), dtype),
                   parameter(np.zeros((channels, hidden, 1, 1)), dtype), r)

    @property
    def channels(self) -> int:
        return self.w0.shape[1]

    def tensors(self) -> dict[str, Tensor]:
        return {"w0": self.w0, "w1": self.w1}


@dataclass
class SpatialAttentionParams:
    w7: Tensor  # 1×2×7×7
    bias: Tensor  # (1,)

    @classmethod
    def init(cls, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        k = SPATIAL_KERNEL
        w = _kaiming(rng, (1, 2, k, k), 2 * k * k, dtype)
        return cls(parameter(w, dtype), parameter(np.zeros(1), dtype))

    @classmethod
    def zeros(cls, dtype=DEFAULT_DTYPE):
        k = SPATIAL_KERNEL
        return cls(parameter(np.zeros((1, 2, k, k)), dtype), parameter(np.zeros(1), dtype))

    def tensors(self) -> dict[str, Tensor]:
        return {"w7": self.w7, "bias": self.bias}


def _shared_mlp(d: Tensor, p: ChannelAttentionParams) -> Tensor:
    return conv2d(relu(conv2d(d, p.w0)), p.w1)


def channel_attention(f: Tensor, params: ChannelAttentionParams) -> Tensor:
    """Per-channel gate of shape N×C×1×1 from the avg- and max-pooled descriptors."""
    c = f.shape[1]
    if c != params.channels:
        raise DimensionError(f"channel_attention: input axis 1 has {c} channels, params expect {params.channels}")
    if c % params.r:
        raise ConfigurationError(f"channel_attention: C={c} not divisible by r={params.r}")
    avg = global_pool(f, "avg")
    mx = global_pool(f, "max")
    return sigmoid(_shared_mlp(avg, params) + _shared_mlp(mx, params))


def spatial_attention(f: Tensor, params: SpatialAttentionParams) -> Tensor:
    """Per-pixel gate of shape N×1×H×W from channel-mean and channel-max maps."""
    desc = concat_channels(channel_reduce(f, "avg"), channel_reduce(f, "max"))
    return sigmoid(conv2d(desc, params.w7, params.bias, padding=SPATIAL_KERNEL // 2))


def cbam_block(f: Tensor, cp: ChannelAttentionParams, sp: SpatialAttentionParams) -> Tensor:
    """Residual attention: f + (f * Mc(f)) * Ms(f * Mc(f))."""
    f1 = f * channel_attention(f, cp)
    f2 = f1 * spatial_attention(f1, sp)
    return f + f2


def attention_param_count(channels: int, r: int) -> int:
    r = effective_reduction(channels, r)
    return 2 * channels * (channels // r) + 2 * SPATIAL_KERNEL**2 + 1
