"""CA-UNet: U-shaped encoder/decoder with an attention bottleneck."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from caunet.attention import ChannelAttentionParams, SpatialAttentionParams, cbam_block
from caunet.errors import ConfigurationError, DimensionError
from caunet.tensor import (
    DEFAULT_DTYPE,
    BatchNormState,
    Tensor,
    batchnorm2d,
    concat_channels,
    conv2d,
    conv_transpose2d,
    dropblock,
    maxpool2d,
    parameter,
    relu,
    sigmoid,
)


@dataclass
class NetworkConfig:
    in_channels: int = 3
    base_channels: int = 16
    depth: int = 4
    reduction_ratio: int = 16
    dropblock_block_size: int = 7
    dropblock_prob_start: float = 0.05
    dropblock_prob_end: float = 0.25
    out_channels: int = 1
    attention: bool = True
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if min(self.in_channels, self.base_channels, self.out_channels, self.dropblock_block_size) < 1:
            raise ConfigurationError("channel counts and block size must be positive")
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        for p in (self.dropblock_prob_start, self.dropblock_prob_end):
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"dropblock probability {p} outside [0, 1]")

    @property
    def multiple(self) -> int:
        return 2**self.depth

    def stage_channels(self, level: int) -> int:
        return self.base_channels * 2**level

    @property
    def bottleneck_channels(self) -> int:
        return self.stage_channels(self.depth)

    def dropblock_prob(self, epoch_fraction: float) -> float:
        t = min(max(epoch_fraction, 0.0), 1.0)
        return self.dropblock_prob_start + t * (self.dropblock_prob_end - self.dropblock_prob_start)

    def dropblock_prob_at(self, epoch: int, epochs: int) -> float:
        """Linear schedule over a run, evaluated as start + (end − start)·e/(epochs − 1)."""
        if epochs <= 1:
            return self.dropblock_prob_start
        return self.dropblock_prob_start + (self.dropblock_prob_end - self.dropblock_prob_start) * epoch / (epochs - 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class Conv:
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator, dtype, padding: int = 0):
        fan_in = c_in * k * k
        self.weight = parameter(rng.standard_normal((c_out, c_in, k, k)) * np.sqrt(2.0 / fan_in), dtype)
        self.bias = parameter(np.zeros(c_out), dtype)
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, padding=self.padding)

    def tensors(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class UpConv:
    """2×2 / stride-2 transposed convolution halving the channel count."""

    def __init__(self, c_in: int, rng: np.random.Generator, dtype):
        if c_in % 2:
            raise ConfigurationError(f"transposed conv cannot halve odd channel count {c_in}")
        c_out = c_in // 2
        # each output pixel receives exactly one tap per input channel
        self.weight = parameter(rng.standard_normal((c_in, c_out, 2, 2)) * np.sqrt(2.0 / c_in), dtype)
        self.bias = parameter(np.zeros(c_out), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return conv_transpose2d(x, self.weight, self.bias, stride=2)

    def tensors(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class EncoderBlock:
    """conv3×3-ReLU, conv3×3-ReLU, DropBlock, BatchNorm (in that order)."""

    def __init__(self, c_in: int, c_out: int, cfg: NetworkConfig, rng: np.random.Generator, dtype):
        self.conv1 = Conv(c_in, c_out, 3, rng, dtype, padding=1)
        self.conv2 = Conv(c_out, c_out, 3, rng, dtype, padding=1)
        self.gamma = parameter(np.ones(c_out), dtype)
        self.beta = parameter(np.zeros(c_out), dtype)
        self.bn = BatchNormState.fresh(c_out, dtype)
        self.cfg = cfg

    def __call__(self, x: Tensor, training: bool, drop_prob: float, rng: np.random.Generator | None) -> Tensor:
        h = relu(self.conv2(relu(self.conv1(x))))
        if training and drop_prob > 0:
            if rng is None:
                raise ConfigurationError("training-mode forward with DropBlock needs an rng stream")
            bs = min(self.cfg.dropblock_block_size, h.shape[2], h.shape[3])
            h = dropblock(h, bs, drop_prob, rng, training=True)
        return batchnorm2d(h, self.gamma, self.beta, self.bn, training,
                           eps=self.cfg.bn_eps, momentum=self.cfg.bn_momentum)

    def tensors(self) -> dict[str, Tensor]:
        out = {f"conv1.{k}": v for k, v in self.conv1.tensors().items()}
        out.update({f"conv2.{k}": v for k, v in self.conv2.tensors().items()})
        out.update({"bn.gamma": self.gamma, "bn.beta": self.beta})
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        return {"bn.running_mean": self.bn.running_mean, "bn.running_var": self.bn.running_var}


class DecoderBlock:
    """Upsample, concatenate the skip tensor, then conv3×3-ReLU twice."""

    def __init__(self, c_in: int, rng: np.random.Generator, dtype):
        c_out = c_in // 2
        self.up = UpConv(c_in, rng, dtype)
        self.conv1 = Conv(c_in, c_out, 3, rng, dtype, padding=1)
        self.conv2 = Conv(c_out, c_out, 3, rng, dtype, padding=1)

    def __call__(self, x: Tensor, skip: Tensor) -> Tensor:
        h = concat_channels(self.up(x), skip)
        return relu(self.conv2(relu(self.conv1(h))))

    def tensors(self) -> dict[str, Tensor]:
        out = {f"up.{k}": v for k, v in self.up.tensors().items()}
        out.update({f"conv1.{k}": v for k, v in self.conv1.tensors().items()})
        out.update({f"conv2.{k}": v for k, v in self.conv2.tensors().items()})
        return out


class CAUNet:
    def __init__(self, config: NetworkConfig, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        self.config = config
        self.dtype = np.dtype(dtype)
        cfg = config
        self.encoders: list[EncoderBlock] = []
        c_prev = cfg.in_channels
        for level in range(cfg.depth + 1):
            c = cfg.stage_channels(level)
            self.encoders.append(EncoderBlock(c_prev, c, cfg, rng, dtype))
            c_prev = c
        self.channel_att: ChannelAttentionParams | None = None
        self.spatial_att: SpatialAttentionParams | None = None
        if cfg.attention:
            self.channel_att = ChannelAttentionParams.init(c_prev, cfg.reduction_ratio, rng, dtype)
            self.spatial_att = SpatialAttentionParams.init(rng, dtype)
        self.decoders = [DecoderBlock(cfg.stage_channels(level), rng, dtype) for level in range(cfg.depth, 0, -1)]
        self.head = Conv(cfg.base_channels, cfg.out_channels, 1, rng, dtype)
        self.last_shapes: list[tuple[str, tuple[int, ...]]] = []

    # -- parameters ----------------------------------------------------------
    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, blk in enumerate(self.encoders):
            out.update({f"enc{i}.{k}": v for k, v in blk.tensors().items()})
        if self.channel_att is not None:
            out.update({f"att.channel.{k}": v for k, v in self.channel_att.tensors().items()})
            out.update({f"att.spatial.{k}": v for k, v in self.spatial_att.tensors().items()})
        for i, blk in enumerate(self.decoders):
            out.update({f"dec{i}.{k}": v for k, v in blk.tensors().items()})
        out.update({f"head.{k}": v for k, v in self.head.tensors().items()})
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def named_buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, blk in enumerate(self.encoders):
            out.update({f"enc{i}.{k}": v for k, v in blk.buffers().items()})
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: v.data for k, v in self.named_parameters().items()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params, bufs = self.named_parameters(), self.named_buffers()
        expected = set(params) | set(bufs)
        if set(state) != expected:
            missing, extra = sorted(expected - set(state)), sorted(set(state) - expected)
            raise ConfigurationError(f"state mismatch: missing={missing} unexpected={extra}")
        for k, t in params.items():
            if state[k].shape != t.shape:
                raise DimensionError(f"{k}: checkpoint shape {state[k].shape} != model shape {t.shape}")
            t.data = np.array(state[k], dtype=self.dtype)
        for k, b in bufs.items():
            b[...] = state[k]

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    # -- forward ----------------------------------------------------------------
    def check_input(self, shape: tuple[int, ...]) -> None:
        if len(shape) != 4 or shape[1] != self.config.in_channels:
            raise DimensionError(f"expected N×{self.config.in_channels}×H×W input, got {shape}")
        m = self.config.multiple
        if shape[2] % m:
            raise DimensionError(f"input axis 2 (height={shape[2]}) must be a multiple of {m}")
        if shape[3] % m:
            raise DimensionError(f"input axis 3 (width={shape[3]}) must be a multiple of {m}")

    def forward(self, x: Tensor, training: bool = False, epoch_fraction: float = 0.0,
                rng: np.random.Generator | None = None, drop_prob: float | None = None) -> Tensor:
        """``drop_prob`` overrides the schedule value derived from ``epoch_fraction``."""
        self.check_input(x.shape)
        if not training:
            drop_prob = 0.0
        elif drop_prob is None:
            drop_prob = self.config.dropblock_prob(epoch_fraction)
        shapes = self.last_shapes = []
        skips = []
        h = x
        for i, blk in enumerate(self.encoders):
            if i:
                h = maxpool2d(h)
            h = blk(h, training, drop_prob, rng)
            shapes.append((f"enc{i}", h.shape))
            skips.append(h)
        if self.channel_att is not None:
            h = cbam_block(h, self.channel_att, self.spatial_att)
            shapes.append(("attention", h.shape))
        for i, (blk, skip) in enumerate(zip(self.decoders, reversed(skips[:-1]))):
            h = blk(h, skip)
            shapes.append((f"dec{i}", h.shape))
        out = sigmoid(self.head(h))
        shapes.append(("head", out.shape))
        return out

    __call__ = forward

    def param_count(self) -> int:
        return param_count(self)


def expected_shapes(config: NetworkConfig, n: int, h: int, w: int) -> list[tuple[str, tuple[int, ...]]]:
    """Closed-form activation shapes after each block."""
    out = []
    for i in range(config.depth + 1):
        out.append((f"enc{i}", (n, config.stage_channels(i), h >> i, w >> i)))
    if config.attention:
        d = config.depth
        out.append(("attention", (n, config.bottleneck_channels, h >> d, w >> d)))
    for i, level in enumerate(range(config.depth - 1, -1, -1)):
        out.append((f"dec{i}", (n, config.stage_channels(level), h >> level, w >> level)))
    out.append(("head", (n, config.out_channels, h, w)))
    return out


def build(config: NetworkConfig, rng: np.random.Generator | int, dtype=DEFAULT_DTYPE) -> CAUNet:
    """Instantiate CA-UNet with Kaiming-normal conv weights, zero biases, unit BN scale."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return CAUNet(config, rng, dtype)


def param_count(net: CAUNet) -> int:
    return int(sum(t.size for t in net.parameters()))
