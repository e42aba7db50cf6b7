"""Minimal tensor engine with reverse-mode autodiff."""
from caunet.tensor.core import (
    DEFAULT_DTYPE,
    Function,
    Tensor,
    add,
    as_tensor,
    broadcast_shape,
    concat_channels,
    is_grad_enabled,
    mul,
    no_grad,
    parameter,
    relu,
    sigmoid,
)
from caunet.tensor.ops import (
    BatchNormState,
    ConvSpec,
    batchnorm2d,
    channel_reduce,
    conv2d,
    conv_transpose2d,
    dropblock,
    dropblock_gamma,
    dropblock_mask,
    global_pool,
    maxpool2d,
)

__all__ = [
    "DEFAULT_DTYPE", "Function", "Tensor", "add", "as_tensor", "broadcast_shape", "concat_channels",
    "is_grad_enabled", "mul", "no_grad", "parameter", "relu", "sigmoid", "BatchNormState", "ConvSpec",
    "batchnorm2d", "channel_reduce", "conv2d", "conv_transpose2d", "dropblock", "dropblock_gamma",
    "dropblock_mask", "global_pool", "maxpool2d",
]
