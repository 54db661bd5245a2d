"""Differentiable building blocks (channel-last) and the gradient-check harness."""

from pean.nn.functional import (
    attention,
    attention_weights,
    mish,
    pixel_shuffle,
    pixel_unshuffle,
    softplus,
    swish,
)
from pean.nn.gradcheck import GradCheckReport, GradEntry, grad_check
from pean.nn.layers import (
    BatchNorm2d,
    Conv2d,
    ConvBnMish,
    FeedForward,
    Mish,
    Swish,
    to_nchw,
    to_nhwc,
)

__all__ = [
    "BatchNorm2d",
    "Conv2d",
    "ConvBnMish",
    "FeedForward",
    "GradCheckReport",
    "GradEntry",
    "Mish",
    "Swish",
    "attention",
    "attention_weights",
    "grad_check",
    "mish",
    "pixel_shuffle",
    "pixel_unshuffle",
    "softplus",
    "swish",
    "to_nchw",
    "to_nhwc",
]
