"""Channel-last layer wrappers around torch modules.

Feature maps travel as ``[B, H, W, C]``; torch convolutions and batch norm want
``[B, C, H, W]``, so these wrappers permute on the way in and out.
"""

from __future__ import annotations

import torch
from torch import nn

from pean.nn.functional import mish, swish


class Mish(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return mish(x)


class Swish(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return swish(x)


def to_nchw(x: torch.Tensor) -> torch.Tensor:
    return x.permute(0, 3, 1, 2).contiguous()


def to_nhwc(x: torch.Tensor) -> torch.Tensor:
    return x.permute(0, 2, 3, 1).contiguous()


class Conv2d(nn.Conv2d):
    """2-D convolution with "same" padding on channel-last input."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3, bias: bool = True) -> None:
        super().__init__(in_channels, out_channels, kernel_size, padding="same", bias=bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # type: ignore[override]
        return to_nhwc(super().forward(to_nchw(x)))


class BatchNorm2d(nn.BatchNorm2d):
    """Batch normalization over the channel (last) axis."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # type: ignore[override]
        return to_nhwc(super().forward(to_nchw(x)))


class ConvBnMish(nn.Module):
    """conv -> batch norm -> Mish; exposes the post-norm activation for tapping."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3) -> None:
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, kernel_size)
        self.bn = BatchNorm2d(out_channels)

    def forward_tapped(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        normed = self.bn(self.conv(x))
        return mish(normed), normed

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward_tapped(x)[0]


class FeedForward(nn.Module):
    """Position-wise FFN: LayerNorm -> Linear(C, rC) -> GELU -> Linear(rC, C)."""

    def __init__(self, channels: int, ratio: int = 4, zero_init: bool = False) -> None:
        super().__init__()
        self.norm = nn.LayerNorm(channels)
        self.fc1 = nn.Linear(channels, channels * ratio)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(channels * ratio, channels)
        if zero_init:
            nn.init.zeros_(self.fc2.weight)
            nn.init.zeros_(self.fc2.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(self.norm(x))))
