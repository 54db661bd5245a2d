"""Local attention: single-head attention inside row strips and column strips."""

from __future__ import annotations

import torch
from einops import rearrange
from torch import nn

from pean.core.errors import ShapeError
from pean.nn.functional import attention
from pean.nn.layers import Conv2d, FeedForward


class StripAttention(nn.Module):
    """Self-attention among the tokens of each strip: ``[N, n, C] -> [N, n, C]``."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.q = nn.Linear(channels, channels)
        self.k = nn.Linear(channels, channels)
        self.v = nn.Linear(channels, channels)
        self.out = nn.Linear(channels, channels)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.out(attention(self.q(tokens), self.k(tokens), self.v(tokens)))


def _zero_(module: nn.Module) -> None:
    for p in module.parameters():
        nn.init.zeros_(p)


class LocalAttention(nn.Module):
    """
    Horizontal branch: attention over the W positions of each row.
    Vertical branch: attention over the H positions of each column.

    ``glo = x + fuse([horizontal, vertical])`` and the result is
    ``glo + FFN(glo)``.
    """

    def __init__(self, channels: int, ffn_ratio: int = 4, zero_init: bool = True) -> None:
        super().__init__()
        self.channels = channels
        self.horizontal = StripAttention(channels)
        self.vertical = StripAttention(channels)
        self.fuse = Conv2d(2 * channels, channels, kernel_size=1)
        self.ffn = FeedForward(channels, ffn_ratio, zero_init=zero_init)
        if zero_init:
            _zero_(self.fuse)

    def horizontal_branch(self, x: torch.Tensor) -> torch.Tensor:
        b = x.shape[0]
        rows = rearrange(x, "b h w c -> (b h) w c")
        return rearrange(self.horizontal(rows), "(b h) w c -> b h w c", b=b)

    def vertical_branch(self, x: torch.Tensor) -> torch.Tensor:
        b = x.shape[0]
        cols = rearrange(x, "b h w c -> (b w) h c")
        return rearrange(self.vertical(cols), "(b w) h c -> b h w c", b=b)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[-1] != self.channels:
            raise ShapeError(f"LAM expects [B, H, W, {self.channels}], got {tuple(x.shape)}")
        glo = x + self.fuse(torch.cat([self.horizontal_branch(x), self.vertical_branch(x)], dim=-1))
        return glo + self.ffn(glo)
