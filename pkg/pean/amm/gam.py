"""Global attention over tokens that merge one spatial axis into the channels."""

from __future__ import annotations

import torch
from einops import rearrange
from torch import nn

from pean.core.errors import ShapeError
from pean.nn.functional import attention
from pean.nn.layers import Conv2d, FeedForward


class MergedAxisAttention(nn.Module):
    """
    Tokens ``[N, n, span, C]`` are attended as ``n`` vectors of size ``span*C``.

    Values are projected per position before merging; queries and keys are
    projected from the merged vector down to ``qk_dim``. The attended vector
    is split back to ``[span, C]`` and projected per position.
    """

    def __init__(self, channels: int, span: int, qk_dim: int) -> None:
        super().__init__()
        self.channels = channels
        self.span = span
        self.q = nn.Linear(span * channels, qk_dim)
        self.k = nn.Linear(span * channels, qk_dim)
        self.v = nn.Linear(channels, channels)
        self.out = nn.Linear(channels, channels)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        merged = rearrange(tokens, "n t s c -> n t (s c)")
        values = rearrange(self.v(tokens), "n t s c -> n t (s c)")
        mixed = attention(self.q(merged), self.k(merged), values)
        return self.out(rearrange(mixed, "n t (s c) -> n t s c", c=self.channels))


class GlobalAttention(nn.Module):
    """
    Horizontal branch: H tokens, each a whole row merged to ``W*C``.
    Vertical branch: W tokens, each a whole column merged to ``H*C``.

    Fusion and FFN follow the local module's pattern; the FFN runs on the
    un-merged ``[H, W, C]`` map.
    """

    def __init__(
        self,
        channels: int,
        size: tuple[int, int],
        qk_dim: int = 256,
        ffn_ratio: int = 4,
        zero_init: bool = True,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.size = size
        height, width = size
        self.horizontal = MergedAxisAttention(channels, span=width, qk_dim=qk_dim)
        self.vertical = MergedAxisAttention(channels, span=height, qk_dim=qk_dim)
        self.fuse = Conv2d(2 * channels, channels, kernel_size=1)
        self.ffn = FeedForward(channels, ffn_ratio, zero_init=zero_init)
        if zero_init:
            nn.init.zeros_(self.fuse.weight)
            nn.init.zeros_(self.fuse.bias)

    def horizontal_branch(self, x: torch.Tensor) -> torch.Tensor:
        return self.horizontal(x)  # [B, H, W, C] is already [N, tokens, span, C]

    def vertical_branch(self, x: torch.Tensor) -> torch.Tensor:
        cols = rearrange(x, "b h w c -> b w h c")
        return rearrange(self.vertical(cols), "b w h c -> b h w c")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or tuple(x.shape[1:]) != (*self.size, self.channels):
            raise ShapeError(
                f"GAM expects [B, {self.size[0]}, {self.size[1]}, {self.channels}], got {tuple(x.shape)}"
            )
        glo = x + self.fuse(torch.cat([self.horizontal_branch(x), self.vertical_branch(x)], dim=-1))
        return glo + self.ffn(glo)
