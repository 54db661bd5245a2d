"""AMM blocks and the stack that runs them."""

from __future__ import annotations

from typing import Sequence

import torch
from torch import nn

from pean.amm.gam import GlobalAttention
from pean.amm.lam import LocalAttention
from pean.core.errors import ConfigError
from pean.core.types import LR_SIZE
from pean.nn.layers import Conv2d


class AmmBlock(nn.Module):
    """``project(concat(F_prev, F^a)) -> LAM -> GAM``; a disabled module is the identity."""

    def __init__(
        self,
        channels: int,
        size: tuple[int, int] = LR_SIZE,
        ffn_ratio: int = 4,
        qk_dim: int = 256,
        use_lam: bool = True,
        use_gam: bool = True,
        zero_init: bool = True,
    ) -> None:
        super().__init__()
        self.project = Conv2d(2 * channels, channels, kernel_size=3)
        self.lam = LocalAttention(channels, ffn_ratio, zero_init) if use_lam else None
        self.gam = GlobalAttention(channels, size, qk_dim, ffn_ratio, zero_init) if use_gam else None

    def forward(self, f_prev: torch.Tensor, f_a: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Returns the block output and its two taps (post-LAM, post-GAM)."""
        x = self.project(torch.cat([f_prev, f_a], dim=-1))
        loc = self.lam(x) if self.lam is not None else x
        out = self.gam(loc) if self.gam is not None else loc
        return out, [loc, out]


def amm_forward(
    f_prev: torch.Tensor,
    f_a: torch.Tensor,
    blocks: Sequence[AmmBlock],
    expected_blocks: int | None = None,
) -> tuple[torch.Tensor, list[torch.Tensor], list[torch.Tensor]]:
    """
    Run ``blocks`` in order, feeding each output back with ``F^a``.

    Returns ``(F_N^o, taps, block_outputs)``; ``taps`` has two entries per block.
    """
    if expected_blocks is not None and len(blocks) != expected_blocks:
        raise ConfigError(f"AMM has {len(blocks)} blocks but the config asks for {expected_blocks}")
    taps: list[torch.Tensor] = []
    outputs: list[torch.Tensor] = []
    x = f_prev
    for block in blocks:
        x, block_taps = block(x, f_a)
        taps.extend(block_taps)
        outputs.append(x)
    return x, taps, outputs


class AttentionModulation(nn.Module):
    """N stacked AMM blocks, the first fed ``F^a`` twice."""

    def __init__(
        self,
        channels: int,
        num_blocks: int = 6,
        size: tuple[int, int] = LR_SIZE,
        ffn_ratio: int = 4,
        qk_dim: int = 256,
        use_lam: bool = True,
        use_gam: bool = True,
        zero_init: bool = True,
    ) -> None:
        super().__init__()
        self.blocks = nn.ModuleList(
            AmmBlock(channels, size, ffn_ratio, qk_dim, use_lam, use_gam, zero_init)
            for _ in range(num_blocks)
        )

    def forward(self, f_a: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor], list[torch.Tensor]]:
        return amm_forward(f_a, f_a, list(self.blocks), expected_blocks=len(self.blocks))
