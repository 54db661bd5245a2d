"""Feature alignment: spatial features query the text prior sequence."""

from __future__ import annotations

import torch
from einops import rearrange
from torch import nn

from pean.core.errors import ShapeError
from pean.core.types import LR_SIZE, NUM_CLASSES, SEQ_LEN
from pean.nn.functional import attention


class FeatureAlignment(nn.Module):
    """
    Cross-attention from the ``H*W`` positions of ``F^s`` to the ``L`` prior rows,
    projected back to ``C`` channels and added to ``F^s``.

    The output projection has no bias, so a zero value projection makes the
    module an exact identity on ``F^s``.
    """

    def __init__(
        self,
        channels: int,
        dim: int = 64,
        size: tuple[int, int] = LR_SIZE,
        seq_len: int = SEQ_LEN,
        num_classes: int = NUM_CLASSES,
        zero_init: bool = True,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.size = size
        self.seq_len = seq_len
        self.num_classes = num_classes
        self.pos_spatial = nn.Parameter(torch.empty(size[0] * size[1], channels))
        self.pos_prior = nn.Parameter(torch.empty(seq_len, num_classes))
        nn.init.trunc_normal_(self.pos_spatial, std=0.02)
        nn.init.trunc_normal_(self.pos_prior, std=0.02)
        self.q = nn.Linear(channels, dim)
        self.k = nn.Linear(num_classes, dim)
        self.v = nn.Linear(num_classes, dim)
        self.out = nn.Linear(dim, channels, bias=False)
        if zero_init:
            nn.init.zeros_(self.v.weight)
            nn.init.zeros_(self.v.bias)

    def forward(self, f_s: torch.Tensor, p_e: torch.Tensor) -> torch.Tensor:
        b, h, w, c = f_s.shape
        if (h, w) != self.size or c != self.channels:
            raise ShapeError(
                f"FAM expects [B, {self.size[0]}, {self.size[1]}, {self.channels}], got {tuple(f_s.shape)}"
            )
        if p_e.shape != (b, self.seq_len, self.num_classes):
            raise ShapeError(
                f"FAM expects a prior of shape [{b}, {self.seq_len}, {self.num_classes}], got {tuple(p_e.shape)}"
            )
        tokens = rearrange(f_s, "b h w c -> b (h w) c")
        prior = p_e + self.pos_prior
        q = self.q(tokens + self.pos_spatial)
        aligned = attention(q, self.k(prior), self.v(prior))
        out = tokens + self.out(aligned)
        return rearrange(out, "b (h w) c -> b h w c", h=h, w=w)


def fam_align(fam: FeatureAlignment, f_s: torch.Tensor, p_e: torch.Tensor) -> torch.Tensor:
    return fam(f_s, p_e)
