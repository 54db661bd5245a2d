"""Channel-last tensor primitives: depth/space rearrangement, activations, attention."""

from __future__ import annotations

import math

import torch
from einops import rearrange

from pean.core.errors import ShapeError


def pixel_shuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """
    Depth-to-space on a channel-last tensor ``[..., H, W, C*r*r] -> [..., H*r, W*r, C]``.

    ``out[y*r + dy, x*r + dx, c] == in[y, x, c*r*r + dy*r + dx]``.
    """
    if r < 1:
        raise ShapeError(f"Upscale factor must be >= 1, got {r}")
    if x.dim() < 3 or x.shape[-1] % (r * r) != 0:
        raise ShapeError(
            f"pixel_shuffle needs a [..., H, W, C*{r * r}] tensor, got shape {tuple(x.shape)}"
        )
    if r == 1:
        return x
    return rearrange(x, "... h w (c dy dx) -> ... (h dy) (w dx) c", dy=r, dx=r)


def pixel_unshuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Inverse of :func:`pixel_shuffle`."""
    if r < 1:
        raise ShapeError(f"Downscale factor must be >= 1, got {r}")
    if x.dim() < 3 or x.shape[-3] % r or x.shape[-2] % r:
        raise ShapeError(
            f"pixel_unshuffle needs spatial dims divisible by {r}, got shape {tuple(x.shape)}"
        )
    if r == 1:
        return x
    return rearrange(x, "... (h dy) (w dx) c -> ... h w (c dy dx)", dy=r, dx=r)


def softplus(x: torch.Tensor) -> torch.Tensor:
    # max(x, 0) + log1p(exp(-|x|)) never overflows
    return torch.clamp(x, min=0) + torch.log1p(torch.exp(-torch.abs(x)))


def mish(x: torch.Tensor) -> torch.Tensor:
    return x * torch.tanh(softplus(x))


def swish(x: torch.Tensor) -> torch.Tensor:
    return x * torch.sigmoid(x)


def attention_weights(q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    """Row-stochastic ``softmax(Q K^T / sqrt(d))`` over the last two dims."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"Q and K feature dims differ: {q.shape[-1]} vs {k.shape[-1]}")
    scores = torch.matmul(q, k.transpose(-2, -1)) / math.sqrt(q.shape[-1])
    return torch.softmax(scores, dim=-1)


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """
    Single-head scaled dot-product attention, batched over leading dims.

    ``q``: [..., n, d], ``k``: [..., m, d], ``v``: [..., m, d_v] -> [..., n, d_v].
    """
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"K and V token counts differ: {k.shape[-2]} vs {v.shape[-2]}")
    return torch.matmul(attention_weights(q, k), v)
