"""MLP denoiser: predicts the clean prior from ``(x_t, P^l, t)``."""

from __future__ import annotations

import math

import torch
from torch import nn

from pean.core.errors import ShapeError
from pean.core.types import NUM_CLASSES, SEQ_LEN
from pean.nn.layers import Swish


def timestep_embedding(t: torch.Tensor, dim: int = SEQ_LEN) -> torch.Tensor:
    """Sinusoidal encoding of integer timesteps ``t`` ([B]) -> [B, dim]."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb


class DenoiserBlock(nn.Module):
    """BatchNorm -> Linear -> Swish, then add a per-row projection of the time embedding."""

    def __init__(self, in_features: int, out_features: int, seq_len: int = SEQ_LEN) -> None:
        super().__init__()
        self.norm = nn.BatchNorm1d(seq_len)
        self.fc = nn.Linear(in_features, out_features)
        self.act = Swish()
        self.time = nn.Linear(seq_len, seq_len)

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        h = self.act(self.fc(self.norm(x)))
        return h + self.time(t_emb).unsqueeze(-1)  # [B, L, 1] broadcast over features


class DenoiserMLP(nn.Module):
    """
    ``f(x_t, P^l, t) -> x0_hat``, all sequences ``[B, 26, 37]``.

    The 52-row stack of ``x_t`` and ``P^l`` is fused back to 26 rows by a
    kernel-1 1-D convolution that treats rows as channels.
    """

    def __init__(self, seq_len: int = SEQ_LEN, num_classes: int = NUM_CLASSES) -> None:
        super().__init__()
        self.seq_len = seq_len
        self.num_classes = num_classes
        self.fuse = nn.Conv1d(2 * seq_len, seq_len, kernel_size=1)
        # widths along the class axis: 37 -> 148 -> 296 -> 148 -> 37
        widths = (num_classes, 4 * num_classes, 8 * num_classes, 4 * num_classes, num_classes)
        self.blocks = nn.ModuleList(DenoiserBlock(a, b, seq_len) for a, b in zip(widths, widths[1:]))

    def forward(self, x_t: torch.Tensor, p_l: torch.Tensor, t: torch.Tensor | int) -> torch.Tensor:
        expected = (self.seq_len, self.num_classes)
        if tuple(x_t.shape[-2:]) != expected or tuple(p_l.shape[-2:]) != expected:
            raise ShapeError(
                f"Denoiser expects [B, {self.seq_len}, {self.num_classes}] inputs, "
                f"got x_t {tuple(x_t.shape)} and P^l {tuple(p_l.shape)}"
            )
        if x_t.shape != p_l.shape:
            raise ShapeError(f"x_t {tuple(x_t.shape)} and P^l {tuple(p_l.shape)} differ")
        batch = x_t.shape[0]
        if not isinstance(t, torch.Tensor):
            t = torch.full((batch,), int(t), dtype=torch.long)
        elif t.dim() == 0:
            t = t.expand(batch)
        t_emb = timestep_embedding(t, self.seq_len).to(x_t.dtype)

        h = self.fuse(torch.cat([x_t, p_l], dim=1))
        for block in self.blocks:
            h = block(h, t_emb)
        return h


def denoise(f_theta: DenoiserMLP, x_t: torch.Tensor, p_l: torch.Tensor, t: torch.Tensor | int) -> torch.Tensor:
    """x0-prediction; accepts single ``[26, 37]`` sequences or batches."""
    single = x_t.dim() == 2
    if single:
        x_t, p_l = x_t.unsqueeze(0), p_l.unsqueeze(0)
    out = f_theta(x_t, p_l, t)
    return out[0] if single else out
