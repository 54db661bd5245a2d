"""Diffusion objective: MAE against P^h plus CTC on the x0 estimate."""

from __future__ import annotations

from typing import Sequence

import torch

from pean.core.types import TpemParadigm
from pean.recognizer.ctc import ctc_loss
from pean.tpem.denoiser import DenoiserMLP
from pean.tpem.schedule import NoiseSchedule, q_sample_batch


def diffusion_terms(
    x0_hat: torch.Tensor,
    p_h: torch.Tensor,
    labels: Sequence[int] | Sequence[Sequence[int]],
) -> tuple[torch.Tensor, torch.Tensor]:
    """Unweighted ``(MAE(P^h, x0_hat), CTC(log_softmax(x0_hat), label))``."""
    mae = torch.mean(torch.abs(p_h - x0_hat))
    return mae, ctc_loss(x0_hat, labels)


def diffusion_loss(
    x0_hat: torch.Tensor,
    p_h: torch.Tensor,
    labels: Sequence[int] | Sequence[Sequence[int]],
    lambda1: float = 1.0,
    lambda2: float = 1.0,
) -> torch.Tensor:
    mae, ctc = diffusion_terms(x0_hat, p_h, labels)
    return lambda1 * mae + lambda2 * ctc


def denoiser_training_terms(
    f_theta: DenoiserMLP,
    p_l: torch.Tensor,
    p_h: torch.Tensor,
    labels: Sequence[Sequence[int]],
    schedule: NoiseSchedule,
    generator: torch.Generator,
    paradigm: TpemParadigm = TpemParadigm.DIFFUSION,
) -> tuple[torch.Tensor, torch.Tensor]:
    """
    One Monte-Carlo draw of the denoiser objective on a batch.

    Diffusion: uniform ``t`` per item, ``x_t = q_sample(P^h, t, eps)``.
    Regression: ``x_t = 0`` and ``t = T`` for every item.
    """
    batch = p_h.shape[0]
    if paradigm == TpemParadigm.REGRESSION:
        x_t = torch.zeros_like(p_h)
        t = torch.full((batch,), schedule.T, dtype=torch.long)
    else:
        t = torch.randint(1, schedule.T + 1, (batch,), generator=generator)
        eps = torch.randn(p_h.shape, generator=generator, dtype=p_h.dtype)
        x_t = q_sample_batch(p_h, t, eps, schedule)
    x0_hat = f_theta(x_t, p_l, t)
    return diffusion_terms(x0_hat, p_h, labels)
