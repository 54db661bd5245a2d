"""Linear-beta noise schedule and the closed-form forward process."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from pean.core.errors import ScheduleError


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Per-step arrays indexed by ``t - 1`` for ``t`` in ``1..T``.

    ``alpha_bar[t - 1] = prod(alpha[:t])``; ``alpha_bar_prev(1)`` is 1.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_min: float
    beta_max: float

    def check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ScheduleError(f"Timestep {t} outside 1..{self.T}")

    def ab(self, t: int) -> float:
        self.check_t(t)
        return float(self.alpha_bar[t - 1])

    def ab_prev(self, t: int) -> float:
        self.check_t(t)
        return 1.0 if t == 1 else float(self.alpha_bar[t - 2])

    def ddim_steps(self, S: int) -> list[int]:
        """Descending timesteps for S-step sampling, starting at T and ending near 1."""
        if not 1 <= S <= self.T:
            raise ScheduleError(f"DDIM step count S={S} must be in 1..{self.T}")
        steps = np.unique(np.linspace(self.T, 1, S).round().astype(int))[::-1]
        return [int(s) for s in steps]

    def to_dict(self) -> dict[str, float | int]:
        return {"T": self.T, "beta_min": self.beta_min, "beta_max": self.beta_max}


def make_schedule(T: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """Linear betas from ``beta_min`` to ``beta_max`` over T steps (float64)."""
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ScheduleError(
            f"Need 0 < beta_min <= beta_max < 1, got beta_min={beta_min}, beta_max={beta_max}"
        )
    beta = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar, beta_min=beta_min, beta_max=beta_max)


def q_sample(x0: torch.Tensor, t: int, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """``x_t = sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps``."""
    if eps.shape != x0.shape:
        raise ScheduleError(f"Noise shape {tuple(eps.shape)} differs from x0 shape {tuple(x0.shape)}")
    ab = schedule.ab(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def q_sample_batch(x0: torch.Tensor, t: torch.Tensor, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Per-item timesteps ``t`` ([B] ints in 1..T) for a batch ``x0`` of [B, L, A]."""
    if eps.shape != x0.shape:
        raise ScheduleError(f"Noise shape {tuple(eps.shape)} differs from x0 shape {tuple(x0.shape)}")
    if int(t.min()) < 1 or int(t.max()) > schedule.T:
        raise ScheduleError(f"Timesteps must lie in 1..{schedule.T}")
    ab = torch.as_tensor(schedule.alpha_bar, dtype=x0.dtype)[t.long() - 1].view(-1, *([1] * (x0.dim() - 1)))
    return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps
