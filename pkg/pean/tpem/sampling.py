"""Reverse-process samplers producing the enhanced prior from ``P^l``.

Every sampler draws ``x_T`` first from a generator seeded per call, then any
per-step noise from the same generator, so a (weights, P^l, seed) triple fixes
the output. ``noise_scale`` multiplies the per-step noise only; 0 gives the
posterior-mean trajectory.
"""

from __future__ import annotations

import math

import torch

from pean.core.config import ScheduleConfig
from pean.core.errors import ScheduleError
from pean.core.runtime import make_generator
from pean.core.types import Sampler, TpemParadigm
from pean.tpem.denoiser import DenoiserMLP
from pean.tpem.schedule import NoiseSchedule


def _batched(p_l: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if p_l.dim() == 2:
        return p_l.unsqueeze(0), True
    return p_l, False


def _randn(like: torch.Tensor, g: torch.Generator) -> torch.Tensor:
    return torch.randn(like.shape, generator=g, dtype=like.dtype)


def ddpm_sample(
    f_theta: DenoiserMLP,
    p_l: torch.Tensor,
    schedule: NoiseSchedule,
    seed: int,
    *,
    noise_scale: float = 1.0,
) -> torch.Tensor:
    """Ancestral sampling over all T steps with the x0-parameterized posterior."""
    cond, single = _batched(p_l)
    g = make_generator(seed)
    x = _randn(cond, g)
    for t in range(schedule.T, 0, -1):
        x0_hat = f_theta(x, cond, t)
        if t == 1:
            x = x0_hat
            break
        ab_t = schedule.ab(t)
        ab_prev = schedule.ab_prev(t)
        beta_t = float(schedule.beta[t - 1])
        alpha_t = float(schedule.alpha[t - 1])
        c_x0 = math.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
        c_xt = math.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
        var = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t
        x = c_x0 * x0_hat + c_xt * x + noise_scale * math.sqrt(var) * _randn(cond, g)
    return x[0] if single else x


def ddim_sample(
    f_theta: DenoiserMLP,
    p_l: torch.Tensor,
    schedule: NoiseSchedule,
    S: int,
    seed: int,
    *,
    eta: float = 0.0,
    noise_scale: float = 1.0,
) -> torch.Tensor:
    """
    S-step sampling over the sub-sequence ``schedule.ddim_steps(S)``.

    The last visited step emits its x0 estimate directly, so ``S=1`` returns
    ``f(x_T, P^l, T)``. ``eta=0`` is deterministic given ``x_T``; ``eta=1``
    with consecutive steps reproduces the DDPM posterior variance.
    """
    if not 0.0 <= eta <= 1.0:
        raise ScheduleError(f"eta must be in [0, 1], got {eta}")
    steps = schedule.ddim_steps(S)
    cond, single = _batched(p_l)
    g = make_generator(seed)
    x = _randn(cond, g)
    out = x
    for i, t in enumerate(steps):
        x0_hat = f_theta(x, cond, t)
        if i == len(steps) - 1:
            out = x0_hat
            break
        t_prev = steps[i + 1]
        ab_t = schedule.ab(t)
        ab_prev = schedule.ab(t_prev)
        eps_hat = (x - math.sqrt(ab_t) * x0_hat) / math.sqrt(1.0 - ab_t)
        sigma = eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_prev)
        x = math.sqrt(ab_prev) * x0_hat + math.sqrt(max(1.0 - ab_prev - sigma**2, 0.0)) * eps_hat
        if sigma > 0:
            x = x + noise_scale * sigma * _randn(cond, g)
    return out[0] if single else out


def regress(f_theta: DenoiserMLP, p_l: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Regression paradigm: the denoiser sees only ``P^l`` (x_t = 0, t = T)."""
    cond, single = _batched(p_l)
    out = f_theta(torch.zeros_like(cond), cond, schedule.T)
    return out[0] if single else out


def sample_prior(
    f_theta: DenoiserMLP,
    p_l: torch.Tensor,
    schedule: NoiseSchedule,
    config: ScheduleConfig,
    seed: int,
) -> torch.Tensor:
    """Raw enhanced prior (unnormalized rows) according to ``config``."""
    if config.paradigm == TpemParadigm.REGRESSION:
        return regress(f_theta, p_l, schedule)
    if config.sampler == Sampler.DDPM:
        return ddpm_sample(f_theta, p_l, schedule, seed)
    return ddim_sample(f_theta, p_l, schedule, config.S, seed, eta=config.eta)
