"""Finite-difference verification of autograd gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import torch
from torch import nn

from pean.core.errors import GradCheckError


@dataclass
class GradEntry:
    name: str
    index: int  # flat index into the parameter
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    eps: float
    entries: list[GradEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    @property
    def worst(self) -> GradEntry | None:
        if not self.entries:
            return None
        return max(self.entries, key=lambda e: e.rel_error)


def _named(params: Mapping[str, torch.Tensor] | Iterable[torch.Tensor] | nn.Module) -> list[tuple[str, torch.Tensor]]:
    if isinstance(params, nn.Module):
        return [(n, p) for n, p in params.named_parameters() if p.requires_grad]
    if isinstance(params, Mapping):
        return list(params.items())
    return [(f"param{i}", p) for i, p in enumerate(params)]


def grad_check(
    f: Callable[[], torch.Tensor],
    params: Mapping[str, torch.Tensor] | Iterable[torch.Tensor] | nn.Module,
    eps: float = 1e-6,
    tol: float = 1e-4,
    *,
    max_entries_per_param: int | None = None,
    floor_ratio: float = 1e-2,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare autograd gradients of the scalar ``f()`` against central differences.

    Every parameter must be a float64 leaf tensor with ``requires_grad``.
    The relative error of one entry is ``|a - n| / max(|a|, |n|, floor)`` where
    ``floor = floor_ratio * max|a|`` over all checked entries, so entries whose
    gradient is negligible against the rest are judged on the common scale.
    ``max_entries_per_param`` samples a seeded subset of entries per tensor.
    """
    named = _named(params)
    if not named:
        raise GradCheckError("grad_check needs at least one parameter")
    for name, p in named:
        if p.dtype != torch.float64:
            raise GradCheckError(f"{name}: gradient checks require float64, got {p.dtype}")
        if not p.requires_grad:
            raise GradCheckError(f"{name}: parameter does not require grad")
        p.grad = None

    loss = f()
    if loss.numel() != 1:
        raise GradCheckError(f"f must return a scalar, got shape {tuple(loss.shape)}")
    if not torch.isfinite(loss):
        raise GradCheckError(f"Non-finite loss {loss.item()} at the unperturbed point")
    loss.backward()

    gen = torch.Generator().manual_seed(seed)
    samples: list[tuple[str, torch.Tensor, int, float]] = []
    for name, p in named:
        grad = p.grad if p.grad is not None else torch.zeros_like(p)
        flat_grad = grad.detach().reshape(-1)
        n = p.numel()
        if max_entries_per_param is not None and n > max_entries_per_param:
            indices = torch.randperm(n, generator=gen)[:max_entries_per_param].tolist()
        else:
            indices = list(range(n))
        for idx in indices:
            samples.append((name, p, idx, float(flat_grad[idx])))

    entries: list[GradEntry] = []
    with torch.no_grad():
        for name, p, idx, analytic in samples:
            flat = p.data.view(-1)
            original = flat[idx].item()
            flat[idx] = original + eps
            f_plus = f().item()
            flat[idx] = original - eps
            f_minus = f().item()
            flat[idx] = original
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise GradCheckError(f"{name}[{idx}]: non-finite loss under perturbation")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            entries.append(GradEntry(name, idx, analytic, numeric, 0.0))

    scale = max((abs(e.analytic) for e in entries), default=0.0)
    floor = max(floor_ratio * scale, 1e-12)
    for e in entries:
        denom = max(abs(e.analytic), abs(e.numeric), floor)
        e.rel_error = abs(e.analytic - e.numeric) / denom

    return GradCheckReport(
        max_rel_error=max((e.rel_error for e in entries), default=0.0),
        tol=tol,
        eps=eps,
        entries=entries,
    )
