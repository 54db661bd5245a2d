"""Per-parameter compatibility between a model's state and a checkpoint's."""

from __future__ import annotations

from typing import Mapping

import torch

from pean.core.errors import CheckpointError


def compatibility_report(
    model_state: Mapping[str, torch.Tensor],
    ckpt_state: Mapping[str, torch.Tensor],
    allow_missing: tuple[str, ...] = (),
) -> list[str]:
    """One human-readable line per incompatible parameter; empty when loadable."""
    problems: list[str] = []
    for name, tensor in ckpt_state.items():
        if name not in model_state:
            problems.append(f"{name}: unexpected in checkpoint")
        elif tuple(model_state[name].shape) != tuple(tensor.shape):
            problems.append(
                f"{name}: shape {tuple(tensor.shape)} in checkpoint, "
                f"{tuple(model_state[name].shape)} in model"
            )
    for name in model_state:
        if name not in ckpt_state and not name.startswith(allow_missing):
            problems.append(f"{name}: missing from checkpoint")
    return problems


def raise_on_problems(problems: list[str], what: str = "Checkpoint") -> None:
    if problems:
        raise CheckpointError(f"{what} is incompatible with the model", problems)
