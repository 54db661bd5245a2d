"""Text term and the weighted multi-task total."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import torch

from pean.core.config import LossWeights
from pean.core.errors import LossError
from pean.recognizer.ctc import ctc_loss

Scalar = torch.Tensor | float


def text_loss(
    arm_logits: torch.Tensor,
    labels: Sequence[int] | Sequence[Sequence[int]],
    lambda5: float = 1.0,
) -> torch.Tensor:
    return lambda5 * ctc_loss(arm_logits, labels)


@dataclass
class LossReport:
    """Raw and weighted terms of one step; ``total`` is the sum of ``weighted``."""

    raw: dict[str, float]
    weighted: dict[str, float]
    total: float
    tensor: torch.Tensor | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {"raw": dict(self.raw), "weighted": dict(self.weighted), "total": self.total}


def _as_tensor(value: Scalar) -> torch.Tensor:
    return value if isinstance(value, torch.Tensor) else torch.tensor(float(value), dtype=torch.float64)


def total_loss(
    diff: tuple[Scalar, Scalar] | None,
    img: tuple[Scalar, Scalar],
    txt: Scalar,
    weights: LossWeights,
) -> LossReport:
    """
    Weight the raw terms: ``diff = (mae, ctc)`` by lambda1/lambda2 (``None`` in
    pretraining), ``img = (mse, sfm)`` by lambda3/lambda4, ``txt`` by lambda5.
    """
    terms: list[tuple[str, Scalar, float]] = []
    if diff is not None:
        terms += [("diff_mae", diff[0], weights.lambda1), ("diff_ctc", diff[1], weights.lambda2)]
    terms += [
        ("img_mse", img[0], weights.lambda3),
        ("img_sfm", img[1], weights.lambda4),
        ("txt_ctc", txt, weights.lambda5),
    ]

    raw: dict[str, float] = {}
    weighted: dict[str, float] = {}
    tensor: torch.Tensor | None = None
    for name, value, weight in terms:
        t = _as_tensor(value)
        v = float(t.detach())
        if not math.isfinite(v):
            raise LossError(f"Loss term {name} is not finite ({v})")
        raw[name] = v
        weighted[name] = weight * v
        tensor = weight * t if tensor is None else tensor + weight * t

    total = 0.0
    for v in weighted.values():
        total += v
    return LossReport(raw=raw, weighted=weighted, total=total, tensor=tensor)
