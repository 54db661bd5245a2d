"""Word accuracy per difficulty tier and the count-weighted average."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from pean.core.errors import MetricError
from pean.core.types import Difficulty


def normalize_text(s: str) -> str:
    """Case-insensitive, alphanumeric-only comparison form."""
    return "".join(ch for ch in s.lower() if ch.isascii() and ch.isalnum())


def weighted_average(accuracies: Mapping[str, float], counts: Mapping[str, int]) -> float:
    """``sum(acc_k * N_k) / sum(N_k)`` over the tiers present in ``counts``."""
    total = sum(counts.values())
    if total <= 0:
        raise MetricError("Weighted average over zero samples")
    return sum(accuracies[k] * n for k, n in counts.items() if n) / total


def _json_float(v: float | None) -> float | str | None:
    if v is None or math.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


@dataclass
class EvalReport:
    """Accuracies are percentages; ``weighted_average`` is recomputable from the fields."""

    accuracy: dict[str, float]
    counts: dict[str, int]
    weighted_average: float
    psnr: float | None = None
    ssim: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "accuracy": dict(self.accuracy),
            "counts": dict(self.counts),
            "weighted_average": self.weighted_average,
            "psnr": _json_float(self.psnr),
            "ssim": _json_float(self.ssim),
            **self.extra,
        }


def accuracy(
    preds: Sequence[str],
    labels: Sequence[str],
    difficulties: Sequence[Difficulty | str],
) -> EvalReport:
    """Per-tier word accuracy (percent) and their count-weighted average."""
    if not len(preds) == len(labels) == len(difficulties):
        raise MetricError(
            f"Length mismatch: {len(preds)} predictions, {len(labels)} labels, {len(difficulties)} tiers"
        )
    correct = {d.value: 0 for d in Difficulty}
    counts = {d.value: 0 for d in Difficulty}
    for pred, label, diff in zip(preds, labels, difficulties):
        key = Difficulty(diff).value
        counts[key] += 1
        correct[key] += int(normalize_text(pred) == normalize_text(label))
    acc = {k: (100.0 * correct[k] / counts[k] if counts[k] else 0.0) for k in counts}
    return EvalReport(accuracy=acc, counts=counts, weighted_average=weighted_average(acc, counts))
