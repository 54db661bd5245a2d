"""Evaluation over a split and the layer-wise CKA comparison of two models."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import torch
from torch.utils.data import Dataset

from pean.core.errors import MetricError
from pean.core.types import PriorSource
from pean.data.dataset import collate_pairs
from pean.evalkit.accuracy import EvalReport, accuracy
from pean.evalkit.cka import cka_matrix, flatten_activation
from pean.evalkit.metrics import psnr, ssim
from pean.recognizer.ctc import batch_greedy_decode
from pean.recognizer.model import CRNN, recognize
from pean.srnet.model import PeanModel, bicubic_upsample

logger = logging.getLogger(__name__)

METHODS = ("sr", "bicubic", "hr")


def _batches(indices: Sequence[int], size: int) -> list[list[int]]:
    return [list(indices[i : i + size]) for i in range(0, len(indices), size)]


# ------------------------------------------------------------------
# Split evaluation
# ------------------------------------------------------------------


@dataclass
class EvalSamples:
    """The first few evaluated items, kept for comparison grids."""

    lr: list[np.ndarray] = field(default_factory=list)
    sr: list[np.ndarray] = field(default_factory=list)
    hr: list[np.ndarray] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    preds: list[str] = field(default_factory=list)


@torch.no_grad()
def evaluate_split(
    evaluator: CRNN,
    dataset: Dataset,
    *,
    model: PeanModel | None = None,
    method: str = "sr",
    prior_source: PriorSource | str = PriorSource.ETP,
    seed: int = 0,
    batch_size: int = 32,
    keep: int = 8,
) -> tuple[EvalReport, EvalSamples]:
    """
    Upscale every item (``sr`` via ``model``, ``bicubic`` baseline, or the
    ``hr`` ceiling), decode with the frozen evaluator, and score against HR.

    Batch ``b`` uses sampling seed ``seed + b``.
    """
    if method not in METHODS:
        raise MetricError(f"Unknown evaluation method {method!r}; expected one of {METHODS}")
    if method == "sr" and model is None:
        raise MetricError("Method 'sr' needs a model")
    source = PriorSource.parse(prior_source)
    evaluator.eval()
    ev_dtype = next(evaluator.parameters()).dtype
    if model is not None:
        model.eval()

    preds: list[str] = []
    labels: list[str] = []
    tiers: list[str] = []
    psnrs: list[float] = []
    ssims: list[float] = []
    samples = EvalSamples()
    for b, chunk in enumerate(_batches(range(len(dataset)), batch_size)):
        batch = collate_pairs([dataset[i] for i in chunk])
        lr, hr = batch["lr"], batch["hr"]
        if method == "sr":
            assert model is not None
            dtype = next(model.parameters()).dtype
            out = model(lr.to(dtype), source, hr=hr.to(dtype), seed=seed + b).sr.float()
        elif method == "bicubic":
            out = bicubic_upsample(lr)
        else:
            out = hr
        decoded = batch_greedy_decode(recognize(evaluator, out.to(ev_dtype)))
        preds.extend(decoded)
        labels.extend(batch["text"])
        tiers.extend(batch["difficulty"])
        for i in range(out.shape[0]):
            psnrs.append(psnr(out[i], hr[i]))
            ssims.append(ssim(out[i], hr[i]))
            if len(samples.sr) < keep:
                samples.lr.append(lr[i].numpy())
                samples.sr.append(out[i].numpy())
                samples.hr.append(hr[i].numpy())
                samples.labels.append(batch["text"][i])
                samples.preds.append(decoded[i])

    report = accuracy(preds, labels, tiers)
    report.psnr = float(np.mean(psnrs)) if psnrs else None
    report.ssim = float(np.mean(ssims)) if ssims else None
    report.extra = {"method": method, "n": len(preds)}
    if method == "sr":
        report.extra.update({"prior": source.value, "seed": seed})
    logger.info("%s accuracy %.2f over %d items", method, report.weighted_average, len(preds))
    return report, samples


# ------------------------------------------------------------------
# CKA study
# ------------------------------------------------------------------


@dataclass
class CkaMatrix:
    """Layer-by-layer CKA between two models; rows index model A taps."""

    matrix: np.ndarray
    n: int
    amm_taps: int
    prior_modes: tuple[str, str]
    seed: int = 0

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix)

    def group_means(self) -> dict[str, float]:
        diag = self.diagonal
        return {
            "amm": float(np.nanmean(diag[: self.amm_taps])),
            "srm": float(np.nanmean(diag[self.amm_taps :])),
            "all": float(np.nanmean(diag)),
        }

    def to_dict(self) -> dict[str, Any]:
        def clean(v: float) -> float | None:
            return None if np.isnan(v) else float(v)

        return {
            "n": self.n,
            "seed": self.seed,
            "prior_modes": list(self.prior_modes),
            "amm_layers": [0, self.amm_taps - 1],
            "srm_layers": [self.amm_taps, self.matrix.shape[0] - 1],
            "matrix": [[clean(v) for v in row] for row in self.matrix],
            "diagonal": [clean(v) for v in self.diagonal],
            "group_means": self.group_means(),
        }


@torch.no_grad()
def collect_taps(
    model: PeanModel,
    dataset: Dataset,
    indices: Sequence[int],
    prior_source: PriorSource | str,
    seed: int = 0,
    batch_size: int = 16,
) -> list[np.ndarray]:
    """Per-tap activation matrices ``[n, p]`` (spatially pooled when p is large)."""
    model.eval()
    dtype = next(model.parameters()).dtype
    per_tap: list[list[np.ndarray]] = []
    for b, chunk in enumerate(_batches(indices, batch_size)):
        batch = collate_pairs([dataset[i] for i in chunk])
        out = model(batch["lr"].to(dtype), prior_source, hr=batch["hr"].to(dtype), seed=seed + b)
        if not per_tap:
            per_tap = [[] for _ in out.taps]
        for acc, tap in zip(per_tap, out.taps):
            acc.append(flatten_activation(tap).double().numpy())
    return [np.concatenate(chunks, axis=0) for chunks in per_tap]


def cka_study(
    model_a: PeanModel,
    model_b: PeanModel,
    dataset: Dataset,
    prior_modes: tuple[PriorSource | str, PriorSource | str] = (PriorSource.ETP, PriorSource.ETP),
    n: int | None = None,
    seed: int = 0,
    batch_size: int = 16,
) -> CkaMatrix:
    """
    Compare every tap of ``model_a`` (run with ``prior_modes[0]``) with every
    tap of ``model_b`` (``prior_modes[1]``) over ``dataset``, optionally
    subsampled to ``n`` items with ``seed``.
    """
    total = len(dataset)
    if n is None or n >= total:
        indices = list(range(total))
    else:
        rng = np.random.default_rng(seed)
        indices = sorted(int(i) for i in rng.choice(total, size=n, replace=False))
    if len(indices) < 2:
        raise MetricError("CKA study needs at least two samples")
    modes = (PriorSource.parse(prior_modes[0]), PriorSource.parse(prior_modes[1]))
    acts_a = collect_taps(model_a, dataset, indices, modes[0], seed, batch_size)
    acts_b = collect_taps(model_b, dataset, indices, modes[1], seed, batch_size)
    if len(acts_a) != len(acts_b):
        raise MetricError(f"Tap counts differ: {len(acts_a)} vs {len(acts_b)}")
    matrix = cka_matrix(acts_a, acts_b)
    if np.isnan(np.diag(matrix)).any():
        logger.warning("Some layers have zero-variance activations; their CKA is undefined")
    return CkaMatrix(
        matrix=matrix,
        n=len(indices),
        amm_taps=2 * model_a.model_cfg.num_blocks,
        prior_modes=(modes[0].value, modes[1].value),
        seed=seed,
    )
