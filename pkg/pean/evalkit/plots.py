"""PNG figures: CKA heatmaps and LR / SR / HR comparison grids."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_cka_heatmap(
    matrix: np.ndarray,
    path: str | os.PathLike[str],
    title: str = "Linear CKA",
    split: int | None = None,
) -> Path:
    """Heatmap of a layer-by-layer CKA matrix; ``split`` draws the group boundary."""
    dest = Path(path)
    dest.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(np.nan_to_num(matrix, nan=0.0), vmin=0.0, vmax=1.0, cmap="magma", origin="lower")
    if split is not None:
        for line in (ax.axhline, ax.axvline):
            line(split - 0.5, color="white", linewidth=0.8)
    ax.set_xlabel("layer (model B)")
    ax.set_ylabel("layer (model A)")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(dest, dpi=100)
    plt.close(fig)
    return dest


def save_comparison_grid(
    lr: np.ndarray,
    sr: np.ndarray,
    hr: np.ndarray,
    path: str | os.PathLike[str],
    labels: Sequence[str] | None = None,
    preds: Sequence[str] | None = None,
    max_items: int = 8,
) -> Path:
    """One row per sample with LR, SR and HR columns; titles carry label and prediction."""
    dest = Path(path)
    dest.parent.mkdir(parents=True, exist_ok=True)
    n = min(max_items, len(sr))
    fig, axes = plt.subplots(n, 3, figsize=(9, 1.2 * n + 0.4), squeeze=False)
    for i in range(n):
        for j, (name, imgs) in enumerate((("LR", lr), ("SR", sr), ("HR", hr))):
            ax = axes[i][j]
            ax.imshow(np.clip(imgs[i], 0.0, 1.0), interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            title = name
            if name == "SR" and preds is not None:
                title += f": {preds[i]}"
            if name == "HR" and labels is not None:
                title += f": {labels[i]}"
            ax.set_title(title, fontsize=8)
    fig.tight_layout()
    fig.savefig(dest, dpi=100)
    plt.close(fig)
    return dest
