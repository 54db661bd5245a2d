"""Linear centered kernel alignment between activation matrices."""

from __future__ import annotations

import numpy as np
import torch

from pean.core.errors import MetricError

POOL_THRESHOLD = 8192


def _as_matrix(x: np.ndarray | torch.Tensor) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        x = x.detach().cpu().numpy()
    arr = np.asarray(x, dtype=np.float64)
    return arr.reshape(arr.shape[0], -1)


def linear_cka(x: np.ndarray | torch.Tensor, y: np.ndarray | torch.Tensor) -> float:
    """
    ``||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F)`` with column-centered inputs.

    Evaluated through the n x n Gram matrices, which give the same three norms
    without forming p x p products.
    """
    a, b = _as_matrix(x), _as_matrix(y)
    if a.shape[0] != b.shape[0]:
        raise MetricError(f"CKA needs equal sample counts, got {a.shape[0]} and {b.shape[0]}")
    if a.shape[0] < 2:
        raise MetricError("CKA needs at least two samples")
    a = a - a.mean(axis=0, keepdims=True)
    b = b - b.mean(axis=0, keepdims=True)
    ka = a @ a.T
    kb = b @ b.T
    norm_a = np.linalg.norm(ka)
    norm_b = np.linalg.norm(kb)
    if norm_a == 0.0 or norm_b == 0.0:
        raise MetricError("CKA is undefined for zero-variance activations")
    return float(np.sum(ka * kb) / (norm_a * norm_b))


def flatten_activation(t: torch.Tensor) -> torch.Tensor:
    """``[B, H, W, C] -> [B, p]``; mean-pooled over H and W when ``H*W*C`` exceeds the threshold."""
    flat = t.reshape(t.shape[0], -1)
    if flat.shape[1] > POOL_THRESHOLD and t.dim() == 4:
        return t.mean(dim=(1, 2))
    return flat


def cka_matrix(acts_a: list[np.ndarray], acts_b: list[np.ndarray]) -> np.ndarray:
    """Pairwise CKA over layers; undefined entries (zero variance) are NaN."""
    out = np.full((len(acts_a), len(acts_b)), np.nan)
    for i, a in enumerate(acts_a):
        for j, b in enumerate(acts_b):
            try:
                out[i, j] = linear_cka(a, b)
            except MetricError:
                pass
    return out
