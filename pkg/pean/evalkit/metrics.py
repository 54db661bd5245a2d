"""Full-reference image quality: PSNR and SSIM on [0, 1] images."""

from __future__ import annotations

import numpy as np
import torch
from skimage.metrics import structural_similarity

from pean.core.errors import MetricError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
LUMA = np.array([0.299, 0.587, 0.114])


def _to_numpy(img: np.ndarray | torch.Tensor) -> np.ndarray:
    if isinstance(img, torch.Tensor):
        img = img.detach().cpu().numpy()
    return np.asarray(img, dtype=np.float64)


def psnr(a: np.ndarray | torch.Tensor, b: np.ndarray | torch.Tensor, max_val: float = 1.0) -> float:
    """``10 log10(max_val^2 / MSE)``; identical images give ``inf``."""
    x, y = _to_numpy(a), _to_numpy(b)
    if x.shape != y.shape:
        raise MetricError(f"PSNR needs equal shapes, got {x.shape} and {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(max_val**2 / mse))


def to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3 and img.shape[-1] == 3:
        return img @ LUMA
    if img.ndim == 2:
        return img
    raise MetricError(f"Cannot convert shape {img.shape} to grayscale")


def ssim(a: np.ndarray | torch.Tensor, b: np.ndarray | torch.Tensor) -> float:
    """
    Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5, K1=0.01, K2=0.03)
    of the grayscale images, data range 1.
    """
    x, y = _to_numpy(a), _to_numpy(b)
    if x.shape != y.shape:
        raise MetricError(f"SSIM needs equal shapes, got {x.shape} and {y.shape}")
    gx, gy = to_gray(x), to_gray(y)
    if min(gx.shape) < SSIM_WINDOW:
        raise MetricError(f"Image {gx.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    return float(
        structural_similarity(
            gx,
            gy,
            data_range=1.0,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
            K1=0.01,
            K2=0.03,
        )
    )
