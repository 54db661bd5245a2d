"""Image terms: pixel MSE and the stroke-structure proxy on Sobel edge maps."""

from __future__ import annotations

from typing import Callable

import torch
import torch.nn.functional as F

from pean.core.errors import ShapeError

LUMA = (0.299, 0.587, 0.114)
EDGE_EPS = 1e-6

_SOBEL_X = ((-1.0, 0.0, 1.0), (-2.0, 0.0, 2.0), (-1.0, 0.0, 1.0))
_SOBEL_Y = ((-1.0, -2.0, -1.0), (0.0, 0.0, 0.0), (1.0, 2.0, 1.0))

StructureMap = Callable[[torch.Tensor], torch.Tensor]


def grayscale(img: torch.Tensor) -> torch.Tensor:
    """[..., H, W, 3] -> [..., H, W] with Rec. 601 luma weights."""
    weights = torch.tensor(LUMA, dtype=img.dtype, device=img.device)
    return (img * weights).sum(dim=-1)


def edge_map(img: torch.Tensor) -> torch.Tensor:
    """Sobel gradient magnitude ``sqrt(gx^2 + gy^2 + 1e-6)`` of the grayscale image, replicate-padded."""
    if img.dim() != 4 or img.shape[-1] != 3:
        raise ShapeError(f"edge_map expects [B, H, W, 3], got {tuple(img.shape)}")
    gray = F.pad(grayscale(img).unsqueeze(1), (1, 1, 1, 1), mode="replicate")
    kernels = torch.tensor((_SOBEL_X, _SOBEL_Y), dtype=img.dtype, device=img.device).unsqueeze(1)
    grads = F.conv2d(gray, kernels)  # [B, 2, H, W]
    return torch.sqrt(grads[:, 0] ** 2 + grads[:, 1] ** 2 + EDGE_EPS)


def image_terms(
    sr: torch.Tensor,
    hr: torch.Tensor,
    structure_map: StructureMap = edge_map,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Unweighted ``(MSE(sr, hr), L1(map(hr), map(sr)))``."""
    if sr.shape != hr.shape:
        raise ShapeError(f"SR {tuple(sr.shape)} and HR {tuple(hr.shape)} shapes differ")
    mse = F.mse_loss(sr, hr)
    sfm = F.l1_loss(structure_map(sr), structure_map(hr))
    return mse, sfm


def image_loss(
    sr: torch.Tensor,
    hr: torch.Tensor,
    lambda3: float = 0.8,
    lambda4: float = 75.0,
    structure_map: StructureMap = edge_map,
) -> tuple[torch.Tensor, torch.Tensor]:
    mse, sfm = image_terms(sr, hr, structure_map)
    return lambda3 * mse, lambda4 * sfm
