"""Multi-task objective: diffusion, image and text terms."""

from pean.losses.image import edge_map, grayscale, image_loss, image_terms
from pean.losses.total import LossReport, text_loss, total_loss
from pean.tpem.loss import diffusion_loss, diffusion_terms

__all__ = [
    "LossReport",
    "diffusion_loss",
    "diffusion_terms",
    "edge_map",
    "grayscale",
    "image_loss",
    "image_terms",
    "text_loss",
    "total_loss",
]
