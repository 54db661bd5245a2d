"""The assembled super-resolution network."""

from pean.srnet.compat import compatibility_report, raise_on_problems
from pean.srnet.model import (
    PeanModel,
    PeanOutput,
    SuperResolutionHead,
    arm_logits,
    bicubic_upsample,
    build_model,
    shallow_extract,
)

__all__ = [
    "PeanModel",
    "PeanOutput",
    "SuperResolutionHead",
    "arm_logits",
    "bicubic_upsample",
    "build_model",
    "compatibility_report",
    "raise_on_problems",
    "shallow_extract",
]
