"""Metrics and analysis: PSNR/SSIM, recognition accuracy, linear CKA."""

from pean.evalkit.accuracy import EvalReport, accuracy, normalize_text, weighted_average
from pean.evalkit.cka import cka_matrix, flatten_activation, linear_cka
from pean.evalkit.metrics import psnr, ssim, to_gray
from pean.evalkit.plots import save_cka_heatmap, save_comparison_grid
from pean.evalkit.study import CkaMatrix, EvalSamples, cka_study, collect_taps, evaluate_split

__all__ = [
    "CkaMatrix",
    "EvalReport",
    "EvalSamples",
    "accuracy",
    "cka_matrix",
    "cka_study",
    "collect_taps",
    "evaluate_split",
    "flatten_activation",
    "linear_cka",
    "normalize_text",
    "psnr",
    "save_cka_heatmap",
    "save_comparison_grid",
    "ssim",
    "to_gray",
    "weighted_average",
]
