from pean.recognizer.ctc import (
    batch_greedy_decode,
    ctc_greedy_decode,
    ctc_loss,
    min_alignment_length,
    validate_label,
)
from pean.recognizer.model import CRNN, build_recognizer, recognize

__all__ = [
    "CRNN",
    "batch_greedy_decode",
    "build_recognizer",
    "ctc_greedy_decode",
    "ctc_loss",
    "min_alignment_length",
    "recognize",
    "validate_label",
]
