"""CTC loss and greedy decoding over fixed-length frame sequences."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from pean.core.errors import CTCError, ShapeError
from pean.core.types import CHARSET, Charset


def min_alignment_length(label: Sequence[int]) -> int:
    """Frames needed to emit ``label``: one per symbol plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(label, label[1:]) if a == b)
    return len(label) + repeats


def validate_label(label: Sequence[int], seq_len: int, num_classes: int, blank: int = 0) -> None:
    if len(label) == 0:
        raise CTCError("Empty label")
    for idx in label:
        if idx == blank:
            raise CTCError("Labels must not contain the blank index")
        if not 0 <= idx < num_classes:
            raise CTCError(f"Label index {idx} outside 0..{num_classes - 1}")
    need = min_alignment_length(label)
    if need > seq_len:
        raise CTCError(
            f"Label of length {len(label)} needs {need} frames but the sequence has {seq_len}"
        )


def ctc_loss(
    logits: torch.Tensor,
    labels: Sequence[int] | Sequence[Sequence[int]],
    blank: int = 0,
) -> torch.Tensor:
    """
    Negative log-likelihood of ``labels`` under per-frame ``softmax(logits)``.

    ``logits`` is ``[L, A]`` with one label, or ``[B, L, A]`` with one label per
    item; the batch result is the mean over items. Summation runs over every
    blank-augmented alignment (forward algorithm in log space).
    """
    single = logits.dim() == 2
    if single:
        logits = logits.unsqueeze(0)
        labels = [labels]  # type: ignore[list-item]
    if logits.dim() != 3:
        raise ShapeError(f"ctc_loss expects [L, A] or [B, L, A] logits, got {tuple(logits.shape)}")
    batch, seq_len, num_classes = logits.shape
    label_lists = [list(lab) for lab in labels]  # type: ignore[arg-type]
    if len(label_lists) != batch:
        raise CTCError(f"Got {len(label_lists)} labels for a batch of {batch}")
    for lab in label_lists:
        validate_label(lab, seq_len, num_classes, blank)

    log_probs = F.log_softmax(logits, dim=-1).transpose(0, 1)  # [L, B, A]
    targets = torch.tensor([i for lab in label_lists for i in lab], dtype=torch.long)
    input_lengths = torch.full((batch,), seq_len, dtype=torch.long)
    target_lengths = torch.tensor([len(lab) for lab in label_lists], dtype=torch.long)
    per_item = F.ctc_loss(
        log_probs,
        targets,
        input_lengths,
        target_lengths,
        blank=blank,
        reduction="none",
        zero_infinity=False,
    )
    return per_item[0] if single else per_item.mean()


def ctc_greedy_decode(probs: torch.Tensor | np.ndarray, charset: Charset = CHARSET) -> str:
    """Argmax per frame, collapse repeats, drop blanks. ``probs`` is ``[L, A]``."""
    arr = probs.detach().cpu().numpy() if isinstance(probs, torch.Tensor) else np.asarray(probs)
    if arr.ndim != 2:
        raise ShapeError(f"Expected [L, A] probabilities, got shape {arr.shape}")
    best = arr.argmax(axis=-1).tolist()
    out: list[int] = []
    prev = None
    for idx in best:
        if idx != prev and idx != charset.blank_index:
            out.append(idx)
        prev = idx
    return charset.decode(out)


def batch_greedy_decode(probs: torch.Tensor | np.ndarray, charset: Charset = CHARSET) -> list[str]:
    return [ctc_greedy_decode(p, charset) for p in probs]
