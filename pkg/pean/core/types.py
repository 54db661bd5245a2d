"""Shared types and dataclasses for PEAN."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from pean.core.errors import CharsetError, ShapeError

# Geometry of the paired images (height, width) and of the prior sequence.
LR_SIZE: tuple[int, int] = (16, 64)
HR_SIZE: tuple[int, int] = (32, 128)
SEQ_LEN = 26
MAX_TEXT_LEN = 25


class Difficulty(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class PriorSource(str, Enum):
    TP_LR = "tp_lr"  # recognizer output on the LR image (P^l)
    TP_HR = "tp_hr"  # recognizer output on the paired HR image (P^h)
    ETP = "etp"  # diffusion-enhanced prior (P^e)

    @classmethod
    def parse(cls, value: str | PriorSource) -> PriorSource:
        if isinstance(value, PriorSource):
            return value
        return cls(value.replace("-", "_").lower())


class Stage(str, Enum):
    RECOGNIZER = "recognizer"
    PRETRAIN = "pretrain"
    FINETUNE = "finetune"
    INFER = "infer"


class Sampler(str, Enum):
    DDPM = "ddpm"
    DDIM = "ddim"


class TpemParadigm(str, Enum):
    DIFFUSION = "diffusion"
    REGRESSION = "regression"  # denoiser sees only P^l


@dataclass(frozen=True)
class Charset:
    """Ordered recognition alphabet; index 0 is the CTC blank."""

    symbols: tuple[str, ...]
    blank_index: int = 0

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, ch: str) -> int:
        try:
            idx = self.symbols.index(ch)
        except ValueError:
            raise CharsetError(f"Character {ch!r} is not in the charset") from None
        if idx == self.blank_index:
            raise CharsetError("The blank symbol cannot appear in a label")
        return idx

    def encode(self, text: str) -> list[int]:
        if not 1 <= len(text) <= MAX_TEXT_LEN:
            raise CharsetError(
                f"Text length must be in 1..{MAX_TEXT_LEN}, got {len(text)} for {text!r}"
            )
        label = [self.index(ch) for ch in text]
        # CTC needs a blank frame between repeated symbols
        frames = len(label) + sum(1 for a, b in zip(label, label[1:]) if a == b)
        if frames > SEQ_LEN:
            raise CharsetError(
                f"Text {text!r} needs {frames} CTC frames but the prior has {SEQ_LEN}"
            )
        return label

    def decode(self, indices: list[int]) -> str:
        return "".join(self.symbols[i] for i in indices if i != self.blank_index)

    def is_valid(self, text: str) -> bool:
        try:
            self.encode(text)
        except CharsetError:
            return False
        return True


CHARSET = Charset(symbols=("-",) + tuple("0123456789") + tuple("abcdefghijklmnopqrstuvwxyz"))
NUM_CLASSES = CHARSET.size  # 37


@dataclass
class TextImagePair:
    """Paired LR/HR crops of one rendered word, channel-last floats in [0, 1]."""

    lr: np.ndarray  # (16, 64, 3)
    hr: np.ndarray  # (32, 128, 3)
    text: str
    difficulty: Difficulty = Difficulty.EASY

    def __post_init__(self) -> None:
        if self.lr.shape != (*LR_SIZE, 3):
            raise ShapeError(f"LR image must be {(*LR_SIZE, 3)}, got {self.lr.shape}")
        if self.hr.shape != (*HR_SIZE, 3):
            raise ShapeError(f"HR image must be {(*HR_SIZE, 3)}, got {self.hr.shape}")
        CHARSET.encode(self.text)


@dataclass
class ManifestEntry:
    """One line of manifest.jsonl; paths are relative to the dataset root."""

    id: str
    lr_path: str
    hr_path: str
    text: str
    split: Split
    difficulty: Difficulty

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "lr_path": self.lr_path,
            "hr_path": self.hr_path,
            "text": self.text,
            "split": self.split.value,
            "difficulty": self.difficulty.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ManifestEntry:
        return cls(
            id=d["id"],
            lr_path=d["lr_path"],
            hr_path=d["hr_path"],
            text=d["text"],
            split=Split(d["split"]),
            difficulty=Difficulty(d["difficulty"]),
        )


@dataclass
class Manifest:
    """Result of building a dataset: entries plus per-split/difficulty counts."""

    root: str
    entries: list[ManifestEntry] = field(default_factory=list)

    def split(self, split: Split) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    @property
    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {"train": len(self.split(Split.TRAIN))}
        for diff in Difficulty:
            out[f"test_{diff.value}"] = sum(
                1 for e in self.split(Split.TEST) if e.difficulty == diff
            )
        return out
