"""Versioned checkpoint container shared by the recognizer and the SR network.

Layout on disk::

    {run_dir}/{stage}/
        checkpoints/step_00000042.pt
        final.pt
        train.jsonl
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import torch

from pean.core.errors import CheckpointError
from pean.core.types import CHARSET, Stage

CHECKPOINT_VERSION = 1
FINAL_NAME = "final.pt"
_STEP_RE = re.compile(r"^step_(\d+)\.pt$")


@dataclass
class Checkpoint:
    stage: Stage
    model_state: dict[str, torch.Tensor]
    config: dict[str, Any]
    step: int = 0
    epoch: int = 0
    batch_in_epoch: int = 0
    optimizer_state: dict[str, Any] | None = None
    rng_state: torch.Tensor | None = None
    schedule: dict[str, Any] | None = None
    extra: dict[str, Any] = field(default_factory=dict)
    charset: tuple[str, ...] = CHARSET.symbols
    path: Path | None = None

    def to_payload(self) -> dict[str, Any]:
        return {
            "format_version": CHECKPOINT_VERSION,
            "charset": list(self.charset),
            "stage": self.stage.value,
            "step": self.step,
            "epoch": self.epoch,
            "batch_in_epoch": self.batch_in_epoch,
            "config": self.config,
            "schedule": self.schedule,
            "extra": self.extra,
            "model_state": self.model_state,
            "optimizer_state": self.optimizer_state,
            "rng_state": self.rng_state,
        }

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any], path: Path | None = None) -> Checkpoint:
        return cls(
            stage=Stage(payload["stage"]),
            model_state=dict(payload["model_state"]),
            config=payload["config"],
            step=int(payload.get("step", 0)),
            epoch=int(payload.get("epoch", 0)),
            batch_in_epoch=int(payload.get("batch_in_epoch", 0)),
            optimizer_state=payload.get("optimizer_state"),
            rng_state=payload.get("rng_state"),
            schedule=payload.get("schedule"),
            extra=dict(payload.get("extra") or {}),
            charset=tuple(payload["charset"]),
            path=path,
        )


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike[str]) -> Path:
    """Write atomically (temp file + rename) so a crash never leaves a torn file."""
    dest = Path(path)
    tmp = dest.with_name(dest.name + ".tmp")
    try:
        dest.parent.mkdir(parents=True, exist_ok=True)
        torch.save(ckpt.to_payload(), tmp)
        os.replace(tmp, dest)
    except OSError as exc:
        raise CheckpointError(f"Cannot write checkpoint {str(dest)!r}: {exc}") from None
    ckpt.path = dest
    return dest


def load_checkpoint(path: str | os.PathLike[str], stage: Stage | None = None) -> Checkpoint:
    src = Path(path)
    if not src.exists():
        raise CheckpointError(f"Checkpoint {str(src)!r} not found")
    try:
        payload = torch.load(src, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises a variety of unpickling errors
        raise CheckpointError(f"Checkpoint {str(src)!r} is unreadable: {exc}") from None
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{str(src)!r} is not a PEAN checkpoint")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{str(src)!r} has format version {payload['format_version']}, expected {CHECKPOINT_VERSION}"
        )
    if tuple(payload.get("charset", ())) != CHARSET.symbols:
        raise CheckpointError(f"{str(src)!r} was written for a different charset")
    ckpt = Checkpoint.from_payload(payload, path=src)
    if stage is not None and ckpt.stage != stage:
        raise CheckpointError(f"{str(src)!r} holds a {ckpt.stage.value} checkpoint, expected {stage.value}")
    return ckpt


def step_path(stage_dir: str | os.PathLike[str], step: int) -> Path:
    return Path(stage_dir) / "checkpoints" / f"step_{step:08d}.pt"


def find_latest_checkpoint(stage_dir: str | os.PathLike[str]) -> Path | None:
    """Highest-step periodic checkpoint under ``stage_dir``, or None."""
    ckpt_dir = Path(stage_dir) / "checkpoints"
    if not ckpt_dir.is_dir():
        return None
    best: tuple[int, Path] | None = None
    for p in ckpt_dir.iterdir():
        m = _STEP_RE.match(p.name)
        if m and (best is None or int(m.group(1)) > best[0]):
            best = (int(m.group(1)), p)
    return best[1] if best else None


def state_hash(state: Mapping[str, torch.Tensor]) -> str:
    """SHA-256 over parameter names, shapes, dtypes and bytes, in name order."""
    h = hashlib.sha256()
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        h.update(name.encode("utf-8"))
        h.update(str((tuple(t.shape), str(t.dtype))).encode("utf-8"))
        h.update(t.numpy().tobytes())
    return h.hexdigest()
