"""Process-level runtime knobs: logging, determinism, numeric precision, timing."""

from __future__ import annotations

import logging
import os
import random
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Generator

import numpy as np
import torch

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | int | None = None) -> None:
    """Install a single stream handler on the ``pean`` logger (CLI only)."""
    if level is None:
        level = os.environ.get("PEAN_LOG_LEVEL", "INFO")
    root = logging.getLogger("pean")
    root.setLevel(level)
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_LOG_FORMAT))
        root.addHandler(handler)


def deterministic_requested() -> bool:
    return os.environ.get("PEAN_DETERMINISTIC") == "1"


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def set_deterministic(enabled: bool) -> None:
    """Bit-reproducible CPU execution: deterministic kernels, one intra-op thread."""
    torch.use_deterministic_algorithms(enabled, warn_only=False)
    if enabled:
        torch.set_num_threads(1)


@contextmanager
def use_precision(dtype: torch.dtype) -> Generator[None, None, None]:
    """Temporarily switch the default floating dtype (float64 for gradient checks)."""
    previous = torch.get_default_dtype()
    torch.set_default_dtype(dtype)
    try:
        yield
    finally:
        torch.set_default_dtype(previous)


def make_generator(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


@dataclass
class Stopwatch:
    """Accumulates wall-clock milliseconds per named phase."""

    records: dict[str, list[float]] = field(default_factory=dict)

    @contextmanager
    def measure(self, phase: str) -> Generator[None, None, None]:
        t0 = time.monotonic()
        try:
            yield
        finally:
            self.records.setdefault(phase, []).append((time.monotonic() - t0) * 1000)

    def avg_ms(self, phase: str) -> float:
        recs = self.records.get(phase, [])
        return sum(recs) / len(recs) if recs else 0.0

    def summary(self) -> dict[str, dict[str, float]]:
        return {
            phase: {
                "avg_ms": round(self.avg_ms(phase), 3),
                "max_ms": round(max(recs), 3),
                "count": len(recs),
            }
            for phase, recs in sorted(self.records.items())
        }
