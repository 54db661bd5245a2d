"""On-disk dataset: PNG pairs plus a JSONL manifest, and a torch view over it.

Directory layout::

    {root}/
        images/{id}_lr.png     # 16x64 RGB, 8-bit
        images/{id}_hr.png     # 32x128 RGB, 8-bit
        manifest.jsonl         # one ManifestEntry per line
        dataset.json           # build parameters and per-split counts
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from pean.core.errors import DatasetError
from pean.core.types import (
    CHARSET,
    Difficulty,
    Manifest,
    ManifestEntry,
    Split,
    TextImagePair,
)
from pean.data.render import render_pair, sample_style, sample_text

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
SUMMARY_NAME = "dataset.json"


# ------------------------------------------------------------------
# PNG IO
# ------------------------------------------------------------------


def write_png(img: np.ndarray, path: str | os.PathLike[str]) -> None:
    """Quantize a float [0, 1] image to 8-bit RGB and save it."""
    data = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    try:
        Image.fromarray(data).save(path, format="PNG")
    except OSError as exc:
        raise DatasetError(f"Cannot write image {str(path)!r}: {exc}") from None


def read_png(path: str | os.PathLike[str]) -> np.ndarray:
    """Load an image as float32 RGB in [0, 1]."""
    try:
        with Image.open(path) as im:
            data = np.asarray(im.convert("RGB"), dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise DatasetError(f"Cannot read image {str(path)!r}: {exc}") from None
    return data / 255.0


# ------------------------------------------------------------------
# Building
# ------------------------------------------------------------------


@dataclass
class _Job:
    entry: ManifestEntry
    seed: np.random.SeedSequence
    min_len: int
    max_len: int


def _plan(
    n_train: int,
    n_test_per_difficulty: int,
    seed: int,
    min_len: int,
    max_len: int,
) -> list[_Job]:
    tiers = list(Difficulty)
    total = n_train + n_test_per_difficulty * len(tiers)
    children = np.random.SeedSequence(seed).spawn(total)
    jobs: list[_Job] = []

    def add(sample_id: str, split: Split, difficulty: Difficulty) -> None:
        entry = ManifestEntry(
            id=sample_id,
            lr_path=f"images/{sample_id}_lr.png",
            hr_path=f"images/{sample_id}_hr.png",
            text="",
            split=split,
            difficulty=difficulty,
        )
        jobs.append(_Job(entry, children[len(jobs)], min_len, max_len))

    for i in range(n_train):
        add(f"train_{i:06d}", Split.TRAIN, tiers[i % len(tiers)])
    for diff in tiers:
        for i in range(n_test_per_difficulty):
            add(f"test_{diff.value}_{i:05d}", Split.TEST, diff)
    return jobs


def _render_job(job: _Job, root: Path) -> ManifestEntry:
    rng = np.random.default_rng(job.seed)
    text = sample_text(rng, job.min_len, job.max_len)
    style = sample_style(rng, job.entry.difficulty)
    pair = render_pair(text, style, seed=int(rng.integers(0, 2**31 - 1)))
    write_png(pair.lr, root / job.entry.lr_path)
    write_png(pair.hr, root / job.entry.hr_path)
    job.entry.text = text
    return job.entry


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(content, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise DatasetError(f"Cannot write {str(path)!r}: {exc}") from None


def build_dataset(
    n_train: int,
    n_test_per_difficulty: int,
    seed: int,
    out_dir: str | os.PathLike[str],
    *,
    min_len: int = 2,
    max_len: int = 8,
    workers: int = 4,
) -> Manifest:
    """
    Render a paired dataset into ``out_dir`` and write its manifest.

    Every sample draws from its own child of ``SeedSequence(seed)``, so the
    result does not depend on ``workers``. The manifest is written only after
    every image is on disk.
    """
    root = Path(out_dir)
    try:
        (root / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"Cannot create dataset directory {str(root)!r}: {exc}") from None

    jobs = _plan(n_train, n_test_per_difficulty, seed, min_len, max_len)
    logger.info("Rendering %d pairs into %s with %d workers", len(jobs), root, workers)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        entries = list(pool.map(lambda job: _render_job(job, root), jobs))

    manifest = Manifest(root=str(root), entries=entries)
    lines = "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in entries)
    _atomic_write(root / MANIFEST_NAME, lines)
    summary: dict[str, Any] = {
        "seed": seed,
        "n_train": n_train,
        "n_test_per_difficulty": n_test_per_difficulty,
        "min_len": min_len,
        "max_len": max_len,
        "counts": manifest.counts,
    }
    _atomic_write(root / SUMMARY_NAME, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    logger.info("Dataset counts: %s", manifest.counts)
    return manifest


# ------------------------------------------------------------------
# Loading
# ------------------------------------------------------------------


def load_manifest(root: str | os.PathLike[str]) -> Manifest:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise DatasetError(f"No manifest at {str(path)!r}; run gen-data first")
    entries: list[ManifestEntry] = []
    try:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    entry = ManifestEntry.from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise DatasetError(f"{str(path)!r} line {lineno}: {exc}") from None
                if not CHARSET.is_valid(entry.text):
                    raise DatasetError(
                        f"{str(path)!r} line {lineno}: text {entry.text!r} is not valid over the charset"
                    )
                entries.append(entry)
    except OSError as exc:
        raise DatasetError(f"Cannot read manifest {str(path)!r}: {exc}") from None
    return Manifest(root=str(root), entries=entries)


def load_pair(root: str | os.PathLike[str], entry: ManifestEntry) -> TextImagePair:
    base = Path(root)
    return TextImagePair(
        lr=read_png(base / entry.lr_path),
        hr=read_png(base / entry.hr_path),
        text=entry.text,
        difficulty=entry.difficulty,
    )


class PairDataset(Dataset):
    """Torch view over one split of a manifest; images are channel-last tensors."""

    def __init__(
        self,
        manifest: Manifest,
        split: Split | None = None,
        difficulty: Difficulty | None = None,
    ) -> None:
        entries = manifest.entries if split is None else manifest.split(split)
        if difficulty is not None:
            entries = [e for e in entries if e.difficulty == difficulty]
        self._root = manifest.root
        self._entries = entries

    @property
    def entries(self) -> list[ManifestEntry]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, idx: int) -> dict[str, Any]:
        return _pair_item(load_pair(self._root, self._entries[idx]))


def _pair_item(pair: TextImagePair) -> dict[str, Any]:
    return {
        "lr": torch.from_numpy(np.ascontiguousarray(pair.lr, dtype=np.float32)),
        "hr": torch.from_numpy(np.ascontiguousarray(pair.hr, dtype=np.float32)),
        "text": pair.text,
        "label": CHARSET.encode(pair.text),
        "difficulty": pair.difficulty.value,
    }


class PairListDataset(Dataset):
    """In-memory pairs with the same item layout as :class:`PairDataset`."""

    def __init__(self, pairs: list[TextImagePair]) -> None:
        self._pairs = list(pairs)

    def __len__(self) -> int:
        return len(self._pairs)

    def __getitem__(self, idx: int) -> dict[str, Any]:
        return _pair_item(self._pairs[idx])


def collate_pairs(items: list[dict[str, Any]]) -> dict[str, Any]:
    """Stack images; keep labels as a list of index lists (ragged)."""
    return {
        "lr": torch.stack([it["lr"] for it in items]),
        "hr": torch.stack([it["hr"] for it in items]),
        "text": [it["text"] for it in items],
        "label": [it["label"] for it in items],
        "difficulty": [it["difficulty"] for it in items],
    }


def pairs_to_batch(pairs: list[TextImagePair]) -> dict[str, Any]:
    """Batch in-memory pairs the same way ``collate_pairs`` batches loaded ones."""
    return collate_pairs([_pair_item(p) for p in pairs])
