"""JSONL run logs: a config-echo header line followed by one line per step."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from pean.core.errors import PeanError


class JsonlLogger:
    """
    Append-only JSON-lines writer.

    A fresh log starts with ``{"type": "header", ...}`` carrying the effective
    config; resumed runs append to the existing file without a new header.
    """

    def __init__(
        self,
        path: str | os.PathLike[str],
        header: dict[str, Any] | None = None,
        append: bool = False,
    ) -> None:
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not append or not self._path.exists() or self._path.stat().st_size == 0
        self._fh = open(self._path, "a" if append else "w", encoding="utf-8")
        if fresh:
            self._write({"type": "header", **(header or {})})

    @property
    def path(self) -> Path:
        return self._path

    def _write(self, record: dict[str, Any]) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def log(self, record: dict[str, Any]) -> None:
        self._write({"type": "step", **record})

    def event(self, name: str, **fields: Any) -> None:
        self._write({"type": "event", "event": name, **fields})

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> JsonlLogger:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def read_jsonl(path: str | os.PathLike[str]) -> list[dict[str, Any]]:
    try:
        with open(path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise PeanError(f"Cannot read log {str(path)!r}: {exc}") from None


def step_records(path: str | os.PathLike[str]) -> list[dict[str, Any]]:
    return [r for r in read_jsonl(path) if r.get("type") == "step"]
