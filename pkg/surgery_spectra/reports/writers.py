"""Deterministic JSON and CSV report files."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

META_NAME = "run.meta.json"


def config_hash(text: str) -> str:
    """sha256 of the canonical key=value text of a run."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _plain(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def dumps(payload: Mapping[str, Any]) -> str:
    """JSON with sorted keys; non-finite floats become null."""
    return json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n"


def write_json(path: str | Path, payload: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload), encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def write_csv(path: str | Path, rows: Iterable[Mapping[str, Any]], fieldnames: Sequence[str] | None = None) -> Path:
    """One row per mapping; columns in *fieldnames* order (default: first row's keys)."""
    rows = [_plain(row) for row in rows]
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if row.get(k) is None else (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in fieldnames})
    logger.info("Wrote %d rows to %s", len(rows), path)
    return path


def write_meta(directory: str | Path, command: str, started: datetime, extra: Mapping[str, Any] | None = None) -> Path:
    """Timestamps and host-dependent facts go to a sidecar so reports stay byte-identical."""
    finished = datetime.now(timezone.utc)
    payload = {
        "command": command,
        "started": started.isoformat(),
        "finished": finished.isoformat(),
        "seconds": (finished - started).total_seconds(),
    }
    payload.update(extra or {})
    return write_json(Path(directory) / META_NAME, payload)
