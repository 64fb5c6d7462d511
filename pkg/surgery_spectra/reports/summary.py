"""Aggregate a directory of JSON reports into a plain-text table."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from surgery_spectra.reports.writers import META_NAME

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SummaryRow:
    report: str
    command: str
    passed: bool
    headline: str


def list_reports(folder: str | Path) -> list[Path]:
    """Sorted JSON reports in *folder*, excluding run metadata sidecars."""
    folder = Path(folder)
    if not folder.is_dir():
        return []
    return sorted(p for p in folder.glob("*.json") if p.name != META_NAME)


def _headline(values: dict) -> str:
    parts = []
    for key in sorted(values):
        value = values[key]
        parts.append(f"{key}={value:.6g}" if isinstance(value, float) else f"{key}={value}")
    return " ".join(parts)


def report_summary(folder: str | Path) -> list[SummaryRow]:
    rows = []
    for path in list_reports(folder):
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            rows.append(
                SummaryRow(
                    report=path.name,
                    command=str(payload["command"]),
                    passed=bool(payload["passed"]),
                    headline=_headline(payload.get("headline", {})),
                )
            )
        except (OSError, ValueError, KeyError, TypeError) as exc:
            logger.warning("Skipping unreadable report %s: %s", path, exc)
    return rows


def format_table(rows: list[SummaryRow]) -> str:
    header = ("report", "command", "status", "headline")
    body = [(r.report, r.command, "pass" if r.passed else "FAIL", r.headline) for r in rows]
    widths = [max(len(str(line[i])) for line in [header, *body]) for i in range(3)]
    lines = []
    for line in [header, *body]:
        cells = [str(line[i]).ljust(widths[i]) for i in range(3)]
        lines.append("  ".join(cells + [line[3]]).rstrip())
    return "\n".join(lines) + "\n"
