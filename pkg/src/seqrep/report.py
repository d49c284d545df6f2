"""Canonical report files.

Reports are JSON with sorted keys and shortest-roundtrip floats, written
atomically, so the same results always produce byte-identical files. Wall
times never live in the report itself: they go to a `<name>.timings.json`
sidecar, keeping the main artifact stable across reruns. Curve artifacts
(margin sweeps, distance traces) are small two-column CSV files.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .checkpoint import atomic_write_bytes

__all__ = [
    "canonical_json",
    "write_report",
    "read_report",
    "timings_path",
    "write_margin_curve",
    "write_distance_curve",
    "write_curve_csv",
    "merge_reports",
]


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, no NaN, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def timings_path(report_path: str | os.PathLike) -> Path:
    """`x/report.json` -> `x/report.timings.json`."""
    p = Path(report_path)
    stem = p.stem if p.suffix == ".json" else p.name
    return p.with_name(stem + ".timings.json")


def write_report(path: str | os.PathLike, payload: dict,
                 timings: Optional[dict] = None) -> None:
    """Write a canonical report, and wall times to the sidecar if given."""
    atomic_write_bytes(path, canonical_json(payload).encode("utf-8"))
    if timings is not None:
        atomic_write_bytes(timings_path(path),
                           canonical_json(timings).encode("utf-8"))


def read_report(path: str | os.PathLike) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_curve_csv(path: str | os.PathLike, header: Sequence[str],
                    rows: Iterable[Sequence]) -> None:
    """Two-or-more column CSV with repr-exact floats."""
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row width {len(row)} does not match header {header}")
        lines.append(",".join(
            repr(float(v)) if isinstance(v, float) else str(v) for v in row
        ))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def write_margin_curve(path: str | os.PathLike, margins: Sequence[int],
                       accuracies: Sequence[float]) -> None:
    """Detection-accuracy sweep over window margins."""
    if len(margins) != len(accuracies):
        raise ValueError("margins and accuracies differ in length")
    write_curve_csv(path, ("margin", "accuracy"),
                    [(int(m), float(a)) for m, a in zip(margins, accuracies)])


def write_distance_curve(path: str | os.PathLike, offsets: Sequence[int],
                         distances: Sequence[float]) -> None:
    """Mean pair distance by window offset relative to the splice point."""
    if len(offsets) != len(distances):
        raise ValueError("offsets and distances differ in length")
    write_curve_csv(path, ("offset", "distance"),
                    [(int(o), float(d)) for o, d in zip(offsets, distances)])


def merge_reports(named: dict[str, dict]) -> dict:
    """Combine reports under their given names, newest-wins on nothing:
    duplicate names are an error, content is never deep-merged."""
    if not named:
        raise ValueError("no reports to merge")
    return {"reports": dict(sorted(named.items()))}
