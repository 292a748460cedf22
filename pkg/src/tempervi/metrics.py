"""Per-iteration training diagnostics and their CSV serialization."""

from __future__ import annotations

import csv
from dataclasses import dataclass

__all__ = ["MetricsRow", "METRICS_COLUMNS", "write_metrics_csv", "read_metrics_csv"]

METRICS_COLUMNS = ("iteration", "effective_passes", "elbo_T1", "heldout",
                   "expected_T", "rate", "wallclock_s")


@dataclass
class MetricsRow:
    """One emitted diagnostics record; optional fields are None when N/A."""

    iteration: int
    effective_passes: float
    elbo_t1: float = None
    heldout: float = None
    expected_t: float = 1.0
    rate: float = None
    wallclock_s: float = None


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return "%.10g" % value


def write_metrics_csv(rows, path, reproducible: bool = False):
    """Write rows with the fixed column set; blank wallclock in reproducible mode."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            wall = None if reproducible else row.wallclock_s
            writer.writerow([
                _fmt(row.iteration), _fmt(row.effective_passes), _fmt(row.elbo_t1),
                _fmt(row.heldout), _fmt(row.expected_t), _fmt(row.rate), _fmt(wall),
            ])


def read_metrics_csv(path):
    """Parse a metrics CSV back into MetricsRow objects."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            def get(name, cast=float):
                value = rec.get(name, "")
                return cast(value) if value not in ("", None) else None
            rows.append(MetricsRow(
                iteration=get("iteration", int),
                effective_passes=get("effective_passes"),
                elbo_t1=get("elbo_T1"),
                heldout=get("heldout"),
                expected_t=get("expected_T"),
                rate=get("rate"),
                wallclock_s=get("wallclock_s"),
            ))
    return rows
