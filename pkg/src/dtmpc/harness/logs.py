"""CSV writers for run logs, box histories and batch summaries."""

from __future__ import annotations

import csv
from pathlib import Path

from ..smid import PARAM_NAMES
from .sim import STEP_COLUMNS, RunLog

BOX_COLUMNS = ("t",) + tuple(f"{n}_{side}" for n in PARAM_NAMES for side in ("lo", "hi"))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_run_csv(log: RunLog, path: str | Path) -> Path:
    """One row per inner step, columns in ``STEP_COLUMNS`` order."""
    path = Path(path)
    cols = [log.steps[c] for c in STEP_COLUMNS]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
    return path


def write_box_csv(log: RunLog, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOX_COLUMNS)
        for rec in log.boxes:
            vals = [v for pair in zip(rec.box.lo, rec.box.hi) for v in pair]
            w.writerow([repr(float(rec.t))] + [repr(float(v)) for v in vals])
    return path


def write_summary_csv(rows: list[dict], path: str | Path) -> Path:
    """Rows of flat dictionaries sharing the keys of the first row."""
    path = Path(path)
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r.get(k)) for k in keys])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
