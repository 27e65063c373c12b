"""CSV readers and writers for grid snapshots, logs and fitted parameters."""
from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json_atomic(path, payload) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


@dataclass(frozen=True)
class GridSnapshots:
    """Time-indexed values on a fixed point set, as read from ``t, x_km, y_km, value`` CSV."""

    times: np.ndarray
    points: np.ndarray
    values: np.ndarray  # (n_times, n_points)


def read_grid_csv(path, value_column: str = "value", component: str | None = None) -> GridSnapshots:
    """Read grid snapshots. Rows may come in any order; every time must cover the same points.

    An optional ``component`` column is filtered on when ``component`` is given.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, expected header 't, x_km, y_km, {value_column}'") from None
        required = ["t", "x_km", "y_km", value_column]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}:1: missing column(s) {', '.join(missing)}")
        idx = [header.index(c) for c in required]
        comp_idx = header.index("component") if "component" in header else None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            if component is not None and comp_idx is not None and row[comp_idx].strip() != component:
                continue
            try:
                rows.append([float(row[i]) for i in idx])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite values")
    times = np.unique(arr[:, 0])
    pts, inv = np.unique(arr[:, 1:3], axis=0, return_inverse=True)
    inv = inv.ravel()
    t_idx = np.searchsorted(times, arr[:, 0])
    values = np.full((len(times), len(pts)), np.nan)
    values[t_idx, inv] = arr[:, 3]
    if np.isnan(values).any():
        raise DataError(f"{path}: snapshots do not all cover the same points")
    return GridSnapshots(times, pts, values)
