"""Plain CSV / JSON writers with reproducible number formatting.

Floats are written with ``repr`` (shortest round-trip decimal), so identical
arrays give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    """Header and float rows (the inverse of :func:`write_csv` for numeric tables)."""
    with Path(path).open() as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def vector_columns(prefix: str, n: int):
    return [f"{prefix}{i}" for i in range(n)]


def trajectory_rows(traj, per_segment: int = 50):
    """(time, tag, x or (rho, y), v or (xi0, eta)) rows of a flow trajectory."""
    return [[s, tag, *Y] for s, tag, Y in traj.sample(per_segment)]


def jacobi_rows(t, A, B=None):
    """(t, vec A, det A, sigma_min A, vec B) rows."""
    A = np.asarray(A)
    rows = []
    for k, tk in enumerate(np.asarray(t)):
        a = A[k]
        row = [tk, *a.ravel(), np.linalg.det(a), np.linalg.svd(a, compute_uv=False).min()]
        if B is not None:
            row.extend(np.asarray(B)[k].ravel())
        rows.append(row)
    return rows
