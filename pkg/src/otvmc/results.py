"""Ensemble CSV files.

Columns::

    t, Mx, Mx_err, My, My_err, Mz, Mz_err,
    Cxx, Cxx_err, Cxy, Cxy_err, Cxz, Cxz_err, Cyy, Cyy_err, Cyz, Cyz_err, Czz, Czz_err,
    xi2, xi2_err, n_traj

``*_err`` are standard errors over trajectories (zero for exact references).
Floats are written with 17 significant digits so a file round-trips exactly.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .observables import AXES, PAIR_NAMES, PAIRS, ObservableRecord

OBSERVABLES = ["M" + a for a in AXES] + PAIR_NAMES + ["xi2"]
COLUMNS = ["t"] + [c for o in OBSERVABLES for c in (o, o + "_err")] + ["n_traj"]


def _fmt(v) -> str:
    return format(float(v), ".17g")


def record_row(rec: ObservableRecord) -> list[str]:
    row = [_fmt(rec.t)]
    for i in range(3):
        row += [_fmt(rec.M[i]), _fmt(rec.M_err[i])]
    for i, j in PAIRS:
        row += [_fmt(rec.C[i, j]), _fmt(rec.C_err[i, j])]
    row += [_fmt(rec.xi2), _fmt(rec.xi2_err), str(int(rec.n_traj))]
    return row


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_records_csv(records: list[ObservableRecord], path) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for rec in records:
        w.writerow(record_row(rec))
    atomic_write_text(path, buf.getvalue())
    return Path(path)


def read_records_csv(path) -> dict[str, np.ndarray]:
    """Column name -> array.  Raises ``ValueError`` on a malformed header."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    data = data.reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}
