"""CSV and manifest helpers.

Floats are written with ``repr`` so that identical numbers always give
identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .thermal import Ensemble

__all__ = [
    "write_csv",
    "read_csv",
    "write_matrix_csv",
    "read_matrix_csv",
    "save_ensemble_csv",
    "load_ensemble_csv",
    "write_json",
]


def _cell(x):
    if isinstance(x, (np.floating, float)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Read a numeric CSV written by :func:`write_csv` into a column dict."""
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    cols = {}
    for i, name in enumerate(header):
        vals = [row[i] for row in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return cols


def write_matrix_csv(path, matrix: np.ndarray) -> Path:
    """Complex matrix as ``row, col, re, im`` records."""
    m = np.asarray(matrix)
    rows = ((i, j, m[i, j].real, m[i, j].imag) for i in range(m.shape[0]) for j in range(m.shape[1]))
    return write_csv(path, ["row", "col", "re", "im"], rows)


def read_matrix_csv(path) -> np.ndarray:
    cols = read_csv(path)
    r = cols["row"].astype(int)
    c = cols["col"].astype(int)
    out = np.zeros((r.max() + 1, c.max() + 1), dtype=complex)
    out[r, c] = cols["re"] + 1j * cols["im"]
    return out


def save_ensemble_csv(path, ens: Ensemble) -> Path:
    """Dump ensemble amplitudes as ``site, traj, re, im`` records."""
    s = ens.states
    rows = ((l, j, s[j, l].real, s[j, l].imag) for j in range(s.shape[0]) for l in range(s.shape[1]))
    return write_csv(path, ["site", "traj", "re", "im"], rows)


def load_ensemble_csv(path, seed: int = 0, meta: dict | None = None) -> Ensemble:
    cols = read_csv(path)
    site = cols["site"].astype(int)
    traj = cols["traj"].astype(int)
    states = np.zeros((traj.max() + 1, site.max() + 1), dtype=complex)
    states[traj, site] = cols["re"] + 1j * cols["im"]
    return Ensemble(states=states, seed=seed, meta=meta or {})


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path
