"""Plot-ready tables of decision boundaries and operating characteristics."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .operating import _core
from .regimes import SequentialSpec, sprt_boundaries

BOUNDARY_COLUMNS = ("m", "lower_H1", "upper_H0")
CHARACTERISTIC_COLUMNS = ("p", "k", "L_p", "E_m")


def boundary_table(spec: SequentialSpec, m_max: int | None = None) -> list[dict]:
    m_max = spec.M if m_max is None else m_max
    rows = []
    for m in range(1, m_max + 1):
        upper, lower = sprt_boundaries(spec, m)
        rows.append({"m": m, "lower_H1": lower, "upper_H0": upper})
    return rows


def characteristic_table(spec: SequentialSpec, n: int = 201) -> list[dict]:
    p = np.linspace(0.0, 1.0, n)
    k, L, E = _core(p, spec)
    return [
        {"p": float(pi), "k": float(ki), "L_p": float(li), "E_m": float(ei)}
        for pi, ki, li, ei in zip(p, k, L, E)
    ]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def write_csv(rows: list[dict], path, columns=None) -> Path:
    path = Path(path)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({c: _fmt(row[c]) for c in columns})
    return path
