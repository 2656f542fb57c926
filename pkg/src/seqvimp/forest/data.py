"""Typed learning data and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError

NUMERIC = "numeric"
CATEGORICAL = "categorical"
MISSING = frozenset({"", "na", "nan", "null", "none", "?"})
MAX_LEVELS = 62


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    values: np.ndarray  # floats for numeric columns, integer codes for categorical ones
    levels: tuple[str, ...] = ()


class Dataset:
    """Predictor matrix plus one target column.

    Categorical predictors are stored as integer level codes inside the float
    matrix ``X``; ``is_cat`` and ``levels`` describe them.  A categorical target
    makes this a classification problem, a numeric one a regression problem.
    """

    def __init__(self, X, y, names=None, target="y", is_cat=None, levels=None,
                 target_levels=None):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("X must be two-dimensional")
        n, p = X.shape
        if p < 1:
            raise DataError("need at least one predictor")
        y = np.ascontiguousarray(y, dtype=np.float64)
        if y.shape != (n,):
            raise DataError(f"target has {y.shape[0] if y.ndim else 0} rows, predictors have {n}")
        names = tuple(f"X{j + 1}" for j in range(p)) if names is None else tuple(names)
        if len(names) != p or len(set(names)) != p:
            raise DataError("predictor names must be unique and match the columns")
        if target in names:
            raise DataError(f"target {target!r} is also listed as a predictor")
        is_cat = np.zeros(p, dtype=bool) if is_cat is None else np.asarray(is_cat, dtype=bool)
        levels = tuple(tuple(lv) for lv in levels) if levels is not None else tuple(() for _ in range(p))
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("missing or non-finite values; use complete cases")
        for j in np.flatnonzero(is_cat):
            nl = len(levels[j])
            if nl == 0:
                nl = int(X[:, j].max()) + 1 if n else 0
                levels = levels[:j] + (tuple(str(i) for i in range(nl)),) + levels[j + 1:]
            codes = X[:, j]
            if np.any(codes != np.round(codes)) or np.any(codes < 0) or np.any(codes >= nl):
                raise DataError(f"categorical column {names[j]!r} has invalid level codes")
            if nl > MAX_LEVELS:
                raise DataError(f"categorical column {names[j]!r} has {nl} levels (max {MAX_LEVELS})")
        if target_levels is not None:
            target_levels = tuple(target_levels)
            if np.any(y != np.round(y)) or np.any(y < 0) or np.any(y >= len(target_levels)):
                raise DataError("classification target must hold level codes")
        self.X = X
        self.y = y
        self.names = names
        self.target = target
        self.is_cat = is_cat
        self.levels = levels
        self.target_levels = target_levels

    # shape ---------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def task(self) -> str:
        return "regression" if self.target_levels is None else "classification"

    @property
    def n_classes(self) -> int:
        return 0 if self.target_levels is None else len(self.target_levels)

    @property
    def n_levels(self) -> np.ndarray:
        return np.array([len(lv) for lv in self.levels], dtype=np.int64)

    @property
    def columns(self) -> list[Column]:
        cols = [
            Column(nm, CATEGORICAL if c else NUMERIC,
                   self.X[:, j].astype(np.int64) if c else self.X[:, j], self.levels[j])
            for j, (nm, c) in enumerate(zip(self.names, self.is_cat))
        ]
        if self.target_levels is None:
            cols.append(Column(self.target, NUMERIC, self.y))
        else:
            cols.append(Column(self.target, CATEGORICAL, self.y.astype(np.int64), self.target_levels))
        return cols

    def index(self, variable) -> int:
        """Predictor position from a name or an index."""
        if isinstance(variable, (int, np.integer)):
            if not (0 <= variable < self.p):
                raise DataError(f"predictor index {variable} out of range")
            return int(variable)
        try:
            return self.names.index(variable)
        except ValueError:
            raise DataError(f"unknown predictor {variable!r}") from None

    def with_predictor(self, j: int, values) -> "Dataset":
        X = self.X.copy()
        X[:, j] = values
        return Dataset(X, self.y, self.names, self.target, self.is_cat, self.levels,
                       self.target_levels)

    def permute_predictor(self, j: int, rng: np.random.Generator) -> "Dataset":
        return self.with_predictor(j, self.X[rng.permutation(self.n), j])

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.names, self.target, self.is_cat,
                       self.levels, self.target_levels)

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p}, target={self.target!r}, task={self.task})"


# CSV ---------------------------------------------------------------------------

def read_schema(path) -> dict[str, str]:
    """Parse ``name:type`` lines (type is numeric or categorical); # starts a comment."""
    schema = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, kind = line.rpartition(":")
        kind = kind.strip().lower()
        if not sep or kind not in (NUMERIC, CATEGORICAL):
            raise ConfigError(f"{path}:{lineno}: expected 'name:numeric' or 'name:categorical'")
        schema[name.strip()] = kind
    return schema


def _is_missing(s: str) -> bool:
    return s.strip().lower() in MISSING


def _parses(values) -> bool:
    try:
        for v in values:
            float(v)
    except ValueError:
        return False
    return True


def read_csv(path, target: str, schema: dict[str, str] | None = None,
             drop: tuple[str, ...] = ()) -> Dataset:
    """Load a CSV with a header row as a :class:`Dataset`.

    Column types are inferred (a column is numeric when every non-missing cell
    parses as a float) unless *schema* says otherwise.  Rows with a missing
    cell in any used column are dropped, i.e. a complete-case analysis.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    if target not in header:
        raise DataError(f"target column {target!r} not found in {path}")
    schema = dict(schema or {})
    unknown = set(schema) - set(header)
    if unknown:
        raise ConfigError(f"schema names unknown columns: {sorted(unknown)}")
    for r in body:
        if len(r) != len(header):
            raise DataError(f"{path}: ragged row with {len(r)} cells (header has {len(header)})")
    used = [i for i, h in enumerate(header) if h not in drop]
    keep = [r for r in body if not any(_is_missing(r[i]) for i in used)]
    if not keep:
        raise DataError(f"{path}: no complete rows")

    def column(i):
        name = header[i]
        cells = [r[i].strip() for r in keep]
        kind = schema.get(name) or (NUMERIC if _parses(cells) else CATEGORICAL)
        if kind == NUMERIC:
            try:
                return np.array([float(c) for c in cells]), ()
            except ValueError as exc:
                raise DataError(f"column {name!r} declared numeric but {exc}") from None
        levels = tuple(sorted(set(cells)))
        lookup = {lv: k for k, lv in enumerate(levels)}
        return np.array([lookup[c] for c in cells], dtype=np.float64), levels

    ti = header.index(target)
    pred_idx = [i for i in used if i != ti]
    if not pred_idx:
        raise DataError("no predictor columns")
    cols, levels, is_cat = [], [], []
    for i in pred_idx:
        vals, lv = column(i)
        cols.append(vals)
        levels.append(lv)
        is_cat.append(bool(lv))
    y, target_levels = column(ti)
    return Dataset(np.column_stack(cols), y, [header[i] for i in pred_idx], target,
                   is_cat, levels, target_levels if target_levels else None)
