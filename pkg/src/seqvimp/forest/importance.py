"""Out-of-bag permutation importance, per tree and for the forest."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from . import _kernels as K
from .data import Dataset
from .model import LOSSES, ForestModel


@dataclass(frozen=True)
class VimpReport:
    variable: str
    per_tree_vi: np.ndarray  # NaN marks trees without OOB rows
    vimp: float
    loss: str

    @property
    def valid(self) -> np.ndarray:
        return self.per_tree_vi[~np.isnan(self.per_tree_vi)]


def mean_exact(values) -> float:
    """Order-independent mean (correctly rounded sum), so reshuffled equal samples tie exactly."""
    values = np.asarray(values, dtype=float)
    return math.fsum(values) / values.size


def _vi_seeds(model: ForestModel, j: int, seed) -> np.ndarray:
    if seed is None:
        ss = np.random.SeedSequence(model.config.seed, spawn_key=(1, j))
    else:
        ss = np.random.SeedSequence(seed)
    return ss.generate_state(model.ntree, dtype=np.uint32).astype(np.int64)


def per_tree_vi(model: ForestModel, j: int, data: Dataset, nperm: int | None = None,
                seed=None, loss: str | None = None) -> np.ndarray:
    """OOB loss increase from permuting predictor *j*, one value per tree."""
    nperm = model.config.nperm if nperm is None else nperm
    if nperm < 1:
        raise DataError("nperm must be >= 1")
    loss = loss or model.config.loss
    task = K.REGRESSION if model.task == "regression" else K.CLASSIFICATION
    if data.n != model.inbag.shape[1]:
        raise DataError("data does not match the rows the forest was fitted on")
    return K.tree_vi_kernel(model.feature, model.threshold, model.catmask, model.left,
                            model.right, model.value, model.is_cat, model.inbag, data.X,
                            data.y, j, nperm, _vi_seeds(model, j, seed), task, LOSSES[loss])


def tree_vi(model: ForestModel, t: int, j, data: Dataset, nperm: int | None = None,
            seed=None) -> float:
    """Importance of predictor *j* in tree *t*; NaN when the tree has no OOB rows."""
    j = data.index(j)
    if not (0 <= t < model.ntree):
        raise DataError(f"tree index {t} out of range")
    return float(per_tree_vi(model, j, data, nperm, seed)[t])


def forest_vimp(model: ForestModel, j, data: Dataset, nperm: int | None = None,
                seed=None, loss: str | None = None) -> VimpReport:
    """Mean of the per-tree importances over trees with a nonempty OOB set."""
    j = data.index(j)
    vi = per_tree_vi(model, j, data, nperm, seed, loss)
    ok = ~np.isnan(vi)
    if not ok.any():
        raise DataError("no tree has out-of-bag rows; importance undefined")
    return VimpReport(data.names[j], vi, mean_exact(vi[ok]), loss or model.config.loss)
