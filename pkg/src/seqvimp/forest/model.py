"""Random forest fitting and prediction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, FitError
from . import _kernels as K
from .data import Dataset

LOSSES = {"squared_error": K.LOSS_SQUARED, "brier": K.LOSS_BRIER, "misclassification": K.LOSS_MISCLASS}


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyper-parameters.

    ``mtry`` and ``min_node_size`` default by task: ``ceil(sqrt(p))`` and 1 for
    classification, ``ceil(p/3)`` and 5 for regression.  ``loss`` defaults to
    Brier for classification and squared error for regression.
    """

    ntree: int = 500
    mtry: int | None = None
    nperm: int = 1
    min_node_size: int | None = None
    seed: int = 0
    loss: str | None = None

    def __post_init__(self):
        if self.ntree < 1:
            raise ConfigError(f"ntree must be >= 1, got {self.ntree}")
        if self.nperm < 1:
            raise ConfigError(f"nperm must be >= 1, got {self.nperm}")
        if self.mtry is not None and self.mtry < 1:
            raise ConfigError(f"mtry must be >= 1, got {self.mtry}")
        if self.min_node_size is not None and self.min_node_size < 1:
            raise ConfigError(f"min_node_size must be >= 1, got {self.min_node_size}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.loss is not None and self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}; choose from {sorted(LOSSES)}")

    def resolve(self, data: Dataset) -> "ForestConfig":
        """Fill task-dependent defaults for *data* and validate against it."""
        cls = data.task == "classification"
        mtry = self.mtry
        if mtry is None:
            mtry = math.ceil(math.sqrt(data.p)) if cls else math.ceil(data.p / 3)
        if mtry > data.p:
            raise ConfigError(f"mtry={mtry} exceeds the {data.p} predictors")
        loss = self.loss or ("brier" if cls else "squared_error")
        if not cls and loss != "squared_error":
            raise ConfigError(f"loss {loss!r} needs a categorical target")
        if cls and loss == "squared_error":
            raise ConfigError("use 'brier' or 'misclassification' for a categorical target")
        return replace(
            self,
            mtry=max(1, mtry),
            min_node_size=self.min_node_size or (1 if cls else 5),
            loss=loss,
        )

    def tree_seeds(self) -> np.ndarray:
        ss = np.random.SeedSequence(self.seed)
        return ss.generate_state(self.ntree, dtype=np.uint32).astype(np.int64)


@dataclass(frozen=True, eq=False)
class ForestModel:
    """A fitted ensemble.  Arrays are indexed ``[tree, node]``; see ``_kernels``."""

    config: ForestConfig
    task: str
    n_out: int
    seeds: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    catmask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_nodes: np.ndarray
    inbag: np.ndarray  # (T, n) bootstrap multiplicities
    is_cat: np.ndarray = field(repr=False)

    @property
    def ntree(self) -> int:
        return self.feature.shape[0]

    def bootstrap_indices(self, t: int) -> np.ndarray:
        return np.repeat(np.arange(self.inbag.shape[1]), self.inbag[t])

    def oob_indices(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.inbag[t] == 0)

    def used_variables(self, t: int) -> set[int]:
        f = self.feature[t, : self.n_nodes[t]]
        return set(int(v) for v in f[f >= 0])

    def tree_predict(self, X) -> np.ndarray:
        """Per-tree predictions, shape (T, n, n_out)."""
        X = np.ascontiguousarray(X.X if isinstance(X, Dataset) else X, dtype=np.float64)
        return K.predict_kernel(self.feature, self.threshold, self.catmask, self.left,
                                self.right, self.value, self.is_cat, X)

    def predict(self, X) -> np.ndarray:
        """Ensemble average over trees: means for regression, class probabilities otherwise."""
        out = self.tree_predict(X).mean(axis=0)
        return out[:, 0] if self.task == "regression" else out

    def oob_predict(self, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
        """Average over the trees for which each training row was out-of-bag.

        *data* must be the training data; returns ``(pred, has_oob)``.
        """
        per_tree = self.tree_predict(data)
        w = (self.inbag == 0).astype(float)[:, :, None]
        cnt = w.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            pred = (per_tree * w).sum(axis=0) / cnt
        has = cnt[:, 0] > 0
        return (pred[:, 0] if self.task == "regression" else pred), has


def fit_forest(data: Dataset, config: ForestConfig, bootstrap=None) -> ForestModel:
    """Grow ``config.ntree`` CART trees on bootstrap samples of *data*.

    ``bootstrap`` optionally fixes each tree's sample as a (T, n) array of row
    indices; otherwise every tree draws its own from its seed.
    """
    cfg = config.resolve(data)
    n = data.n
    if n < 2 * cfg.min_node_size or n < 2:
        raise FitError(f"need n >= 2*min_node_size = {2 * cfg.min_node_size}, got n={n}")
    if data.task == "classification":
        if np.unique(data.y).size < 2:
            raise FitError("target has a single class")
        task, n_out = K.CLASSIFICATION, data.n_classes
    else:
        if np.ptp(data.y) == 0.0:
            raise FitError("target has zero variance")
        task, n_out = K.REGRESSION, 1
    seeds = cfg.tree_seeds()
    if bootstrap is None:
        boot = np.zeros((0, 0), dtype=np.int64)
    else:
        boot = np.ascontiguousarray(bootstrap, dtype=np.int64)
        if boot.shape != (cfg.ntree, n) or boot.min() < 0 or boot.max() >= n:
            raise ConfigError(f"bootstrap must be a ({cfg.ntree}, {n}) array of row indices")
    arrays = K.fit_forest_kernel(data.X, data.y, data.is_cat, data.n_levels, seeds, boot,
                                 cfg.mtry, cfg.min_node_size, task, n_out)
    feature, threshold, catmask, left, right, value, n_nodes, inbag = arrays
    return ForestModel(cfg, data.task, n_out, seeds, feature, threshold, catmask, left, right,
                       value, n_nodes, inbag, data.is_cat.copy())
