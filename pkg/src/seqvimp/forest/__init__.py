"""Random forest with bootstrap/OOB bookkeeping and permutation importance."""

from .data import CATEGORICAL, NUMERIC, Column, Dataset, read_csv, read_schema
from .importance import VimpReport, forest_vimp, per_tree_vi, tree_vi
from .model import LOSSES, ForestConfig, ForestModel, fit_forest

__all__ = [
    "CATEGORICAL", "NUMERIC", "Column", "Dataset", "read_csv", "read_schema",
    "VimpReport", "forest_vimp", "per_tree_vi", "tree_vi",
    "LOSSES", "ForestConfig", "ForestModel", "fit_forest",
]
