"""Sequential permutation testing of random forest variable importance."""

__version__ = "0.1.0"
