"""Logistic-regression training on analog shares, with plaintext and fixed-point baselines."""
from .experiments import CompareResult, compare, curve_csv, privacy_accounting, run_report
from .fixed_point import FixedPointConfig, overflow_threshold, train_fixed_point
from .mnist import Dataset, filter_binary, load_mnist_idx, load_mnist_split, subsample
from .training import ModelState, TrainingConfig, evaluate, train_analog, train_centralized

__all__ = [
    "CompareResult",
    "Dataset",
    "FixedPointConfig",
    "ModelState",
    "TrainingConfig",
    "compare",
    "curve_csv",
    "evaluate",
    "filter_binary",
    "load_mnist_idx",
    "load_mnist_split",
    "overflow_threshold",
    "privacy_accounting",
    "run_report",
    "subsample",
    "train_analog",
    "train_centralized",
    "train_fixed_point",
]
