"""Simultaneous two-sample learning (s2sL) for low-resource classification."""

from .datasets import Dataset, DataError, Normalizer, fit_normalizer, gen_gaussian_two_class, load_csv, save_csv
from .evalharness import EvalReport, HarnessConfig, run_experiment
from .nnet import NetConfig, Network, TrainReport, forward, init_network, train
from .numkit import RngStream, ShapeError
from .s2s import LabelCodec, ReferenceSet, build_train_pairs, select_references, vote_decide

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "Dataset",
    "EvalReport",
    "HarnessConfig",
    "LabelCodec",
    "NetConfig",
    "Network",
    "Normalizer",
    "ReferenceSet",
    "RngStream",
    "ShapeError",
    "TrainReport",
    "build_train_pairs",
    "fit_normalizer",
    "forward",
    "gen_gaussian_two_class",
    "init_network",
    "load_csv",
    "run_experiment",
    "save_csv",
    "select_references",
    "train",
    "vote_decide",
]
