"""Variational mode decomposition (iterative and deep-unfolded) with a graph forecaster."""

from .errors import (ConfigError, DegenerateInputError, InvalidInputError, ModegraphError, NumericFailure,
                     TrainingFailure)
from .signal import SplitConfig, SyntheticSpec, TimeSeries, gen_synthetic, load_csv, write_csv
from .unfolded import UvmdParams, UvmdTrainConfig, decompose_with, uvmd_forward, uvmd_train
from .vmd import ModeSet, VmdConfig, reconstruction_error, vmd_decompose

__all__ = [
    "ConfigError", "DegenerateInputError", "InvalidInputError", "ModegraphError", "NumericFailure",
    "TrainingFailure", "SplitConfig", "SyntheticSpec", "TimeSeries", "gen_synthetic", "load_csv", "write_csv",
    "UvmdParams", "UvmdTrainConfig", "decompose_with", "uvmd_forward", "uvmd_train", "ModeSet", "VmdConfig",
    "reconstruction_error", "vmd_decompose",
]
__version__ = "0.1.0"
