"""Channel-clustered patch transformer forecasting.

Channels of a multivariate series are grouped by a GRU autoencoder and a
graph-convolutional clustering head; a patch transformer then attends across
channels only within each group.
"""

from .config import ExperimentConfig, load_config
from .data import MultivariateSeries, generate_synthetic, load_csv, make_windows, normalize, split
from .dtw import BACKEND as DTW_BACKEND
from .forecaster import MaskedPatchForecaster, PatchConfig
from .training import RunReport, evaluate, train

__all__ = [
    "DTW_BACKEND", "ExperimentConfig", "MaskedPatchForecaster", "MultivariateSeries",
    "PatchConfig", "RunReport", "evaluate", "generate_synthetic", "load_config", "load_csv",
    "make_windows", "normalize", "split", "train",
]
__version__ = "0.1.0"
