"""Battery state-of-health prediction with a from-scratch patch transformer.

Synthetic CC-CV aging data, charge-window preprocessing, a transformer
regressor trained by a minimal reverse-mode autodiff engine, transfer
learning by feature-extractor freezing, and RMSPE/MAPE/SDE evaluation.
"""

from .autodiff import Tensor, set_nan_checks
from .estimator import ViTRegressor
from .metrics import MetricsReport, evaluate, mape, rmspe, sde
from .model import ModelParameters, ViTConfig, forward, load_checkpoint, save_checkpoint
from .preprocess import (
    ChannelMinMaxScaler,
    Dataset,
    SampleMatrix,
    SplitPlan,
    build_sample,
    build_samples,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .simulator import (
    CellCondition,
    CycleRecord,
    FleetConfig,
    FleetDataset,
    aged_state,
    generate_fleet,
    hppc_pulse,
    ocv,
    simulate_cycle,
    write_fleet,
)
from .training import TrainConfig, TrainHistory, fine_tune, grid_search, mse_loss, train_model

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "set_nan_checks",
    "ViTRegressor",
    "MetricsReport",
    "evaluate",
    "mape",
    "rmspe",
    "sde",
    "ModelParameters",
    "ViTConfig",
    "forward",
    "load_checkpoint",
    "save_checkpoint",
    "ChannelMinMaxScaler",
    "Dataset",
    "SampleMatrix",
    "SplitPlan",
    "build_sample",
    "build_samples",
    "load_dataset",
    "save_dataset",
    "split_dataset",
    "CellCondition",
    "CycleRecord",
    "FleetConfig",
    "FleetDataset",
    "aged_state",
    "generate_fleet",
    "hppc_pulse",
    "ocv",
    "simulate_cycle",
    "write_fleet",
    "TrainConfig",
    "TrainHistory",
    "fine_tune",
    "grid_search",
    "mse_loss",
    "train_model",
    "__version__",
]
