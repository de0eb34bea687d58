"""Excitation-feature study: SMIB simulation, filter statistics and LM-trained MLPs."""

from .dataset import Dataset, FeatureRow, SplitSpec
from .errors import ExflError
from .mlp import MlpNet, TrainConfig
from .pipeline import PipelineConfig, run_pipeline
from .simulator import DisturbanceEvent, ExciterParams, MachineParams, NetworkParams
from .stats import ModelSpec, RegressionFit

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FeatureRow", "SplitSpec", "ExflError", "MlpNet", "TrainConfig", "PipelineConfig",
    "run_pipeline", "DisturbanceEvent", "ExciterParams", "MachineParams", "NetworkParams", "ModelSpec",
    "RegressionFit",
]
