"""Deep subspace clustering with a self-expressive auto-encoder."""

from .affinity import affinity_lowrank, affinity_plain, solve_lsr, threshold_columns
from .estimators import ConvAutoEncoder, DeepSubspaceClustering, cluster_coefficients
from .evaluation import SynthSpec, clustering_error, hungarian, synth_subspaces
from .exceptions import (
    ConfigError,
    DSCError,
    FormatError,
    MissingArtifactError,
    NumericalError,
    ShapeError,
)
from .model import LayerSpec, ModelConfig, ModelParams, build, count_params, preset
from .spectral import kmeans, spectral_cluster
from .training import TrainLog, TrainSchedule, adam_step, finetune, pretrain

__version__ = "0.1.0"

__all__ = [
    "affinity_lowrank",
    "affinity_plain",
    "solve_lsr",
    "threshold_columns",
    "ConvAutoEncoder",
    "DeepSubspaceClustering",
    "cluster_coefficients",
    "SynthSpec",
    "clustering_error",
    "hungarian",
    "synth_subspaces",
    "ConfigError",
    "DSCError",
    "FormatError",
    "MissingArtifactError",
    "NumericalError",
    "ShapeError",
    "LayerSpec",
    "ModelConfig",
    "ModelParams",
    "build",
    "count_params",
    "preset",
    "kmeans",
    "spectral_cluster",
    "TrainLog",
    "TrainSchedule",
    "adam_step",
    "finetune",
    "pretrain",
]
