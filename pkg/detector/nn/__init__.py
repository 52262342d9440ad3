"""Small numpy neural-network core: 1D conv, pooling, dense layers, Adam."""

from detector.nn.container import load_model, save_model
from detector.nn.gradcheck import GradCheckResult, gradient_check
from detector.nn.graph import (
    Conv1DSpec,
    DenseSpec,
    DropoutSpec,
    FlattenSpec,
    MaxPool1DSpec,
    ModelGraph,
    ReluSpec,
    SoftmaxSpec,
)
from detector.nn.losses import LossKind, cross_entropy
from detector.nn.optim import Adam
from detector.nn.train import FitResult, TrainConfig, fit

__all__ = [
    "Adam",
    "Conv1DSpec",
    "DenseSpec",
    "DropoutSpec",
    "FitResult",
    "FlattenSpec",
    "GradCheckResult",
    "LossKind",
    "MaxPool1DSpec",
    "ModelGraph",
    "ReluSpec",
    "SoftmaxSpec",
    "TrainConfig",
    "cross_entropy",
    "fit",
    "gradient_check",
    "load_model",
    "save_model",
]
