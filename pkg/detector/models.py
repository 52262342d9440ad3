"""Anomaly-detector (AD) and attack-recognizer (AR) builders, training and inference.

Every trained model (CNN graph, KNN, forest) carries ``metadata`` with its
task, input length and the training-time standardizer, so a model file is all
the monitor needs to score raw energy deltas.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Protocol

import numpy as np
from pydantic import BaseModel, Field, StrictInt

from detector._shared.errors import EmptyClass, LengthMismatch, ShapeMismatch
from detector.baselines import (
    ForestConfig,
    KnnConfig,
    KnnModel,
    RandomForestModel,
    knn_fit,
    load_forest,
    load_knn,
    rf_fit,
    save_forest,
    save_knn,
)
from detector.nn.container import load_model, peek_tag, save_model
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
from detector.nn.losses import LossKind
from detector.nn.train import EpochRecord, TrainConfig, fit, write_history
from detector.traceio import ATTACK_NAMES, Dataset, EnergyTrace, Standardizer, prepare

logger = logging.getLogger("detector.models")

Task = Literal["ad", "ar"]
AD_CLASSES = ("benign", "anomaly")
N_ATTACKS = len(ATTACK_NAMES)

__all__ = [
    "AD_CLASSES",
    "Classifier",
    "ConvNetConfig",
    "TrainConfig",
    "TrainedModel",
    "build_ad",
    "build_ar",
    "infer_ad",
    "infer_ar",
    "load_classifier",
    "predict_scores",
    "save_classifier",
    "train_ad",
    "train_ar",
    "train_baseline",
]


class Classifier(Protocol):
    metadata: dict[str, Any]

    @property
    def input_length(self) -> int: ...

    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...


class ConvNetConfig(BaseModel):
    """Architecture knobs; ``None`` means the documented default for the task."""

    filters: list[StrictInt] | None = None
    dense_units: list[StrictInt] | None = None
    kernel_size: StrictInt = Field(default=3, ge=1)
    pool_size: StrictInt = Field(default=10, ge=1)
    conv_dropout: float = Field(default=0.25, ge=0, lt=1)
    dense_dropout: float = Field(default=0.5, ge=0, lt=1)
    dtype: Literal["float32", "float64"] = "float32"

    class Config:
        extra = "forbid"


def _conv(filters: int, config: ConvNetConfig) -> list[Any]:
    return [Conv1DSpec(filters=filters, kernel_size=config.kernel_size), ReluSpec()]


def build_ad(n_samples: int, seed: int = 0, config: ConvNetConfig | None = None) -> ModelGraph:
    """Conv 64, 64, pool, conv 128, pool, then dense 128, 64, 2 with three dropouts."""
    config = config or ConvNetConfig()
    filters = config.filters or [64, 64, 128]
    dense = config.dense_units or [128, 64]
    if len(filters) != 3 or len(dense) != 2:
        raise ShapeMismatch("The AD network takes 3 conv filter counts and 2 hidden dense widths.")
    specs = [
        *_conv(filters[0], config),
        *_conv(filters[1], config),
        MaxPool1DSpec(size=config.pool_size),
        *_conv(filters[2], config),
        MaxPool1DSpec(size=config.pool_size),
        DropoutSpec(rate=config.conv_dropout),
        FlattenSpec(),
        DenseSpec(units=dense[0]),
        ReluSpec(),
        DropoutSpec(rate=config.dense_dropout),
        DenseSpec(units=dense[1]),
        ReluSpec(),
        DropoutSpec(rate=config.dense_dropout),
        DenseSpec(units=len(AD_CLASSES)),
        SoftmaxSpec(),
    ]
    return ModelGraph(specs, input_length=n_samples, seed=seed, dtype=config.dtype, metadata={"task": "ad"})


def build_ar(n_samples: int, seed: int = 0, config: ConvNetConfig | None = None) -> ModelGraph:
    """Four convs with a pool after the second and fourth, then dense 256, 128, 64, 15."""
    config = config or ConvNetConfig()
    filters = config.filters or [64, 64, 128, 128]
    dense = config.dense_units or [256, 128, 64]
    if len(filters) != 4 or len(dense) != 3:
        raise ShapeMismatch("The AR network takes 4 conv filter counts and 3 hidden dense widths.")
    specs = [
        *_conv(filters[0], config),
        *_conv(filters[1], config),
        MaxPool1DSpec(size=config.pool_size),
        *_conv(filters[2], config),
        *_conv(filters[3], config),
        MaxPool1DSpec(size=config.pool_size),
        DropoutSpec(rate=config.conv_dropout),
        FlattenSpec(),
    ]
    for units in dense:
        specs += [DenseSpec(units=units), ReluSpec()]
    specs += [DenseSpec(units=N_ATTACKS), SoftmaxSpec()]
    return ModelGraph(specs, input_length=n_samples, seed=seed, dtype=config.dtype, metadata={"task": "ar"})


@dataclass
class TrainedModel:
    model: Any
    task: Task
    standardizer: Standardizer
    history: list[EpochRecord]
    best_epoch: int = 0
    path: Path | None = None


def _metadata(task: Task, n_samples: int, standardizer: Standardizer, algorithm: str) -> dict[str, Any]:
    classes = list(AD_CLASSES) if task == "ad" else list(ATTACK_NAMES)
    return {
        "task": task,
        "algorithm": algorithm,
        "n_samples": n_samples,
        "standardizer": standardizer.model_dump(),
        "classes": classes,
    }


def _check_ar_classes(dataset: Dataset, role: str) -> None:
    present = {trace.label.attack_index for trace in dataset.traces}
    missing = [name for index, name in enumerate(ATTACK_NAMES) if index not in present]
    if missing:
        raise EmptyClass(f"The AR {role} set has no traces for: {', '.join(missing)}.", missing=missing)


def _task_data(train: Dataset, val: Dataset, task: Task) -> tuple[Dataset, Dataset]:
    if task == "ad":
        return train, val
    train, val = train.attacks_only(), val.attacks_only()
    _check_ar_classes(train, "training")
    _check_ar_classes(val, "validation")
    return train, val


def _targets(dataset: Any, task: Task) -> np.ndarray:
    return dataset.anomaly_targets() if task == "ad" else dataset.attack_targets()


def _train_cnn(
    task: Task,
    train: Dataset,
    val: Dataset,
    config: TrainConfig,
    standardizer: Standardizer | None,
    out_path: str | Path | None,
    net: ConvNetConfig | None,
) -> TrainedModel:
    started = time.perf_counter()
    train, val = _task_data(train, val, task)
    train_scaled, val_scaled, fitted = prepare(train, val, config.n_samples)
    if standardizer is not None:
        train_scaled = type(train_scaled)(train_scaled.source, standardizer)
        val_scaled = type(val_scaled)(val_scaled.source, standardizer)
    standardizer = standardizer or fitted
    builder = build_ad if task == "ad" else build_ar
    graph = builder(config.n_samples, seed=config.seed, config=net)
    graph.metadata.update(_metadata(task, config.n_samples, standardizer, "cnn"))
    loss_kind = LossKind.BINARY_CROSS_ENTROPY if task == "ad" else LossKind.CATEGORICAL_CROSS_ENTROPY
    result = fit(
        graph,
        train_scaled.matrix(),
        _targets(train_scaled, task),
        val_scaled.matrix(),
        _targets(val_scaled, task),
        loss_kind,
        config,
    )
    graph.metadata["best_epoch"] = result.best_epoch
    trained = TrainedModel(
        model=graph, task=task, standardizer=standardizer, history=result.history, best_epoch=result.best_epoch
    )
    if out_path is not None:
        trained.path = Path(out_path)
        save_model(graph, trained.path)
        write_history(result.history, history_path(trained.path))
    logger.info(
        "models trained task=%s n_samples=%s epochs=%s best_epoch=%s ms=%.2f",
        task,
        config.n_samples,
        len(result.history),
        result.best_epoch,
        (time.perf_counter() - started) * 1000,
    )
    return trained


def history_path(model_path: Path) -> Path:
    return model_path.with_suffix(".history.csv")


def train_ad(
    train: Dataset,
    val: Dataset,
    config: TrainConfig,
    standardizer: Standardizer | None = None,
    out_path: str | Path | None = None,
    net: ConvNetConfig | None = None,
) -> TrainedModel:
    """Binary benign/anomaly model; every attack class collapses to label 1."""
    return _train_cnn("ad", train, val, config, standardizer, out_path, net)


def train_ar(
    train: Dataset,
    val: Dataset,
    config: TrainConfig,
    standardizer: Standardizer | None = None,
    out_path: str | Path | None = None,
    net: ConvNetConfig | None = None,
) -> TrainedModel:
    """15-way attack model trained on the attack traces only."""
    return _train_cnn("ar", train, val, config, standardizer, out_path, net)


def train_baseline(
    algorithm: Literal["knn", "rf"],
    task: Task,
    train: Dataset,
    n_samples: int,
    knn: KnnConfig | None = None,
    forest: ForestConfig | None = None,
    out_path: str | Path | None = None,
) -> TrainedModel:
    """Fit a KNN or forest on the same truncated, standardized traces as the CNN."""
    if task == "ar":
        train = train.attacks_only()
        _check_ar_classes(train, "training")
    train_scaled, _, standardizer = prepare(train, train, n_samples)
    X, y = train_scaled.matrix(), _targets(train_scaled, task)
    n_classes = len(AD_CLASSES) if task == "ad" else N_ATTACKS
    if algorithm == "knn":
        model: Any = knn_fit(X, y, knn or KnnConfig(k=3 if task == "ad" else 2), n_classes=n_classes)
    else:
        model = rf_fit(X, y, forest or ForestConfig(), n_classes=n_classes)
    model.metadata = _metadata(task, n_samples, standardizer, algorithm)
    trained = TrainedModel(model=model, task=task, standardizer=standardizer, history=[])
    if out_path is not None:
        trained.path = Path(out_path)
        save_classifier(model, trained.path)
    return trained


# --- persistence / scoring -------------------------------------------------------


def save_classifier(model: Classifier, path: str | Path) -> None:
    if isinstance(model, ModelGraph):
        save_model(model, path)
    elif isinstance(model, KnnModel):
        save_knn(model, path)
    elif isinstance(model, RandomForestModel):
        save_forest(model, path)
    else:
        raise ShapeMismatch(f"Cannot save a {type(model).__name__}.")


def load_classifier(path: str | Path) -> Classifier:
    """Load any model file, dispatching on its type tag."""
    loaders = {"cnn": load_model, "knn": load_knn, "rf": load_forest}
    tag = peek_tag(path)
    return loaders[tag](path)


def model_task(model: Classifier) -> str:
    return str(model.metadata.get("task", ""))


def predict_scores(model: Classifier, X: np.ndarray) -> np.ndarray:
    """Class probabilities for raw delta rows, scaled with the model's own standardizer."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.input_length:
        raise LengthMismatch(
            f"Model expects traces of {model.input_length} samples, got {X.shape[1]}.",
            expected=model.input_length,
            got=int(X.shape[1]),
        )
    stored = model.metadata.get("standardizer")
    if stored is not None:
        X = Standardizer.model_validate(stored).transform(X)
    return model.predict_proba(X)


def _deltas(trace: EnergyTrace | np.ndarray) -> np.ndarray:
    return trace.deltas if isinstance(trace, EnergyTrace) else np.asarray(trace, dtype=np.float64).reshape(-1)


def infer_ad(model: Classifier, trace: EnergyTrace | np.ndarray) -> float:
    """Probability that the trace is anomalous."""
    return float(predict_scores(model, _deltas(trace)[None, :])[0, 1])


def infer_ar(model: Classifier, trace: EnergyTrace | np.ndarray) -> np.ndarray:
    """Distribution over the 15 attack classes, in attack-index order."""
    return predict_scores(model, _deltas(trace)[None, :])[0]
