from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, StrictInt

from detector._shared.errors import DivergenceDetected, EmptyDataset
from detector.nn.graph import ModelGraph
from detector.nn.losses import LossKind, cross_entropy, one_hot
from detector.nn.optim import Adam

logger = logging.getLogger("detector.nn")

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "val_accuracy")


class TrainConfig(BaseModel):
    epochs_max: StrictInt = Field(default=200, ge=1)
    batch_size: StrictInt = Field(default=32, ge=1)
    patience: StrictInt = Field(default=10, ge=0)
    seed: StrictInt = 0
    learning_rate: float = Field(default=1e-3, gt=0)
    n_samples: StrictInt = Field(default=3000, ge=1)

    class Config:
        extra = "forbid"


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class FitResult:
    graph: ModelGraph
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


def evaluate_loss(graph: ModelGraph, x: np.ndarray, y: np.ndarray, loss_kind: LossKind) -> tuple[float, float]:
    probs = graph.predict_proba(x)
    loss = cross_entropy(loss_kind, probs, one_hot(y, graph.n_outputs))
    accuracy = float((probs.argmax(axis=1) == y).mean())
    return loss, accuracy


def fit(
    graph: ModelGraph,
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    loss_kind: LossKind,
    config: TrainConfig,
) -> FitResult:
    """Mini-batch Adam with early stopping on validation accuracy.

    The graph ends up holding the weights of the best validation epoch.
    Shuffling and dropout draw from one generator seeded by ``config.seed``.
    """
    train_y = np.asarray(train_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)
    if len(train_y) == 0 or len(val_y) == 0:
        raise EmptyDataset("Training and validation sets must both be non-empty.")
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(lr=config.learning_rate)
    targets = one_hot(train_y, graph.n_outputs)
    result = FitResult(graph=graph)
    best_accuracy = -1.0
    best_weights = graph.get_weights()
    waited = 0
    for epoch in range(config.epochs_max):
        started = time.perf_counter()
        order = rng.permutation(len(train_y))
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = graph.loss_and_gradients(train_x[batch], targets[batch], loss_kind, training=True, rng=rng)
            if not np.isfinite(loss):
                raise DivergenceDetected(f"Training loss became non-finite in epoch {epoch}.", epoch=epoch)
            optimizer.step(graph.weights, grads)
            total += loss * len(batch)
            seen += len(batch)
        val_loss, val_accuracy = evaluate_loss(graph, val_x, val_y, loss_kind)
        if not np.isfinite(val_loss):
            raise DivergenceDetected(f"Validation loss became non-finite in epoch {epoch}.", epoch=epoch)
        record = EpochRecord(epoch=epoch, train_loss=total / seen, val_loss=val_loss, val_accuracy=val_accuracy)
        result.history.append(record)
        logger.info(
            "nn epoch epoch=%s train_loss=%.4f val_loss=%.4f val_accuracy=%.4f ms=%.2f",
            epoch,
            record.train_loss,
            val_loss,
            val_accuracy,
            (time.perf_counter() - started) * 1000,
        )
        if val_accuracy > best_accuracy:
            best_accuracy = val_accuracy
            best_weights = graph.get_weights()
            result.best_epoch = epoch
            waited = 0
        else:
            waited += 1
            if waited > config.patience:
                result.stopped_early = True
                logger.info("nn early_stop epoch=%s best_epoch=%s best_val_accuracy=%.4f", epoch, result.best_epoch, best_accuracy)
                break
    graph.set_weights(best_weights)
    return result


def write_history(history: list[EpochRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for record in history:
            writer.writerow([record.epoch, f"{record.train_loss:.6f}", f"{record.val_loss:.6f}", f"{record.val_accuracy:.6f}"])
