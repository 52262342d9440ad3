from __future__ import annotations

from enum import Enum

import numpy as np

from detector._shared.errors import ShapeMismatch

EPSILON = 1e-12


class LossKind(str, Enum):
    BINARY_CROSS_ENTROPY = "binary_cross_entropy"
    CATEGORICAL_CROSS_ENTROPY = "categorical_cross_entropy"


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ShapeMismatch(f"Labels must lie in [0, {n_classes}).", n_classes=n_classes)
    encoded = np.zeros((labels.size, n_classes), dtype=np.float64)
    encoded[np.arange(labels.size), labels] = 1.0
    return encoded


def cross_entropy(kind: LossKind, probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean over the batch of ``-sum_k y_k log p_k`` on clamped probabilities.

    Binary cross-entropy is the two-column case of the categorical loss.
    """
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.shape != targets.shape or probs.ndim != 2:
        raise ShapeMismatch(
            f"Loss expects matching (batch, classes) tensors, got {probs.shape} and {targets.shape}.",
        )
    if kind is LossKind.BINARY_CROSS_ENTROPY and probs.shape[1] != 2:
        raise ShapeMismatch(f"Binary cross-entropy expects 2 columns, got {probs.shape[1]}.")
    clamped = np.clip(probs, EPSILON, 1.0 - EPSILON)
    return float(-(targets * np.log(clamped)).sum(axis=1).mean())


def softmax_cross_entropy_grad(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of the loss with respect to the logits feeding the softmax."""
    return (probs - targets) / probs.shape[0]
