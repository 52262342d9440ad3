"""K-nearest-neighbour and random-forest baselines.

Both expose ``predict_proba(X) -> (n, n_classes)`` like the CNN graph so the
metrics and monitor code can score any of them.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, StrictInt

from detector._shared.errors import InvalidConfig, LengthMismatch, SingleClass
from detector.nn.container import load_container, save_container

logger = logging.getLogger("detector.baselines")


# --- k nearest neighbours ----------------------------------------------------


class KnnConfig(BaseModel):
    k: StrictInt = Field(default=3, ge=1)
    p: float = Field(default=2.0, gt=0)

    class Config:
        extra = "forbid"


@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    k: int = 3
    p: float = 2.0
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def input_length(self) -> int:
        return int(self.X.shape[1])

    def distances(self, query: np.ndarray) -> np.ndarray:
        """Minkowski distance from ``query`` to every stored trace."""
        diff = np.abs(self.X - query)
        if self.p == 2:
            return np.sqrt(np.sum(diff * diff, axis=1))
        if self.p == 1:
            return np.sum(diff, axis=1)
        return np.sum(diff**self.p, axis=1) ** (1.0 / self.p)

    def vote(self, query: np.ndarray, k: int | None = None) -> np.ndarray:
        k = self.k if k is None else k
        nearest = np.argsort(self.distances(query), kind="stable")[:k]
        return np.bincount(self.y[nearest], minlength=self.n_classes) / len(nearest)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_length:
            raise LengthMismatch(
                f"KNN model expects {self.input_length} samples, got {X.shape[1]}.",
                expected=self.input_length,
                got=int(X.shape[1]),
            )
        return np.stack([self.vote(row) for row in X]) if len(X) else np.zeros((0, self.n_classes))


def knn_fit(X: np.ndarray, y: np.ndarray, config: KnnConfig | None = None, n_classes: int | None = None) -> KnnModel:
    config = config or KnnConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if config.k > len(y):
        raise InvalidConfig(f"k={config.k} exceeds the {len(y)} training traces.", k=config.k, n=len(y))
    classes = int(n_classes if n_classes is not None else y.max() + 1)
    return KnnModel(X=X.copy(), y=y.copy(), n_classes=classes, k=config.k, p=config.p)


def knn_predict(model: KnnModel, trace: np.ndarray, k: int | None = None) -> tuple[int, np.ndarray]:
    """Label and vote fractions; ties go to the smallest class index."""
    query = np.asarray(trace, dtype=np.float64).reshape(-1)
    if query.size != model.input_length:
        raise LengthMismatch(
            f"KNN model expects {model.input_length} samples, got {query.size}.",
            expected=model.input_length,
            got=int(query.size),
        )
    scores = model.vote(query, k)
    return int(np.argmax(scores)), scores


# --- random forest -----------------------------------------------------------


class ForestConfig(BaseModel):
    n_trees: StrictInt = Field(default=100, ge=1)
    max_depth: StrictInt = Field(default=14, ge=1)
    seed: StrictInt = 0
    min_samples_split: StrictInt = Field(default=2, ge=2)

    class Config:
        extra = "forbid"


@dataclass
class DecisionTree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray
    depth: np.ndarray

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            inner = self.feature[node] >= 0
            if not inner.any():
                return node
            r, n = rows[inner], node[inner]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.label[self.apply(X)]


def _best_split(
    X: np.ndarray, onehot: np.ndarray, features: np.ndarray
) -> tuple[int, float, float] | None:
    """Best Gini split over ``features``; None when every feature is constant."""
    n = len(X)
    values = X[:, features]
    order = np.argsort(values, axis=0, kind="stable")
    sorted_values = np.take_along_axis(values, order, axis=0)
    left_counts = np.cumsum(onehot[order], axis=0)[:-1]  # (n-1, m, K)
    total = onehot.sum(axis=0)
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    right_counts = total - left_counts
    gini_left = 1.0 - ((left_counts / n_left[..., None]) ** 2).sum(axis=2)
    gini_right = 1.0 - ((right_counts / n_right[..., None]) ** 2).sum(axis=2)
    impurity = (n_left * gini_left + n_right * gini_right) / n
    valid = sorted_values[1:] > sorted_values[:-1]
    if not valid.any():
        return None
    impurity = np.where(valid, impurity, np.inf)
    position, column = np.unravel_index(np.argmin(impurity), impurity.shape)
    lower, upper = sorted_values[position, column], sorted_values[position + 1, column]
    threshold = (lower + upper) / 2.0
    # Adjacent floats can round the midpoint onto ``upper``.
    if not lower <= threshold < upper:
        threshold = lower
    return int(features[column]), float(threshold), float(impurity[position, column])


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, config: ForestConfig, rng: np.random.Generator) -> DecisionTree:
    n_features = X.shape[1]
    per_split = max(1, int(math.sqrt(n_features)))
    onehot = np.eye(n_classes)[y]
    feature, threshold, left, right, label, depth = [], [], [], [], [], []

    def new_node(node_depth: int, members: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        label.append(int(np.argmax(np.bincount(y[members], minlength=n_classes))))
        depth.append(node_depth)
        return len(feature) - 1

    stack = [(new_node(0, np.arange(len(y))), np.arange(len(y)))]
    while stack:
        node, members = stack.pop()
        node_depth = depth[node]
        if node_depth >= config.max_depth or len(members) < config.min_samples_split:
            continue
        if np.unique(y[members]).size == 1:
            continue
        candidates = rng.permutation(n_features)
        split = None
        # Keep drawing feature batches until one holds a non-constant feature.
        for start in range(0, n_features, per_split):
            split = _best_split(X[members], onehot[members], candidates[start : start + per_split])
            if split is not None:
                break
        if split is None:
            continue
        chosen, cut, _ = split
        goes_left = X[members, chosen] <= cut
        if goes_left.all() or not goes_left.any():
            continue
        feature[node], threshold[node] = chosen, cut
        left_members, right_members = members[goes_left], members[~goes_left]
        left[node] = new_node(node_depth + 1, left_members)
        right[node] = new_node(node_depth + 1, right_members)
        stack.append((right[node], right_members))
        stack.append((left[node], left_members))
    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        label=np.array(label, dtype=np.int64),
        depth=np.array(depth, dtype=np.int64),
    )


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    n_classes: int
    n_features: int
    config: ForestConfig = field(default_factory=ForestConfig)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def input_length(self) -> int:
        return self.n_features

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise LengthMismatch(
                f"Forest expects {self.n_features} samples, got {X.shape[1]}.",
                expected=self.n_features,
                got=int(X.shape[1]),
            )
        votes = np.zeros((len(X), self.n_classes))
        rows = np.arange(len(X))
        for tree in self.trees:
            votes[rows, tree.predict(X)] += 1
        return votes / len(self.trees)


def rf_fit(X: np.ndarray, y: np.ndarray, config: ForestConfig | None = None, n_classes: int | None = None) -> RandomForestModel:
    """Bootstrap-aggregated Gini trees, one child seed per tree."""
    config = config or ForestConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if np.unique(y).size < 2:
        raise SingleClass("Random forest needs at least two classes in the training set.", classes=np.unique(y).tolist())
    classes = int(n_classes if n_classes is not None else y.max() + 1)
    started = time.perf_counter()
    trees = []
    for child in np.random.SeedSequence(config.seed).spawn(config.n_trees):
        rng = np.random.default_rng(child)
        sample = rng.integers(0, len(y), len(y))
        trees.append(grow_tree(X[sample], y[sample], classes, config, rng))
    logger.info(
        "baselines forest_fitted trees=%s max_depth=%s ms=%.2f",
        len(trees),
        max(tree.max_depth for tree in trees),
        (time.perf_counter() - started) * 1000,
    )
    return RandomForestModel(trees=trees, n_classes=classes, n_features=X.shape[1], config=config)


def rf_predict(model: RandomForestModel, trace: np.ndarray) -> tuple[int, np.ndarray]:
    scores = model.predict_proba(np.asarray(trace, dtype=np.float64).reshape(1, -1))[0]
    return int(np.argmax(scores)), scores


# --- persistence ---------------------------------------------------------------

_TREE_FIELDS = ("feature", "threshold", "left", "right", "label", "depth")


def save_knn(model: KnnModel, path: str | Path) -> None:
    header = {"n_classes": model.n_classes, "k": model.k, "p": model.p, "metadata": model.metadata}
    save_container(path, "knn", header, {"X": model.X, "y": model.y})


def load_knn(path: str | Path) -> KnnModel:
    _, header, arrays = load_container(path, expected_tag="knn")
    return KnnModel(
        X=arrays["X"], y=arrays["y"], n_classes=header["n_classes"], k=header["k"], p=header["p"], metadata=header["metadata"]
    )


def save_forest(model: RandomForestModel, path: str | Path) -> None:
    sizes = [len(tree.feature) for tree in model.trees]
    arrays = {name: np.concatenate([getattr(tree, name) for tree in model.trees]) for name in _TREE_FIELDS}
    arrays["sizes"] = np.array(sizes, dtype=np.int64)
    header = {
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "config": model.config.model_dump(),
        "metadata": model.metadata,
    }
    save_container(path, "rf", header, arrays)


def load_forest(path: str | Path) -> RandomForestModel:
    _, header, arrays = load_container(path, expected_tag="rf")
    bounds = np.concatenate([[0], np.cumsum(arrays["sizes"])])
    trees = [
        DecisionTree(**{name: arrays[name][start:end] for name in _TREE_FIELDS})
        for start, end in zip(bounds[:-1], bounds[1:])
    ]
    return RandomForestModel(
        trees=trees,
        n_classes=header["n_classes"],
        n_features=header["n_features"],
        config=ForestConfig.model_validate(header["config"]),
        metadata=header["metadata"],
    )
