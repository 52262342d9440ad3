"""Confusion matrices, F1, FPR/FNR, ROC-AUC and evaluation reports.

The positive class of every binary metric is the anomaly class (index 1).
Rates whose denominator is zero are reported as 0 and named in the
report's ``zero_denominator`` list.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np
from fastapi import APIRouter
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, StrictInt, ValidationError

from detector._shared.errors import (
    DetectorError,
    EmptyDataset,
    InputInvalid,
    InvalidConfig,
    LengthMismatch,
    NotBinary,
    SingleClassTruth,
)

logger = logging.getLogger("detector.metrics")

router = APIRouter()

POSITIVE = 1


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def binary_cells(self, positive: int = POSITIVE) -> tuple[int, int, int, int]:
        """``(tp, fp, fn, tn)`` for a two-class matrix."""
        if self.n_classes != 2:
            raise NotBinary(f"Expected a 2x2 confusion matrix, got {self.n_classes}x{self.n_classes}.")
        negative = 1 - positive
        c = self.counts
        return int(c[positive, positive]), int(c[negative, positive]), int(c[positive, negative]), int(c[negative, negative])


def confusion(truth: Any, predictions: Any, n_classes: int | None = None) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    if truth.size != predictions.size:
        raise LengthMismatch(
            f"truth has {truth.size} entries, predictions {predictions.size}.",
            truth=int(truth.size),
            predictions=int(predictions.size),
        )
    if n_classes is None:
        n_classes = max(2, int(max(truth.max(initial=0), predictions.max(initial=0))) + 1)
    labels = np.concatenate([truth, predictions])
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidConfig(f"Class labels must lie in [0, {n_classes}).", n_classes=n_classes)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (truth, predictions), 1)
    return ConfusionMatrix(counts)


def _ratio(numerator: float, denominator: float) -> tuple[float, bool]:
    if denominator == 0:
        return 0.0, True
    return numerator / denominator, False


def precision_recall(cm: ConfusionMatrix, positive: int = POSITIVE) -> tuple[float, float]:
    tp, fp, fn, _ = cm.binary_cells(positive)
    return _ratio(tp, tp + fp)[0], _ratio(tp, tp + fn)[0]


def f1(cm: ConfusionMatrix, positive: int = POSITIVE) -> float:
    precision, recall = precision_recall(cm, positive)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def fpr_fnr(cm: ConfusionMatrix, positive: int = POSITIVE) -> tuple[float, float]:
    tp, fp, fn, tn = cm.binary_cells(positive)
    return _ratio(fp, fp + tn)[0], _ratio(fn, fn + tp)[0]


def accuracy(cm: ConfusionMatrix) -> float:
    return _ratio(float(np.trace(cm.counts)), cm.total)[0]


def _binary_inputs(scores: Any, truth: Any) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if scores.size != truth.size:
        raise LengthMismatch(f"scores has {scores.size} entries, truth {truth.size}.")
    if not np.isin(truth, (0, 1)).all():
        raise NotBinary("ROC truth labels must be 0 or 1.")
    if truth.min(initial=1) == truth.max(initial=0) or truth.size == 0:
        raise SingleClassTruth("ROC-AUC needs both classes in the truth labels.")
    return scores, truth


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    unique, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    mean_rank = upper - (counts - 1) / 2.0
    return mean_rank[inverse]


def roc_auc(scores: Any, truth: Any) -> float:
    """Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly, ties count 1/2."""
    scores, truth = _binary_inputs(scores, truth)
    positives = int(truth.sum())
    negatives = truth.size - positives
    rank_sum = float(average_ranks(scores)[truth == 1].sum())
    return (rank_sum - positives * (positives + 1) / 2.0) / (positives * negatives)


def roc_curve(scores: Any, truth: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(fpr, tpr, thresholds)`` with one point per distinct score, starting at (0, 0)."""
    scores, truth = _binary_inputs(scores, truth)
    order = np.argsort(-scores, kind="stable")
    ordered_scores, ordered_truth = scores[order], truth[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(ordered_scores)), ordered_truth.size - 1]
    tp = np.cumsum(ordered_truth)[last_of_group]
    fp = (last_of_group + 1) - tp
    fpr = np.r_[0.0, fp / (truth.size - truth.sum())]
    tpr = np.r_[0.0, tp / truth.sum()]
    thresholds = np.r_[np.inf, ordered_scores[last_of_group]]
    return fpr, tpr, thresholds


def trapezoid_area(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


class ClassMetrics(BaseModel):
    precision: float
    recall: float
    support: StrictInt


class EvalReport(BaseModel):
    task: Literal["ad", "ar"]
    model_id: str = ""
    n_samples: StrictInt
    n_traces: StrictInt
    threshold: float | None = None
    accuracy: float
    f1: float | None = None
    fpr: float | None = None
    fnr: float | None = None
    auc: float | None = None
    per_class: dict[str, ClassMetrics] = Field(default_factory=dict)
    zero_denominator: list[str] = Field(default_factory=list)
    confusion: list[list[int]] = Field(default_factory=list)
    class_names: list[str] = Field(default_factory=list)

    class Config:
        extra = "forbid"


def per_class_metrics(cm: ConfusionMatrix, names: list[str]) -> tuple[dict[str, ClassMetrics], list[str]]:
    flagged = []
    result = {}
    for index, name in enumerate(names):
        column = int(cm.counts[:, index].sum())
        row = int(cm.counts[index].sum())
        precision, p_zero = _ratio(cm.counts[index, index], column)
        recall, r_zero = _ratio(cm.counts[index, index], row)
        if p_zero:
            flagged.append(f"precision[{name}]")
        if r_zero:
            flagged.append(f"recall[{name}]")
        result[name] = ClassMetrics(precision=float(precision), recall=float(recall), support=row)
    return result, flagged


def binary_report(
    scores: np.ndarray, truth: np.ndarray, threshold: float = 0.5, model_id: str = "", n_samples: int = 0
) -> EvalReport:
    """AD metrics from anomaly scores; AUC is omitted (and flagged) for single-class truth."""
    truth = np.asarray(truth, dtype=np.int64)
    if truth.size == 0:
        raise EmptyDataset("Cannot evaluate an empty dataset.")
    if not np.isin(truth, (0, 1)).all():
        raise NotBinary("Binary reports need truth labels 0 or 1.")
    predictions = (np.asarray(scores) >= threshold).astype(np.int64)
    cm = confusion(truth, predictions, n_classes=2)
    tp, fp, fn, tn = cm.binary_cells()
    flagged = [name for name, den in (("fpr", fp + tn), ("fnr", fn + tp), ("precision", tp + fp), ("recall", tp + fn)) if den == 0]
    try:
        auc = roc_auc(scores, truth)
    except SingleClassTruth:
        auc = None
        flagged.append("auc")
    fpr, fnr = fpr_fnr(cm)
    per_class, _ = per_class_metrics(cm, ["benign", "anomaly"])
    return EvalReport(
        task="ad",
        model_id=model_id,
        n_samples=n_samples,
        n_traces=int(truth.size),
        threshold=threshold,
        accuracy=accuracy(cm),
        f1=f1(cm),
        fpr=fpr,
        fnr=fnr,
        auc=auc,
        per_class=per_class,
        zero_denominator=flagged,
        confusion=cm.counts.tolist(),
        class_names=["benign", "anomaly"],
    )


def multiclass_report(
    probabilities: np.ndarray, truth: np.ndarray, names: list[str], model_id: str = "", n_samples: int = 0
) -> EvalReport:
    truth = np.asarray(truth, dtype=np.int64)
    if truth.size == 0:
        raise EmptyDataset("Cannot evaluate an empty dataset.")
    cm = confusion(truth, np.asarray(probabilities).argmax(axis=1), n_classes=len(names))
    per_class, flagged = per_class_metrics(cm, names)
    return EvalReport(
        task="ar",
        model_id=model_id,
        n_samples=n_samples,
        n_traces=int(truth.size),
        accuracy=accuracy(cm),
        per_class=per_class,
        zero_denominator=flagged,
        confusion=cm.counts.tolist(),
        class_names=list(names),
    )


def report(model: Any, dataset: Any, task: Literal["ad", "ar"], threshold: float = 0.5, model_id: str = "") -> EvalReport:
    """Evaluate a model on a dataset of raw traces.

    Traces are truncated to the model's input length. AR reports use only the
    attack traces of ``dataset``.
    """
    from detector.models import predict_scores
    from detector.traceio import ATTACK_NAMES, truncate

    if task == "ar":
        dataset = dataset.attacks_only()
    if len(dataset) == 0:
        raise EmptyDataset("Cannot evaluate an empty dataset.")
    n_samples = model.input_length
    X = truncate(dataset, n_samples).matrix()
    probabilities = predict_scores(model, X)
    if task == "ad":
        result = binary_report(probabilities[:, 1], dataset.anomaly_targets(), threshold, model_id, n_samples)
    else:
        result = multiclass_report(probabilities, dataset.attack_targets(), list(ATTACK_NAMES), model_id, n_samples)
    logger.info(
        "metrics report task=%s model=%s traces=%s accuracy=%.4f f1=%s auc=%s",
        task,
        model_id,
        result.n_traces,
        result.accuracy,
        result.f1,
        result.auc,
    )
    return result


# --- outputs ---------------------------------------------------------------------


def format_report(result: EvalReport) -> str:
    """Flat ``key=value`` lines, one metric per line."""
    lines = [f"task={result.task}", f"model={result.model_id}", f"n_samples={result.n_samples}", f"n_traces={result.n_traces}"]
    for key in ("threshold", "accuracy", "f1", "fpr", "fnr", "auc"):
        value = getattr(result, key)
        if value is not None:
            lines.append(f"{key}={value:.6f}")
    for name, metrics in result.per_class.items():
        lines.append(f"precision[{name}]={metrics.precision:.6f}")
        lines.append(f"recall[{name}]={metrics.recall:.6f}")
    if result.zero_denominator:
        lines.append(f"zero_denominator={','.join(result.zero_denominator)}")
    return "\n".join(lines) + "\n"


def write_report(result: EvalReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(result.model_dump(mode="json"), handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_confusion_csv(result: EvalReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["true\\predicted", *result.class_names])
        for name, row in zip(result.class_names, result.confusion):
            writer.writerow([name, *row])


# --- HTTP capability ---------------------------------------------------------------


class EvaluateInput(BaseModel):
    truth: list[StrictInt]
    predictions: list[StrictInt] | None = None
    scores: list[float] | None = None
    threshold: float = 0.5

    class Config:
        extra = "forbid"


def _fail(error: DetectorError, stage: str, path: str = "") -> JSONResponse:
    return JSONResponse(
        status_code=error.http_status,
        content={
            "ok": False,
            "tool": "evaluate_predictions",
            "version": "1.0",
            "result": None,
            "error": error.to_structured("evaluate_predictions", stage, path),
        },
    )


@router.post("/tools/evaluate_predictions")
def evaluate_predictions(payload: dict[str, Any]):
    try:
        data = EvaluateInput.model_validate(payload)
    except ValidationError:
        return _fail(InputInvalid("Input must match the evaluate_predictions schema."), "validate")
    if data.predictions is None and data.scores is None:
        return _fail(InputInvalid("Provide predictions, scores or both."), "validate", "predictions")
    try:
        if data.scores is not None:
            scores = np.asarray(data.scores, dtype=np.float64)
            if scores.size != len(data.truth):
                raise LengthMismatch(f"scores has {scores.size} entries, truth {len(data.truth)}.")
            result = binary_report(scores, np.asarray(data.truth), data.threshold).model_dump(mode="json")
        else:
            cm = confusion(data.truth, data.predictions)
            result = {"accuracy": accuracy(cm), "confusion": cm.counts.tolist()}
            if cm.n_classes == 2:
                result["f1"] = f1(cm)
                result["fpr"], result["fnr"] = fpr_fnr(cm)
    except DetectorError as error:
        return _fail(error, "evaluate")
    return {"ok": True, "tool": "evaluate_predictions", "version": "1.0", "result": result, "error": None}


CONTRACT = {
    "name": "evaluate_predictions",
    "version": "1.0.0",
    "path": "/tools/evaluate_predictions",
    "description": "Confusion matrix, accuracy, F1, FPR/FNR and ROC-AUC from labels and predictions or scores.",
    "determinism": {"same_input_same_output": True, "side_effects": False, "network": False, "storage": False},
    "inputs": {
        "content_type": "application/json",
        "json_schema": {
            "type": "object",
            "properties": {
                "truth": {"type": "array", "items": {"type": "integer"}},
                "predictions": {"type": "array", "items": {"type": "integer"}},
                "scores": {"type": "array", "items": {"type": "number"}},
                "threshold": {"type": "number"},
            },
            "required": ["truth"],
            "additionalProperties": False,
        },
    },
    "outputs": {
        "content_type": "application/json",
        "json_schema": {
            "type": "object",
            "properties": {
                "ok": {"type": "boolean"},
                "tool": {"type": "string"},
                "version": {"type": "string"},
                "result": {"type": ["object", "null"]},
                "error": {"type": ["object", "null"]},
            },
            "required": ["ok", "tool", "version", "result", "error"],
        },
    },
    "errors": {
        "codes": [
            {"code": "INPUT_INVALID", "when": "request body invalid or neither predictions nor scores given"},
            {"code": "CONFIG_INVALID", "when": "a label lies outside the class range"},
            {"code": "LENGTH_MISMATCH", "when": "truth and predictions differ in length"},
            {"code": "NOT_BINARY", "when": "scores given with non-binary truth"},
        ],
    },
    "non_goals": ["no significance testing", "no calibration curves"],
    "examples": [
        {
            "input": {"truth": [0, 0, 1, 1], "predictions": [0, 1, 1, 1]},
            "output": {
                "ok": True,
                "tool": "evaluate_predictions",
                "version": "1.0",
                "result": {"accuracy": 0.75, "confusion": [[1, 1], [0, 2]], "f1": 0.8, "fpr": 0.5, "fnr": 0.0},
                "error": None,
            },
        }
    ],
}
