"""Samples-vs-score sweeps comparing the CNN against the KNN and forest baselines."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, StrictInt

from detector.baselines import ForestConfig
from detector.metrics import EvalReport, report
from detector.models import ConvNetConfig, TrainConfig, train_ad, train_ar, train_baseline
from detector.traceio import Dataset, SplitSpec, split

logger = logging.getLogger("detector.engine")

DEFAULT_SAMPLE_COUNTS = (500, 1000, 1500, 2000, 2500, 3000)
SWEEP_COLUMNS = ("task", "algorithm", "n_samples", "accuracy", "f1", "auc", "fpr", "fnr")


class SweepRow(BaseModel):
    task: Literal["ad", "ar"]
    algorithm: Literal["cnn", "knn", "rf"]
    n_samples: StrictInt
    accuracy: float
    f1: float | None = None
    auc: float | None = None
    fpr: float | None = None
    fnr: float | None = None

    @classmethod
    def from_report(cls, algorithm: str, result: EvalReport) -> "SweepRow":
        return cls(
            task=result.task,
            algorithm=algorithm,
            n_samples=result.n_samples,
            accuracy=result.accuracy,
            f1=result.f1,
            auc=result.auc,
            fpr=result.fpr,
            fnr=result.fnr,
        )


def train_and_report(
    algorithm: str,
    task: Literal["ad", "ar"],
    train: Dataset,
    val: Dataset,
    config: TrainConfig,
    net: ConvNetConfig | None = None,
    forest: ForestConfig | None = None,
) -> EvalReport:
    if algorithm == "cnn":
        trainer = train_ad if task == "ad" else train_ar
        trained = trainer(train, val, config, net=net)
    else:
        trained = train_baseline(algorithm, task, train, config.n_samples, forest=forest)
    return report(trained.model, val, task, model_id=f"{task}-{algorithm}-{config.n_samples}")


def sweep(
    dataset: Dataset,
    spec: SplitSpec,
    config: TrainConfig,
    sample_counts: tuple[int, ...] = DEFAULT_SAMPLE_COUNTS,
    tasks: tuple[str, ...] = ("ad", "ar"),
    algorithms: tuple[str, ...] = ("cnn", "knn", "rf"),
    net: ConvNetConfig | None = None,
    forest: ForestConfig | None = None,
) -> list[SweepRow]:
    """One model per (task, algorithm, input length), all scored on the same validation split."""
    train, val = split(dataset, spec)
    rows = []
    for n_samples in sample_counts:
        per_length = config.model_copy(update={"n_samples": n_samples})
        for task in tasks:
            for algorithm in algorithms:
                result = train_and_report(algorithm, task, train, val, per_length, net, forest)
                row = SweepRow.from_report(algorithm, result)
                rows.append(row)
                logger.info(
                    "engine sweep_point task=%s algorithm=%s n_samples=%s accuracy=%.4f f1=%s auc=%s",
                    task,
                    algorithm,
                    n_samples,
                    row.accuracy,
                    row.f1,
                    row.auc,
                )
    return rows


def write_sweep_csv(rows: list[SweepRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            values = row.model_dump()
            writer.writerow(["" if values[c] is None else values[c] for c in SWEEP_COLUMNS])
