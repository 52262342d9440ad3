"""Canonical on-disk trace format, dataset ingestion, splitting and scaling.

Dataset layout::

    <root>/benign/<class-name>/trace_000.csv
    <root>/benign/<class-name>/trace_000.meta.json
    <root>/attack/<attack-name>/trace_000.csv

A trace file has the header ``delta_uj`` followed by one value per row.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np
from pydantic import BaseModel, Field, StrictInt, model_validator

from detector._shared.errors import (
    DegenerateData,
    EmptyClass,
    EmptyDataset,
    FormatError,
    InsufficientTraces,
    TooShort,
    UnknownAttackName,
)

logger = logging.getLogger("detector.traceio")

HEADER = "delta_uj"

ATTACK_NAMES: tuple[str, ...] = (
    "flush-flush",
    "flush-reload",
    "prime-probe",
    "spectre-v1",
    "spectre-v2",
    "spectre-v3",
    "spectre-v4",
    "portsmash",
    "tlbleed",
    "zombieload",
    "medusa-v1",
    "medusa-v2",
    "medusa-v3",
    "fallout",
    "bhi",
)

_ATTACK_ALIASES = {
    "spectre-pht": "spectre-v1",
    "spectre-btb": "spectre-v2",
    "spectre-rsb": "spectre-v3",
    "spectre-stl": "spectre-v4",
    "branch-history-injection": "bhi",
    "wtf": "fallout",
}

# Benign applications seen during training; anything else is an unseen application.
KNOWN_BENIGN_APPS: frozenset[str] = frozenset(
    {
        "aobench", "botan-1", "botan-2", "botan-3", "byte", "cachebench-1", "cachebench-2",
        "encode-mp3", "arrayfire-1", "arrayfire-2", "bullet-1", "bullet-2", "bullet-3",
        "jpegxl-1", "jpegxl-2", "git", "php-1", "php-2", "pybench", "basis", "blogbench",
        "tiobench-1", "tiobench-2", "unpack-linux", "fio", "website-stream", "libre-office",
        "visual-studio-code", "pycharm", "zoom", "youtube-stream-1", "youtube-stream-2",
        "youtube-stream-3", "youtube-stream-4", "youtube-stream-5",
    }
)


def normalize_name(name: str) -> str:
    text = name.strip().lower()
    text = re.sub(r"[\s_+]+", "-", text)
    return re.sub(r"-+", "-", text).strip("-")


def attack_index(name: str) -> int:
    key = normalize_name(name)
    key = _ATTACK_ALIASES.get(key, key)
    try:
        return ATTACK_NAMES.index(key)
    except ValueError:
        raise UnknownAttackName(f"Unknown attack name: {name}.", name=name) from None


class Family(str, Enum):
    BENIGN = "benign"
    ATTACK = "attack"


class ClassLabel(BaseModel):
    family: Family
    name: str
    attack_index: StrictInt | None = None

    class Config:
        extra = "forbid"
        frozen = True

    @model_validator(mode="after")
    def _index_matches_family(self) -> "ClassLabel":
        if self.family is Family.ATTACK:
            if self.attack_index is None or not 0 <= self.attack_index < len(ATTACK_NAMES):
                raise ValueError("attack labels need attack_index in [0, 14]")
        elif self.attack_index is not None:
            raise ValueError("benign labels carry no attack_index")
        return self

    @classmethod
    def benign(cls, name: str) -> "ClassLabel":
        return cls(family=Family.BENIGN, name=normalize_name(name))

    @classmethod
    def attack(cls, name: str) -> "ClassLabel":
        index = attack_index(name)
        return cls(family=Family.ATTACK, name=ATTACK_NAMES[index], attack_index=index)

    @classmethod
    def parse(cls, name: str) -> "ClassLabel":
        """Attack label when ``name`` is a known attack, benign otherwise."""
        try:
            return cls.attack(name)
        except UnknownAttackName:
            return cls.benign(name)

    @property
    def is_attack(self) -> bool:
        return self.family is Family.ATTACK


UNLABELED = ClassLabel(family=Family.BENIGN, name="unlabeled")


class TraceMeta(BaseModel):
    domain: str = "pp0"
    nominal_interval_us: StrictInt = 500
    captured_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    achieved_period_us: float = 500.0
    duration_s: float = 0.0

    class Config:
        extra = "forbid"
        frozen = True


@dataclass(frozen=True, eq=False)
class EnergyTrace:
    deltas: np.ndarray
    label: ClassLabel = UNLABELED
    meta: TraceMeta = field(default_factory=TraceMeta)
    trace_id: str = ""

    def __post_init__(self) -> None:
        values = np.array(self.deltas, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise TooShort("Trace must contain at least one sample.", trace_id=self.trace_id)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise FormatError("Trace deltas must be finite and non-negative.", line=0, trace_id=self.trace_id)
        values.flags.writeable = False
        object.__setattr__(self, "deltas", values)

    def __len__(self) -> int:
        return int(self.deltas.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EnergyTrace):
            return NotImplemented
        return (
            np.array_equal(self.deltas, other.deltas)
            and self.label == other.label
            and self.meta == other.meta
        )

    __hash__ = None  # type: ignore[assignment]

    def with_deltas(self, deltas: np.ndarray) -> "EnergyTrace":
        return EnergyTrace(deltas=deltas, label=self.label, meta=self.meta, trace_id=self.trace_id)


class Dataset:
    """Immutable list of traces plus a class-name index."""

    def __init__(self, traces: Iterable[EnergyTrace]) -> None:
        self.traces: tuple[EnergyTrace, ...] = tuple(traces)
        index: dict[str, list[int]] = {}
        for position, trace in enumerate(self.traces):
            index.setdefault(trace.label.name, []).append(position)
        self.class_index: dict[str, tuple[int, ...]] = {name: tuple(idx) for name, idx in sorted(index.items())}
        self.labels: dict[str, ClassLabel] = {name: self.traces[idx[0]].label for name, idx in self.class_index.items()}

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @property
    def class_names(self) -> list[str]:
        return list(self.class_index)

    @property
    def min_length(self) -> int:
        return min((len(trace) for trace in self.traces), default=0)

    def subset(self, positions: Iterable[int]) -> "Dataset":
        return Dataset(self.traces[p] for p in positions)

    def attacks_only(self) -> "Dataset":
        return Dataset(trace for trace in self.traces if trace.label.is_attack)

    def matrix(self) -> np.ndarray:
        """Stack traces into a ``(n_traces, n_samples)`` float64 matrix."""
        lengths = {len(trace) for trace in self.traces}
        if len(lengths) != 1:
            raise TooShort("Traces have unequal lengths; truncate first.", lengths=sorted(lengths))
        return np.stack([trace.deltas for trace in self.traces])

    def anomaly_targets(self) -> np.ndarray:
        return np.array([1 if trace.label.is_attack else 0 for trace in self.traces], dtype=np.int64)

    def attack_targets(self) -> np.ndarray:
        targets = [trace.label.attack_index for trace in self.traces]
        if any(target is None for target in targets):
            raise EmptyClass("Attack targets requested for a dataset containing benign traces.")
        return np.array(targets, dtype=np.int64)


# --- trace files ---------------------------------------------------------


def _format_value(value: float) -> str:
    if float(value).is_integer() and abs(value) < 2**53:
        return str(int(value))
    return repr(float(value))


def meta_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def write_trace(trace: EnergyTrace, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [HEADER, *(_format_value(v) for v in trace.deltas)]
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
    sidecar = {
        "trace_id": trace.trace_id,
        "label": trace.label.model_dump(mode="json"),
        "meta": trace.meta.model_dump(mode="json"),
    }
    with open(meta_path(path), "w", encoding="utf-8", newline="\n") as handle:
        json.dump(sidecar, handle, sort_keys=True, indent=2)
        handle.write("\n")


def _parse_rows(path: Path) -> np.ndarray:
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != HEADER:
        raise FormatError(f"{path}: missing '{HEADER}' header.", line=1, path=str(path))
    values = []
    for number, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        try:
            value = float(text)
        except ValueError:
            raise FormatError(f"{path}:{number}: not a number: {text!r}.", line=number, path=str(path)) from None
        if not math.isfinite(value) or value < 0:
            raise FormatError(f"{path}:{number}: delta must be finite and >= 0.", line=number, path=str(path))
        values.append(value)
    if not values:
        raise FormatError(f"{path}: no samples.", line=2, path=str(path))
    return np.array(values, dtype=np.float64)


def read_deltas(path: str | Path) -> np.ndarray:
    return _parse_rows(Path(path))


def read_trace(path: str | Path, label: ClassLabel | None = None) -> EnergyTrace:
    path = Path(path)
    deltas = _parse_rows(path)
    sidecar_path = meta_path(path)
    trace_id = path.stem
    meta = TraceMeta()
    stored_label = None
    if sidecar_path.exists():
        try:
            sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
            meta = TraceMeta.model_validate(sidecar.get("meta", {}))
            stored_label = ClassLabel.model_validate(sidecar["label"]) if "label" in sidecar else None
            trace_id = sidecar.get("trace_id") or trace_id
        except (ValueError, KeyError) as exc:
            raise FormatError(f"{sidecar_path}: malformed metadata ({exc}).", line=1, path=str(sidecar_path)) from exc
    return EnergyTrace(deltas=deltas, label=label or stored_label or UNLABELED, meta=meta, trace_id=trace_id)


# --- datasets ------------------------------------------------------------


def trace_filename(index: int) -> str:
    return f"trace_{index:03d}.csv"


def _trace_files(directory: Path) -> list[Path]:
    return sorted(directory.glob("*.csv"))


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    traces: list[EnergyTrace] = []
    for family in (Family.BENIGN, Family.ATTACK):
        family_dir = root / family.value
        if not family_dir.is_dir():
            continue
        for class_dir in sorted(p for p in family_dir.iterdir() if p.is_dir()):
            label = ClassLabel.attack(class_dir.name) if family is Family.ATTACK else ClassLabel.benign(class_dir.name)
            files = _trace_files(class_dir)
            if not files:
                raise EmptyClass(f"Class directory {class_dir} holds no traces.", class_name=label.name)
            for file in files:
                trace = read_trace(file, label=label)
                traces.append(
                    EnergyTrace(deltas=trace.deltas, label=label, meta=trace.meta, trace_id=f"{label.name}/{file.stem}")
                )
    if not traces:
        raise EmptyDataset(f"No traces found under {root}.", root=str(root))
    dataset = Dataset(traces)
    logger.info("traceio dataset_loaded root=%s traces=%s classes=%s", root, len(dataset), len(dataset.class_index))
    return dataset


def write_dataset(dataset: Dataset, root: str | Path) -> None:
    root = Path(root)
    for name, positions in dataset.class_index.items():
        label = dataset.labels[name]
        for number, position in enumerate(positions):
            write_trace(dataset.traces[position], root / label.family.value / name / trace_filename(number))


def import_matrix_dir(directory: str | Path, transpose: bool = False, delimiter: str = ",") -> Dataset:
    """Read per-class matrices: ``<class>.csv`` with one trace per row.

    Rows are traces unless ``transpose`` is set, in which case columns are.
    A non-numeric first row is treated as a header and skipped. The class name
    comes from the file stem and decides the family via the attack list.
    """
    directory = Path(directory)
    traces: list[EnergyTrace] = []
    for file in sorted(directory.glob("*.csv")):
        label = ClassLabel.parse(file.stem)
        try:
            matrix = np.genfromtxt(file, delimiter=delimiter, dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"{file}: {exc}.", line=0, path=str(file)) from exc
        matrix = np.atleast_2d(matrix)
        if matrix.size and np.all(np.isnan(matrix[0])):
            matrix = matrix[1:]
        if transpose:
            matrix = matrix.T
        for row_number, row in enumerate(matrix):
            row = row[~np.isnan(row)]
            if row.size == 0:
                continue
            traces.append(EnergyTrace(deltas=row, label=label, trace_id=f"{label.name}/row_{row_number:03d}"))
        if not any(trace.label == label for trace in traces):
            raise EmptyClass(f"{file} holds no traces.", class_name=label.name)
    if not traces:
        raise EmptyDataset(f"No class matrices found under {directory}.", root=str(directory))
    return Dataset(traces)


# --- splitting / truncation ------------------------------------------------


class SplitSpec(BaseModel):
    train_per_class: StrictInt = Field(default=40, ge=0)
    val_per_class: StrictInt = Field(default=10, ge=0)
    seed: StrictInt = 0

    class Config:
        extra = "forbid"


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    needed = spec.train_per_class + spec.val_per_class
    rng = np.random.default_rng(spec.seed)
    train_positions: list[int] = []
    val_positions: list[int] = []
    for name, positions in dataset.class_index.items():
        if len(positions) < needed:
            raise InsufficientTraces(
                f"Class {name} has {len(positions)} traces, split needs {needed}.",
                class_name=name,
                available=len(positions),
                needed=needed,
            )
        order = rng.permutation(len(positions))
        chosen = [positions[i] for i in order]
        train_positions.extend(chosen[: spec.train_per_class])
        val_positions.extend(chosen[spec.train_per_class : needed])
    return dataset.subset(sorted(train_positions)), dataset.subset(sorted(val_positions))


def truncate(dataset: Dataset, n_samples: int) -> Dataset:
    if n_samples < 1:
        raise TooShort("n_samples must be at least 1.", n_samples=n_samples)
    kept = []
    for trace in dataset.traces:
        if len(trace) < n_samples:
            raise TooShort(
                f"Trace {trace.trace_id or '?'} has {len(trace)} samples, {n_samples} requested.",
                trace_id=trace.trace_id,
                length=len(trace),
                n_samples=n_samples,
            )
        kept.append(trace.with_deltas(trace.deltas[:n_samples]))
    return Dataset(kept)


# --- standardization -------------------------------------------------------


class Standardizer(BaseModel):
    mean: float
    std: float = Field(gt=0)

    class Config:
        extra = "forbid"
        frozen = True

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def fit_standardizer(train: Dataset) -> Standardizer:
    if len(train) == 0:
        raise EmptyDataset("Cannot fit a standardizer on an empty training set.")
    pooled = np.concatenate([trace.deltas for trace in train.traces])
    mean = float(pooled.mean())
    std = float(pooled.std())
    if not std > 0:
        raise DegenerateData("Training data is constant; standard deviation is zero.", mean=mean)
    return Standardizer(mean=mean, std=std)


def apply(standardizer: Standardizer, dataset: Dataset) -> "ScaledDataset":
    return ScaledDataset(dataset, standardizer)


class ScaledDataset:
    """A dataset whose values are standardized.

    Standardized values can be negative, so they are kept as a matrix rather
    than as ``EnergyTrace`` objects; labels come from the source dataset.
    Applying a standardizer to a ``ScaledDataset`` is rejected so a pipeline
    cannot scale twice.
    """

    def __init__(self, source: Dataset, standardizer: Standardizer) -> None:
        if isinstance(source, ScaledDataset):
            raise DegenerateData("Dataset is already standardized.")
        self.source = source
        self.standardizer = standardizer
        self.values = [standardizer.transform(trace.deltas) for trace in source.traces]

    def __len__(self) -> int:
        return len(self.source)

    @property
    def traces(self) -> tuple[EnergyTrace, ...]:
        return self.source.traces

    @property
    def class_index(self) -> dict[str, tuple[int, ...]]:
        return self.source.class_index

    def matrix(self) -> np.ndarray:
        lengths = {len(v) for v in self.values}
        if len(lengths) != 1:
            raise TooShort("Traces have unequal lengths; truncate first.", lengths=sorted(lengths))
        return np.stack(self.values)

    def anomaly_targets(self) -> np.ndarray:
        return self.source.anomaly_targets()

    def attack_targets(self) -> np.ndarray:
        return self.source.attack_targets()

    def attacks_only(self) -> "ScaledDataset":
        return ScaledDataset(self.source.attacks_only(), self.standardizer)


def prepare(train: Dataset, val: Dataset, n_samples: int) -> tuple[ScaledDataset, ScaledDataset, Standardizer]:
    """Truncate both sets, fit on train only, scale both."""
    train_cut = truncate(train, n_samples)
    val_cut = truncate(val, n_samples)
    standardizer = fit_standardizer(train_cut)
    return apply(standardizer, train_cut), apply(standardizer, val_cut), standardizer
