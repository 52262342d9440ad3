import math

import numpy as np
import pytest

from detector._shared.errors import (
    DegenerateData,
    EmptyClass,
    EmptyDataset,
    FormatError,
    InsufficientTraces,
    TooShort,
    UnknownAttackName,
)
from detector.traceio import (
    ClassLabel,
    Dataset,
    EnergyTrace,
    SplitSpec,
    apply,
    attack_index,
    fit_standardizer,
    import_matrix_dir,
    load_dataset,
    read_trace,
    split,
    truncate,
    write_dataset,
    write_trace,
)


def _dataset(per_class, length=30, names=("aobench", "spectre-v1")):
    traces = []
    for c, name in enumerate(names):
        label = ClassLabel.parse(name)
        for k in range(per_class):
            traces.append(EnergyTrace(deltas=np.full(length, 100.0 * c + k), label=label, trace_id=f"{name}/{k}"))
    return Dataset(traces)


def test_trace_round_trip(tmp_path):
    trace = EnergyTrace(deltas=[1, 2, 3], label=ClassLabel.attack("zombieload"))
    path = tmp_path / "trace_000.csv"
    write_trace(trace, path)
    assert path.read_text().splitlines() == ["delta_uj", "1", "2", "3"]
    assert read_trace(path) == trace


def test_fractional_values_survive(tmp_path):
    trace = EnergyTrace(deltas=[0.1, 2.5, 1e-7])
    write_trace(trace, tmp_path / "t.csv")
    assert np.array_equal(read_trace(tmp_path / "t.csv").deltas, trace.deltas)


def test_long_trace_length(tmp_path):
    write_trace(EnergyTrace(deltas=np.arange(3000.0)), tmp_path / "t.csv")
    assert len(read_trace(tmp_path / "t.csv")) == 3000


def test_missing_header_reports_line_one(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("1\n2\n")
    with pytest.raises(FormatError) as excinfo:
        read_trace(path)
    assert excinfo.value.line == 1


@pytest.mark.parametrize("row, line", [("x", 3), ("-1", 3), ("nan", 3)])
def test_bad_row_reports_its_line(tmp_path, row, line):
    path = tmp_path / "t.csv"
    path.write_text(f"delta_uj\n5\n{row}\n")
    with pytest.raises(FormatError) as excinfo:
        read_trace(path)
    assert excinfo.value.line == line


def test_attack_names_are_normalized():
    assert attack_index("Flush+Reload") == attack_index("flush_reload") == 1
    assert attack_index("Spectre-PHT") == 3
    assert ClassLabel.parse("Visual Studio Code") == ClassLabel.benign("visual-studio-code")
    with pytest.raises(UnknownAttackName):
        ClassLabel.attack("rowhammer")


def test_load_dataset_counts(tmp_path):
    for family, name in (("benign", "aobench"), ("attack", "spectre-v1")):
        for k in range(2):
            write_trace(EnergyTrace(deltas=[k, 1, 2]), tmp_path / family / name / f"trace_{k:03d}.csv")
    dataset = load_dataset(tmp_path)
    assert len(dataset) == 4
    assert dataset.class_names == ["aobench", "spectre-v1"]
    assert dataset.anomaly_targets().tolist() == [0, 0, 1, 1]
    assert dataset.labels["spectre-v1"].attack_index == 3


def test_load_dataset_errors(tmp_path):
    with pytest.raises(EmptyDataset):
        load_dataset(tmp_path)
    (tmp_path / "benign" / "git").mkdir(parents=True)
    with pytest.raises(EmptyClass):
        load_dataset(tmp_path)
    (tmp_path / "benign" / "git").rmdir()
    write_trace(EnergyTrace(deltas=[1]), tmp_path / "attack" / "not-a-real-attack" / "trace_000.csv")
    with pytest.raises(UnknownAttackName):
        load_dataset(tmp_path)


def test_write_dataset_round_trip(tmp_path):
    dataset = _dataset(3)
    write_dataset(dataset, tmp_path)
    loaded = load_dataset(tmp_path)
    assert loaded.class_index == dataset.class_index
    assert all(a == b for a, b in zip(loaded.traces, dataset.traces))


def test_split_counts_and_disjointness():
    train, val = split(_dataset(50), SplitSpec(train_per_class=40, val_per_class=10, seed=0))
    assert {name: len(p) for name, p in train.class_index.items()} == {"aobench": 40, "spectre-v1": 40}
    assert {name: len(p) for name, p in val.class_index.items()} == {"aobench": 10, "spectre-v1": 10}
    train_ids = {t.trace_id for t in train}
    assert train_ids.isdisjoint(t.trace_id for t in val)


def test_split_is_seeded():
    spec = SplitSpec(train_per_class=1, val_per_class=1, seed=5)
    first, _ = split(_dataset(2), spec)
    second, _ = split(_dataset(2), spec)
    assert [t.trace_id for t in first] == [t.trace_id for t in second]


def test_split_needs_enough_traces():
    with pytest.raises(InsufficientTraces) as excinfo:
        split(_dataset(2), SplitSpec(train_per_class=40, val_per_class=10))
    assert excinfo.value.details["needed"] == 50


def test_truncate():
    dataset = Dataset([EnergyTrace(deltas=np.arange(3000.0))])
    assert truncate(dataset, 500).traces[0].deltas.tolist() == list(range(500))
    assert truncate(dataset, 3000).traces[0] == dataset.traces[0]
    with pytest.raises(TooShort):
        truncate(dataset, 3001)


def test_standardizer_hand_computed():
    train = Dataset([EnergyTrace(deltas=[0, 2]), EnergyTrace(deltas=[2, 4])])
    standardizer = fit_standardizer(train)
    assert standardizer.mean == pytest.approx(2.0)
    assert standardizer.std == pytest.approx(math.sqrt(2.0))
    assert standardizer.transform([2, 2]).tolist() == [0.0, 0.0]
    values = np.array([0.0, 7.5, 3.25])
    assert np.allclose(standardizer.inverse(standardizer.transform(values)), values)


def test_standardizer_rejects_constant_data():
    with pytest.raises(DegenerateData):
        fit_standardizer(Dataset([EnergyTrace(deltas=[5, 5, 5])]))


def test_scaled_dataset_cannot_be_scaled_twice():
    dataset = _dataset(2)
    scaled = apply(fit_standardizer(dataset), dataset)
    assert scaled.matrix().shape == (4, 30)
    with pytest.raises(DegenerateData):
        apply(scaled.standardizer, scaled)


def test_import_matrix_dir(tmp_path):
    (tmp_path / "spectre-v2.csv").write_text("s0,s1,s2\n1,2,3\n4,5,6\n")
    (tmp_path / "youtube-stream-1.csv").write_text("7,8,9\n")
    dataset = import_matrix_dir(tmp_path)
    assert dataset.class_names == ["spectre-v2", "youtube-stream-1"]
    assert dataset.labels["spectre-v2"].is_attack
    assert not dataset.labels["youtube-stream-1"].is_attack
    assert [t.deltas.tolist() for t in dataset.traces[:2]] == [[1, 2, 3], [4, 5, 6]]


def test_import_matrix_dir_transposed(tmp_path):
    (tmp_path / "git.csv").write_text("1,4\n2,5\n3,6\n")
    dataset = import_matrix_dir(tmp_path, transpose=True)
    assert [t.deltas.tolist() for t in dataset.traces] == [[1, 2, 3], [4, 5, 6]]
