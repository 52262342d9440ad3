import json

import numpy as np
import pytest

from detector._shared.errors import EmptyDataset, InvalidConfig, LengthMismatch, NotBinary, SingleClassTruth
from detector.metrics import (
    ConfusionMatrix,
    accuracy,
    binary_report,
    confusion,
    f1,
    format_report,
    fpr_fnr,
    multiclass_report,
    report,
    roc_auc,
    roc_curve,
    trapezoid_area,
    write_confusion_csv,
    write_report,
)
from detector.models import load_classifier


def _binary(tp, fp, fn, tn):
    return ConfusionMatrix(np.array([[tn, fp], [fn, tp]]))


def _pairwise_auc(scores, truth):
    positives = [s for s, t in zip(scores, truth) if t == 1]
    negatives = [s for s, t in zip(scores, truth) if t == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in positives for n in negatives)
    return wins / (len(positives) * len(negatives))


def test_confusion_examples():
    assert confusion([0, 0, 1, 1], [0, 1, 1, 1]).counts.tolist() == [[1, 1], [0, 2]]
    assert confusion([0, 1, 2], [0, 1, 2]).counts.tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    assert confusion([], []).counts.tolist() == [[0, 0], [0, 0]]
    assert confusion([], [], n_classes=3).total == 0


def test_confusion_errors():
    with pytest.raises(LengthMismatch):
        confusion([0, 1], [0])
    with pytest.raises(InvalidConfig):
        confusion([0, 2], [0, 1], n_classes=2)
    with pytest.raises(InvalidConfig):
        confusion([-1, 0], [0, 0])


def test_f1_formula():
    assert f1(_binary(8, 1, 1, 10)) == pytest.approx(8 / 9)
    assert f1(_binary(5, 0, 0, 5)) == 1.0
    assert f1(_binary(0, 0, 3, 7)) == 0.0
    with pytest.raises(NotBinary):
        f1(ConfusionMatrix(np.eye(3, dtype=int)))


def test_fpr_fnr_formula():
    assert fpr_fnr(_binary(10, 1, 0, 499)) == (pytest.approx(0.002), 0.0)
    assert fpr_fnr(_binary(4, 0, 1, 5)) == (0.0, pytest.approx(0.2))
    assert fpr_fnr(_binary(0, 0, 0, 0)) == (0.0, 0.0)


def test_metrics_match_brute_force_recount():
    rng = np.random.default_rng(0)
    for _ in range(50):
        truth = rng.integers(0, 2, 40)
        predictions = rng.integers(0, 2, 40)
        cm = confusion(truth, predictions)
        tp = sum(1 for t, p in zip(truth, predictions) if t == 1 and p == 1)
        fp = sum(1 for t, p in zip(truth, predictions) if t == 0 and p == 1)
        fn = sum(1 for t, p in zip(truth, predictions) if t == 1 and p == 0)
        expected = 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)
        assert f1(cm) == pytest.approx(expected)
        assert accuracy(cm) == pytest.approx(float(np.mean(truth == predictions)))


def test_roc_auc_examples():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.5, 0.5], [0, 1]) == 0.5


def test_roc_auc_errors():
    with pytest.raises(SingleClassTruth):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(NotBinary):
        roc_auc([0.1, 0.2], [0, 2])
    with pytest.raises(LengthMismatch):
        roc_auc([0.1], [0, 1])


def test_roc_auc_matches_pairwise_and_trapezoid():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 500))
        truth = rng.integers(0, 2, n)
        truth[:2] = [0, 1]
        scores = np.round(rng.uniform(size=n), 2)
        auc = roc_auc(scores, truth)
        fpr, tpr, _ = roc_curve(scores, truth)
        assert abs(auc - trapezoid_area(fpr, tpr)) < 1e-12
        if n <= 60:
            assert auc == pytest.approx(_pairwise_auc(scores, truth), abs=1e-12)


def test_roc_auc_properties():
    rng = np.random.default_rng(2)
    for _ in range(20):
        truth = rng.integers(0, 2, 50)
        truth[:2] = [0, 1]
        scores = rng.normal(size=50)
        auc = roc_auc(scores, truth)
        assert auc + roc_auc(-scores, truth) == pytest.approx(1.0)
        assert roc_auc(np.exp(3 * scores) + 7, truth) == pytest.approx(auc)


def test_roc_curve_endpoints():
    fpr, tpr, thresholds = roc_curve([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    assert (fpr[0], tpr[0]) == (0.0, 0.0)
    assert (fpr[-1], tpr[-1]) == (1.0, 1.0)
    assert thresholds[0] == np.inf


def test_binary_report():
    result = binary_report(np.array([0.1, 0.4, 0.35, 0.8]), np.array([0, 0, 1, 1]), threshold=0.38)
    assert result.confusion == [[1, 1], [1, 1]]
    assert result.accuracy == 0.5
    assert result.auc == 0.75
    assert result.f1 == pytest.approx(0.5)
    assert result.per_class["anomaly"].support == 2


def test_binary_report_single_class_truth_flags_auc():
    result = binary_report(np.array([0.1, 0.2]), np.array([0, 0]))
    assert result.auc is None
    assert "auc" in result.zero_denominator
    assert "fnr" in result.zero_denominator
    with pytest.raises(EmptyDataset):
        binary_report(np.array([]), np.array([]))


def test_multiclass_report():
    probabilities = np.eye(3)[[0, 1, 2, 2]]
    result = multiclass_report(probabilities, np.array([0, 1, 2, 1]), ["a", "b", "c"])
    assert result.accuracy == 0.75
    assert result.per_class["b"].recall == 0.5
    assert result.per_class["c"].precision == 0.5
    assert result.f1 is None


def test_report_on_saved_knn(knn_models, small_dataset):
    ad_path, ar_path = knn_models
    ad = report(load_classifier(ad_path), small_dataset, "ad", model_id="ad.bin")
    assert ad.n_samples == 120
    assert ad.n_traces == len(small_dataset)
    assert ad.f1 == 1.0 and ad.auc == 1.0
    ar = report(load_classifier(ar_path), small_dataset, "ar")
    assert ar.n_traces == 15 * 8
    assert ar.accuracy == 1.0
    assert ar.class_names[0] == "flush-flush"


def test_report_outputs(tmp_path):
    result = binary_report(np.array([0.9, 0.2, 0.7]), np.array([1, 0, 0]), model_id="m")
    text = format_report(result)
    assert "task=ad\n" in text
    assert "f1=0.666667\n" in text
    assert "precision[anomaly]=0.500000\n" in text
    write_report(result, tmp_path / "report.json")
    assert json.loads((tmp_path / "report.json").read_text())["auc"] == 1.0
    write_confusion_csv(result, tmp_path / "cm.csv")
    assert (tmp_path / "cm.csv").read_text().splitlines() == [
        "true\\predicted,benign,anomaly",
        "benign,1,1",
        "anomaly,0,1",
    ]
