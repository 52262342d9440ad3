import numpy as np
import pytest

from detector._shared.errors import EmptyClass, LengthMismatch, ShapeMismatch, ShapeUnderflow
from detector.models import (
    ConvNetConfig,
    TrainConfig,
    build_ad,
    build_ar,
    infer_ad,
    infer_ar,
    load_classifier,
    model_task,
    predict_scores,
    train_ad,
    train_ar,
)
from detector.sensor import synth_dataset
from detector.traceio import SplitSpec, split

SMALL_AD = ConvNetConfig(filters=[4, 4, 8], dense_units=[8, 8], dtype="float64")
SMALL_AR = ConvNetConfig(filters=[4, 4, 8, 8], dense_units=[16, 16, 16], dtype="float64")


def test_published_architectures_build():
    ad = build_ad(3000)
    ar = build_ar(3000)
    assert ad.n_outputs == 2
    assert ar.n_outputs == 15
    assert [s["output_shape"] for s in ad.summary() if s["layer"] == "maxpool1d"] == [[299, 64], [29, 128]]
    assert ad.summary()[0]["params"] == 64 * 3 + 64


@pytest.mark.parametrize("n_samples", [500, 1000, 1500, 2000, 2500, 3000])
def test_input_lengths_compose(n_samples):
    assert build_ad(n_samples, config=SMALL_AD).n_outputs == 2
    assert build_ar(n_samples, config=SMALL_AR).n_outputs == 15


def test_short_inputs_underflow():
    with pytest.raises(ShapeUnderflow):
        build_ad(10)
    with pytest.raises(ShapeUnderflow):
        build_ad(123, config=SMALL_AD)
    assert build_ad(124, config=SMALL_AD).n_outputs == 2


def test_layer_counts_are_checked():
    with pytest.raises(ShapeMismatch):
        build_ad(500, config=ConvNetConfig(filters=[4, 4]))
    with pytest.raises(ShapeMismatch):
        build_ar(500, config=ConvNetConfig(dense_units=[8]))


@pytest.fixture(scope="module")
def trained_pair(tmp_path_factory):
    dataset = synth_dataset(n_benign=3, n_attack=15, traces_per_class=4, n_samples=300, seed=2)
    train, val = split(dataset, SplitSpec(train_per_class=3, val_per_class=1, seed=0))
    config = TrainConfig(epochs_max=3, batch_size=16, n_samples=200, learning_rate=1e-2)
    directory = tmp_path_factory.mktemp("cnn")
    ad = train_ad(train, val, config, out_path=directory / "ad.bin", net=SMALL_AD)
    ar = train_ar(train, val, config, out_path=directory / "ar.bin", net=SMALL_AR)
    return ad, ar, val


def test_trained_models_carry_metadata(trained_pair):
    ad, ar, _ = trained_pair
    assert ad.path.exists() and ad.path.with_suffix(".history.csv").exists()
    loaded = load_classifier(ad.path)
    assert model_task(loaded) == "ad"
    assert loaded.metadata["n_samples"] == 200
    assert loaded.metadata["standardizer"] == ad.standardizer.model_dump()
    assert model_task(load_classifier(ar.path)) == "ar"
    assert 1 <= len(ad.history) <= 3


def test_inference_outputs(trained_pair):
    ad, ar, val = trained_pair
    trace = val.traces[0].deltas[:200]
    score = infer_ad(ad.model, trace)
    assert 0.0 <= score <= 1.0
    distribution = infer_ar(ar.model, trace)
    assert distribution.shape == (15,)
    assert distribution.sum() == pytest.approx(1.0)
    loaded = load_classifier(ad.path)
    assert infer_ad(loaded, trace) == score


def test_inference_rejects_wrong_length(trained_pair):
    ad, _, val = trained_pair
    with pytest.raises(LengthMismatch):
        infer_ad(ad.model, val.traces[0].deltas[:150])
    with pytest.raises(LengthMismatch):
        predict_scores(ad.model, np.zeros((2, 300)))


def test_ar_training_needs_every_attack_class():
    dataset = synth_dataset(n_benign=1, n_attack=14, traces_per_class=2, n_samples=200, seed=0)
    train, val = split(dataset, SplitSpec(train_per_class=1, val_per_class=1))
    with pytest.raises(EmptyClass) as excinfo:
        train_ar(train, val, TrainConfig(epochs_max=1, n_samples=200), net=SMALL_AR)
    assert excinfo.value.details["missing"] == ["bhi"]
