import numpy as np
import pytest

from detector._shared.errors import CorruptModel, InvalidConfig, ModelNotFound, VersionMismatch
from detector.models import ConvNetConfig, build_ad, build_ar
from detector.nn import (
    Conv1DSpec,
    DenseSpec,
    FlattenSpec,
    LossKind,
    MaxPool1DSpec,
    ModelGraph,
    ReluSpec,
    SoftmaxSpec,
    TrainConfig,
    fit,
    gradient_check,
    load_model,
    save_model,
)

BCE = LossKind.BINARY_CROSS_ENTROPY
CCE = LossKind.CATEGORICAL_CROSS_ENTROPY


def _tiny_net(seed=0):
    specs = [
        Conv1DSpec(filters=2, kernel_size=3),
        ReluSpec(),
        MaxPool1DSpec(size=4),
        FlattenSpec(),
        DenseSpec(units=4),
        ReluSpec(),
        DenseSpec(units=2),
        SoftmaxSpec(),
    ]
    return ModelGraph(specs, input_length=20, seed=seed, dtype="float64")


def _linear(n_inputs, n_classes, seed=0):
    return ModelGraph([FlattenSpec(), DenseSpec(units=n_classes), SoftmaxSpec()], input_length=n_inputs, seed=seed, dtype="float64")


def _separable(n_per_class, length, seed):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(-1.0, 0.5, (n_per_class, length)), rng.normal(1.0, 0.5, (n_per_class, length))])
    y = np.repeat([0, 1], n_per_class)
    return x, y


def _assert_close(result, bound):
    assert result.max_rel_error < bound
    assert result.checked > 0
    assert result.skipped <= max(1, (result.checked + result.skipped) // 100)


def test_gradient_check_tiny_net():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 20))
    _assert_close(gradient_check(_tiny_net(), x, np.array([0, 1, 1]), BCE), 1e-4)


def test_gradient_check_ad_shaped_graph():
    net = ConvNetConfig(filters=[4, 4, 8], dense_units=[8, 8], pool_size=5, dtype="float64")
    graph = build_ad(120, seed=1, config=net)
    rng = np.random.default_rng(1)
    _assert_close(gradient_check(graph, rng.normal(size=(2, 120)), np.array([0, 1]), BCE), 1e-4)


def test_gradient_check_ar_shaped_graph():
    net = ConvNetConfig(filters=[4, 4, 8, 8], dense_units=[8, 8, 8], pool_size=5, dtype="float64")
    graph = build_ar(120, seed=2, config=net)
    rng = np.random.default_rng(2)
    _assert_close(gradient_check(graph, rng.normal(size=(2, 120)), np.array([3, 11]), CCE), 1e-4)


def test_gradient_check_linear_model():
    rng = np.random.default_rng(3)
    result = gradient_check(_linear(5, 3), rng.normal(scale=0.5, size=(4, 5)), np.array([0, 2, 1, 2]), CCE)
    assert result.max_rel_error < 1e-6
    assert (result.checked, result.skipped) == (18, 0)


def test_gradient_check_catches_scaled_weight_gradient(monkeypatch):
    from detector.nn import layers

    exact = layers.dense_backward

    def off_by_one_percent(x, weights, grad_out):
        grad_x, grad_w, grad_b = exact(x, weights, grad_out)
        return grad_x, grad_w * 1.01, grad_b

    monkeypatch.setattr(layers, "dense_backward", off_by_one_percent)
    rng = np.random.default_rng(3)
    result = gradient_check(_linear(5, 3), rng.normal(size=(4, 5)), np.array([0, 2, 1, 2]), CCE)
    assert result.max_rel_error > 1e-3


def test_gradient_check_refuses_training_mode():
    with pytest.raises(InvalidConfig):
        gradient_check(_linear(2, 2), np.zeros((1, 2)), np.array([0]), BCE, training=True)


def test_dense_gradient_hand_computed():
    graph = _linear(2, 2)
    graph.set_weights([{}, {"w": np.zeros((2, 2)), "b": np.zeros(2)}, {}])
    loss, grads = graph.loss_and_gradients(np.array([[1.0, 2.0]]), np.array([0]), BCE)
    assert loss == pytest.approx(np.log(2))
    np.testing.assert_allclose(grads[1]["w"], [[-0.5, 0.5], [-1.0, 1.0]])
    np.testing.assert_allclose(grads[1]["b"], [-0.5, 0.5])


def test_zero_loss_gives_zero_gradients():
    graph = _linear(2, 2)
    graph.set_weights([{}, {"w": np.zeros((2, 2)), "b": np.array([50.0, -50.0])}, {}])
    _, grads = graph.loss_and_gradients(np.array([[0.3, -0.7]]), np.array([0]), BCE)
    assert max(np.abs(g).max() for layer in grads for g in layer.values()) <= 1e-10


def test_fit_separates_linear_data():
    train_x, train_y = _separable(100, 10, 0)
    val_x, val_y = _separable(40, 10, 1)
    graph = ModelGraph(
        [FlattenSpec(), DenseSpec(units=8), ReluSpec(), DenseSpec(units=2), SoftmaxSpec()],
        input_length=10,
        dtype="float64",
    )
    config = TrainConfig(epochs_max=20, batch_size=16, patience=20, learning_rate=1e-2, n_samples=10)
    result = fit(graph, train_x, train_y, val_x, val_y, BCE, config)
    assert max(r.val_accuracy for r in result.history) >= 0.99
    assert (graph.predict_proba(val_x).argmax(axis=1) == val_y).mean() >= 0.99


def test_fit_patience_zero_stops_after_first_flat_epoch():
    train_x, train_y = _separable(50, 10, 2)
    val_x, val_y = _separable(20, 10, 3)
    config = TrainConfig(epochs_max=50, batch_size=10, patience=0, learning_rate=1e-2, n_samples=10)
    result = fit(_linear(10, 2), train_x, train_y, val_x, val_y, BCE, config)
    assert result.stopped_early
    assert len(result.history) == result.best_epoch + 2


def test_fit_is_deterministic():
    train_x, train_y = _separable(30, 20, 4)
    val_x, val_y = _separable(10, 20, 5)
    config = TrainConfig(epochs_max=3, batch_size=8, patience=5, seed=9, n_samples=20)
    first, second = _tiny_net(seed=4), _tiny_net(seed=4)
    fit(first, train_x, train_y, val_x, val_y, BCE, config)
    fit(second, train_x, train_y, val_x, val_y, BCE, config)
    for a, b in zip(first.get_weights(), second.get_weights()):
        for name in a:
            assert np.array_equal(a[name], b[name])


def test_model_file_round_trip(tmp_path):
    graph = _tiny_net(seed=5)
    graph.metadata["task"] = "ad"
    path = tmp_path / "net.bin"
    save_model(graph, path)
    loaded = load_model(path)
    queries = np.random.default_rng(5).normal(size=(4, 20))
    assert np.array_equal(loaded.predict_proba(queries), graph.predict_proba(queries))
    assert loaded.metadata == {"task": "ad"}


def test_model_file_damage_is_detected(tmp_path):
    path = tmp_path / "net.bin"
    save_model(_tiny_net(), path)
    blob = path.read_bytes()

    (tmp_path / "short.bin").write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CorruptModel):
        load_model(tmp_path / "short.bin")

    future = bytearray(blob)
    future[8] = 99
    (tmp_path / "future.bin").write_bytes(bytes(future))
    with pytest.raises(VersionMismatch):
        load_model(tmp_path / "future.bin")

    (tmp_path / "junk.bin").write_bytes(b"not a model at all, just text" * 4)
    with pytest.raises(CorruptModel):
        load_model(tmp_path / "junk.bin")

    with pytest.raises(ModelNotFound):
        load_model(tmp_path / "missing.bin")
