"""Layer specs and the sequential model graph.

The graph owns its weights; a forward pass returns the activations it needs
for backward in a tape instead of storing them, so inference on one graph is
reentrant.
"""

from __future__ import annotations

import copy
import logging
from typing import Annotated, Any, Literal, Union

import numpy as np
from pydantic import BaseModel, Field, StrictInt, TypeAdapter

from detector._shared.errors import InvalidConfig, ShapeMismatch, ShapeUnderflow
from detector.nn import layers
from detector.nn.losses import LossKind, cross_entropy, one_hot, softmax_cross_entropy_grad

logger = logging.getLogger("detector.nn")

DTYPES = {"float32": np.float32, "float64": np.float64}


class _Spec(BaseModel):
    class Config:
        extra = "forbid"
        frozen = True


class Conv1DSpec(_Spec):
    type: Literal["conv1d"] = "conv1d"
    filters: StrictInt = Field(ge=1)
    kernel_size: StrictInt = Field(default=3, ge=1)
    stride: Literal[1] = 1
    padding: Literal["valid"] = "valid"


class MaxPool1DSpec(_Spec):
    type: Literal["maxpool1d"] = "maxpool1d"
    size: StrictInt = Field(default=10, ge=1)


class DenseSpec(_Spec):
    type: Literal["dense"] = "dense"
    units: StrictInt = Field(ge=1)


class DropoutSpec(_Spec):
    type: Literal["dropout"] = "dropout"
    rate: float = Field(ge=0.0, lt=1.0)


class ReluSpec(_Spec):
    type: Literal["relu"] = "relu"


class SoftmaxSpec(_Spec):
    type: Literal["softmax"] = "softmax"


class FlattenSpec(_Spec):
    type: Literal["flatten"] = "flatten"


LayerSpec = Annotated[
    Union[Conv1DSpec, MaxPool1DSpec, DenseSpec, DropoutSpec, ReluSpec, SoftmaxSpec, FlattenSpec],
    Field(discriminator="type"),
]
LAYER_SPECS = TypeAdapter(list[LayerSpec])


def infer_shapes(specs: list[Any], input_length: int, input_channels: int = 1) -> list[tuple[int, ...]]:
    """Per-sample output shape of every layer, checked for composition."""
    shape: tuple[int, ...] = (input_length, input_channels)
    shapes = []
    for position, spec in enumerate(specs):
        if isinstance(spec, Conv1DSpec):
            if len(shape) != 2:
                raise ShapeMismatch(f"Layer {position} (conv1d) needs a sequence input, got {shape}.", layer=position)
            length = shape[0] - spec.kernel_size + 1
            if length < 1:
                raise ShapeUnderflow(
                    f"Layer {position} (conv1d) receives length {shape[0]} < kernel {spec.kernel_size}.",
                    layer=position,
                    length=shape[0],
                )
            shape = (length, spec.filters)
        elif isinstance(spec, MaxPool1DSpec):
            if len(shape) != 2:
                raise ShapeMismatch(f"Layer {position} (maxpool1d) needs a sequence input, got {shape}.", layer=position)
            if shape[0] < spec.size:
                raise ShapeUnderflow(
                    f"Layer {position} (maxpool1d) receives length {shape[0]} < pool {spec.size}.",
                    layer=position,
                    length=shape[0],
                )
            shape = (shape[0] // spec.size, shape[1])
        elif isinstance(spec, FlattenSpec):
            shape = (int(np.prod(shape)),)
        elif isinstance(spec, DenseSpec):
            if len(shape) != 1:
                raise ShapeMismatch(f"Layer {position} (dense) needs a flat input; add a flatten layer.", layer=position)
            shape = (spec.units,)
        shapes.append(shape)
    return shapes


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ModelGraph:
    def __init__(
        self,
        specs: list[Any],
        input_length: int,
        input_channels: int = 1,
        seed: int = 0,
        dtype: str = "float32",
        metadata: dict[str, Any] | None = None,
    ) -> None:
        if dtype not in DTYPES:
            raise InvalidConfig(f"Unknown dtype {dtype}; expected one of {sorted(DTYPES)}.", dtype=dtype)
        self.specs = LAYER_SPECS.validate_python([s.model_dump() if isinstance(s, BaseModel) else s for s in specs])
        self.input_length = input_length
        self.input_channels = input_channels
        self.seed = seed
        self.dtype = dtype
        self.metadata: dict[str, Any] = dict(metadata or {})
        self.shapes = infer_shapes(self.specs, input_length, input_channels)
        self.weights = self._initial_weights()

    def _initial_weights(self) -> list[dict[str, np.ndarray]]:
        rng = np.random.default_rng(self.seed)
        np_dtype = DTYPES[self.dtype]
        weights: list[dict[str, np.ndarray]] = []
        previous = (self.input_length, self.input_channels)
        for spec, shape in zip(self.specs, self.shapes):
            params: dict[str, np.ndarray] = {}
            if isinstance(spec, Conv1DSpec):
                channels = previous[1]
                params["w"] = _glorot(
                    rng,
                    (spec.filters, spec.kernel_size, channels),
                    spec.kernel_size * channels,
                    spec.kernel_size * spec.filters,
                ).astype(np_dtype)
                params["b"] = np.zeros(spec.filters, dtype=np_dtype)
            elif isinstance(spec, DenseSpec):
                params["w"] = _glorot(rng, (previous[0], spec.units), previous[0], spec.units).astype(np_dtype)
                params["b"] = np.zeros(spec.units, dtype=np_dtype)
            weights.append(params)
            previous = shape
        return weights

    @property
    def n_outputs(self) -> int:
        return self.shapes[-1][0]

    @property
    def n_params(self) -> int:
        return sum(array.size for params in self.weights for array in params.values())

    def get_weights(self) -> list[dict[str, np.ndarray]]:
        return [{name: array.copy() for name, array in params.items()} for params in self.weights]

    def set_weights(self, weights: list[dict[str, np.ndarray]]) -> None:
        np_dtype = DTYPES[self.dtype]
        if len(weights) != len(self.weights):
            raise ShapeMismatch("Weight list does not match the layer list.")
        for position, (current, new) in enumerate(zip(self.weights, weights)):
            for name, array in current.items():
                if new[name].shape != array.shape:
                    raise ShapeMismatch(f"Layer {position} {name} has shape {new[name].shape}, expected {array.shape}.")
        self.weights = [{name: np.asarray(a, dtype=np_dtype).copy() for name, a in params.items()} for params in weights]

    def with_dtype(self, dtype: str) -> "ModelGraph":
        clone = copy.copy(self)
        if dtype not in DTYPES:
            raise InvalidConfig(f"Unknown dtype {dtype}.", dtype=dtype)
        clone.dtype = dtype
        clone.metadata = dict(self.metadata)
        clone.weights = [{n: a.astype(DTYPES[dtype]) for n, a in params.items()} for params in self.weights]
        return clone

    def _as_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=DTYPES[self.dtype])
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[1:] != (self.input_length, self.input_channels):
            raise ShapeMismatch(
                f"Model expects input (batch, {self.input_length}, {self.input_channels}), got {x.shape}.",
                shape=list(x.shape),
            )
        return x

    def forward(
        self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None
    ) -> tuple[np.ndarray, list[Any]]:
        """Run every layer; returns the output and the backward tape."""
        out = self._as_input(x)
        tape: list[Any] = []
        for spec, params in zip(self.specs, self.weights):
            if isinstance(spec, Conv1DSpec):
                tape.append(out)
                out = layers.conv1d_forward(out, params["w"], params["b"])
            elif isinstance(spec, MaxPool1DSpec):
                length = out.shape[1]
                out, argmax = layers.maxpool1d_forward(out, spec.size)
                tape.append((argmax, length))
            elif isinstance(spec, DenseSpec):
                tape.append(out)
                out = layers.dense_forward(out, params["w"], params["b"])
            elif isinstance(spec, ReluSpec):
                tape.append(out > 0)
                out = layers.relu(out)
            elif isinstance(spec, DropoutSpec):
                out, mask = layers.dropout(out, spec.rate, training, rng)
                tape.append(mask)
            elif isinstance(spec, FlattenSpec):
                tape.append(out.shape)
                out = out.reshape(out.shape[0], -1)
            elif isinstance(spec, SoftmaxSpec):
                out = layers.softmax(out)
                tape.append(out)
        return out, tape

    def backward(self, tape: list[Any], grad_logits: np.ndarray) -> list[dict[str, np.ndarray]]:
        """Backpropagate from the gradient at the input of the final softmax."""
        if not isinstance(self.specs[-1], SoftmaxSpec):
            raise ShapeMismatch("Training needs a graph ending in softmax.")
        grads: list[dict[str, np.ndarray]] = [{} for _ in self.specs]
        grad = grad_logits.astype(DTYPES[self.dtype], copy=False)
        for position in range(len(self.specs) - 2, -1, -1):
            spec, saved, params = self.specs[position], tape[position], self.weights[position]
            if isinstance(spec, Conv1DSpec):
                grad, grads[position]["w"], grads[position]["b"] = layers.conv1d_backward(saved, params["w"], grad)
            elif isinstance(spec, MaxPool1DSpec):
                argmax, length = saved
                grad = layers.maxpool1d_backward(grad, argmax, length, spec.size)
            elif isinstance(spec, DenseSpec):
                grad, grads[position]["w"], grads[position]["b"] = layers.dense_backward(saved, params["w"], grad)
            elif isinstance(spec, ReluSpec):
                grad = grad * saved
            elif isinstance(spec, DropoutSpec):
                if saved is not None:
                    grad = grad * saved
            elif isinstance(spec, FlattenSpec):
                grad = grad.reshape(saved)
            elif isinstance(spec, SoftmaxSpec):
                grad = layers.softmax_backward(saved, grad)
        return grads

    def loss_and_gradients(
        self,
        x: np.ndarray,
        targets: np.ndarray,
        loss_kind: LossKind,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[float, list[dict[str, np.ndarray]]]:
        targets = np.asarray(targets)
        if targets.ndim == 1:
            targets = one_hot(targets, self.n_outputs)
        probs, tape = self.forward(x, training=training, rng=rng)
        loss = cross_entropy(loss_kind, probs, targets)
        grads = self.backward(tape, softmax_cross_entropy_grad(probs.astype(np.float64), targets))
        return loss, grads

    def predict_proba(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        x = self._as_input(x)
        chunks = [self.forward(x[start : start + batch_size])[0] for start in range(0, x.shape[0], batch_size)]
        if not chunks:
            return np.zeros((0, self.n_outputs))
        return np.concatenate(chunks).astype(np.float64)

    def summary(self) -> list[dict[str, Any]]:
        return [
            {"layer": spec.type, "output_shape": list(shape), "params": int(sum(a.size for a in params.values()))}
            for spec, shape, params in zip(self.specs, self.shapes, self.weights)
        ]
