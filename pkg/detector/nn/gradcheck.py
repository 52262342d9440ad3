from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from detector._shared.errors import InvalidConfig
from detector.nn.graph import MaxPool1DSpec, ModelGraph, ReluSpec
from detector.nn.losses import LossKind, cross_entropy, one_hot

logger = logging.getLogger("detector.nn")

STEP = 1e-4
ERROR_FLOOR = 1e-8
# Smaller steps tried only when a perturbation flips a ReLU or a pooling winner.
_KINK_STEPS = (1e-5, 1e-6)


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: int


def _loss_and_pattern(graph: ModelGraph, x: np.ndarray, targets: np.ndarray, loss_kind: LossKind) -> tuple[float, tuple]:
    probs, tape = graph.forward(x, training=False)
    pattern = tuple(
        saved.tobytes() if isinstance(spec, ReluSpec) else saved[0].tobytes()
        for spec, saved in zip(graph.specs, tape)
        if isinstance(spec, (ReluSpec, MaxPool1DSpec))
    )
    return cross_entropy(loss_kind, probs, targets), pattern


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), ERROR_FLOOR)


def gradient_check(
    graph: ModelGraph,
    x: np.ndarray,
    targets: np.ndarray,
    loss_kind: LossKind,
    training: bool = False,
) -> GradCheckResult:
    """Compare backprop against central differences with step ``STEP``.

    Runs on a 64-bit copy of ``graph`` in inference mode. A coordinate whose
    perturbation changes which ReLUs are active or which element wins a pool
    window is retried with smaller steps; if every step crosses a kink it is
    counted in ``skipped`` and left out of ``max_rel_error``.
    """
    if training:
        raise InvalidConfig("Gradient checks run in inference mode; dropout masks are random in training.")
    check = graph.with_dtype("float64")
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets)
    if targets.ndim == 1:
        targets = one_hot(targets, check.n_outputs)
    _, analytic = check.loss_and_gradients(x, targets, loss_kind)
    _, base_pattern = _loss_and_pattern(check, x, targets, loss_kind)
    worst = 0.0
    checked = skipped = 0
    for layer, layer_grads in zip(check.weights, analytic):
        for name, values in layer.items():
            flat = values.reshape(-1)
            grad_flat = layer_grads[name].reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                numeric = None
                for step in (STEP, *_KINK_STEPS):
                    flat[i] = original + step
                    plus, plus_pattern = _loss_and_pattern(check, x, targets, loss_kind)
                    flat[i] = original - step
                    minus, minus_pattern = _loss_and_pattern(check, x, targets, loss_kind)
                    flat[i] = original
                    if plus_pattern == base_pattern and minus_pattern == base_pattern:
                        numeric = (plus - minus) / (2 * step)
                        break
                if numeric is None:
                    skipped += 1
                    continue
                checked += 1
                worst = max(worst, relative_error(float(grad_flat[i]), float(numeric)))
    if skipped:
        logger.info("nn gradient_check kinks_skipped=%s checked=%s", skipped, checked)
    logger.debug("nn gradient_check params=%s max_rel_error=%.3e skipped=%s", check.n_params, worst, skipped)
    return GradCheckResult(max_rel_error=worst, checked=checked, skipped=skipped)
