from __future__ import annotations

import numpy as np

from detector._shared.errors import InvalidConfig


class Adam:
    """Adam with bias correction; moments are created lazily per parameter."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> None:
        if not lr > 0:
            raise InvalidConfig("Adam learning rate must be positive.", lr=lr)
        if not (0 < beta1 < 1 and 0 < beta2 < 1):
            raise InvalidConfig("Adam betas must lie in (0, 1).", beta1=beta1, beta2=beta2)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: list[dict[str, np.ndarray]] = []
        self.v: list[dict[str, np.ndarray]] = []

    def step(self, params: list[dict[str, np.ndarray]], grads: list[dict[str, np.ndarray]]) -> None:
        """Update ``params`` in place."""
        if not self.m:
            self.m = [{name: np.zeros_like(a, dtype=np.float64) for name, a in layer.items()} for layer in params]
            self.v = [{name: np.zeros_like(a, dtype=np.float64) for name, a in layer.items()} for layer in params]
        self.t += 1
        correction1 = 1 - self.beta1**self.t
        correction2 = 1 - self.beta2**self.t
        for layer, layer_grads, m, v in zip(params, grads, self.m, self.v):
            for name, value in layer.items():
                g = layer_grads[name]
                m[name] = self.beta1 * m[name] + (1 - self.beta1) * g
                v[name] = self.beta2 * v[name] + (1 - self.beta2) * g * g
                update = self.lr * (m[name] / correction1) / (np.sqrt(v[name] / correction2) + self.epsilon)
                value -= update.astype(value.dtype)
