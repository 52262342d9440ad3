"""Forward and backward kernels for the fixed layer set.

Sequence tensors are ``(batch, length, channels)``; flat tensors are
``(batch, features)``. Conv weights are ``(filters, kernel, in_channels)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from detector._shared.errors import ShapeMismatch


def _require_ndim(x: np.ndarray, ndim: int, op: str) -> None:
    if x.ndim != ndim:
        raise ShapeMismatch(f"{op} expects a {ndim}-d tensor, got shape {x.shape}.", shape=list(x.shape))


def _conv_columns(x: np.ndarray, kernel_size: int) -> np.ndarray:
    batch, length, channels = x.shape
    out_length = length - kernel_size + 1
    windows = sliding_window_view(x, kernel_size, axis=1)  # (b, out, C, k)
    return windows.reshape(batch * out_length, channels * kernel_size)


def _kernel_matrix(weights: np.ndarray) -> np.ndarray:
    filters, kernel_size, channels = weights.shape
    return weights.transpose(2, 1, 0).reshape(channels * kernel_size, filters)


def conv1d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid-padding, stride-1 convolution."""
    _require_ndim(x, 3, "conv1d")
    filters, kernel_size, channels = weights.shape
    batch, length, in_channels = x.shape
    if in_channels != channels:
        raise ShapeMismatch(f"conv1d expects {channels} input channels, got {in_channels}.", shape=list(x.shape))
    if length < kernel_size:
        raise ShapeMismatch(f"conv1d input length {length} is shorter than kernel {kernel_size}.", shape=list(x.shape))
    out = _conv_columns(x, kernel_size) @ _kernel_matrix(weights) + bias
    return out.reshape(batch, length - kernel_size + 1, filters)


def conv1d_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    filters, kernel_size, channels = weights.shape
    batch, length, _ = x.shape
    out_length = length - kernel_size + 1
    grad_rows = grad_out.reshape(batch * out_length, filters)
    grad_bias = grad_rows.sum(axis=0)
    grad_kernel = _conv_columns(x, kernel_size).T @ grad_rows
    grad_weights = grad_kernel.reshape(channels, kernel_size, filters).transpose(2, 1, 0)
    grad_cols = (grad_rows @ _kernel_matrix(weights).T).reshape(batch, out_length, channels, kernel_size)
    grad_x = np.zeros_like(x)
    for j in range(kernel_size):
        grad_x[:, j : j + out_length, :] += grad_cols[..., j]
    return grad_x, np.ascontiguousarray(grad_weights), grad_bias


def maxpool1d_forward(x: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping max pooling; a trailing remainder shorter than ``size`` is dropped.

    Returns the pooled tensor and the in-window argmax used by the backward pass.
    """
    _require_ndim(x, 3, "maxpool1d")
    batch, length, channels = x.shape
    if length < size:
        raise ShapeMismatch(f"maxpool1d input length {length} is shorter than pool {size}.", shape=list(x.shape))
    out_length = length // size
    windows = x[:, : out_length * size, :].reshape(batch, out_length, size, channels)
    argmax = windows.argmax(axis=2)
    pooled = np.take_along_axis(windows, argmax[:, :, None, :], axis=2)[:, :, 0, :]
    return pooled, argmax


def maxpool1d_backward(grad_out: np.ndarray, argmax: np.ndarray, length: int, size: int) -> np.ndarray:
    batch, out_length, channels = grad_out.shape
    grad_windows = np.zeros((batch, out_length, size, channels), dtype=grad_out.dtype)
    np.put_along_axis(grad_windows, argmax[:, :, None, :], grad_out[:, :, None, :], axis=2)
    grad_x = np.zeros((batch, length, channels), dtype=grad_out.dtype)
    grad_x[:, : out_length * size, :] = grad_windows.reshape(batch, out_length * size, channels)
    return grad_x


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    _require_ndim(x, 2, "dense")
    if x.shape[1] != weights.shape[0]:
        raise ShapeMismatch(
            f"dense expects {weights.shape[0]} features, got {x.shape[1]}.",
            shape=list(x.shape),
        )
    return x @ weights + bias


def dense_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_backward(probs: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return probs * (grad_out - (grad_out * probs).sum(axis=-1, keepdims=True))


def dropout(
    x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` while training."""
    if not training or rate == 0:
        return x, None
    if rng is None:
        rng = np.random.default_rng()
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / (1.0 - rate)
    return x * mask, mask
