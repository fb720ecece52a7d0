"""
Fully-connected layer with explicit forward and backward passes.

Tensors are float64 numpy arrays. A batch is laid out as ``[n, features]``; a
single 1-D sample is accepted and returned 1-D.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import ArgumentError, DimensionError, StateError

Tensor = np.ndarray

INIT_SCHEMES = ("xavier_uniform", "gaussian", "uniform")


@dataclass
class DenseLayer:
    weight: Tensor  # [N_out, N_in]
    bias: Tensor  # [N_out]
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(
                f"weight {self.weight.shape} and bias {self.bias.shape} are inconsistent"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ArgumentError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def n_in(self) -> int:
        return int(self.weight.shape[1])

    @property
    def n_out(self) -> int:
        return int(self.weight.shape[0])

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weight.copy(), self.bias.copy(), self.dropout_rate)


@dataclass
class DenseCache:
    x: Tensor  # input after dropout, always 2-D
    weight: Tensor
    dropout_mask: Optional[Tensor]
    squeeze: bool


def dense_forward(
    layer: DenseLayer,
    x: Tensor,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, DenseCache]:
    """y = W·x + b. In train mode the layer's inverted dropout is applied to x first."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = x[None, :] if squeeze else x
    if x2.ndim != 2 or x2.shape[1] != layer.n_in:
        raise DimensionError(f"input has shape {x.shape}, layer expects {layer.n_in} features")

    mask = None
    if train_mode and layer.dropout_rate > 0.0:
        if rng is None:
            raise ArgumentError("train-mode dropout needs a seeded generator")
        keep = 1.0 - layer.dropout_rate
        mask = (rng.random(x2.shape) < keep) / keep
        x2 = x2 * mask

    y = x2 @ layer.weight.T + layer.bias
    cache = DenseCache(x=x2, weight=layer.weight, dropout_mask=mask, squeeze=squeeze)
    return (y[0] if squeeze else y), cache


def dense_backward(cache: Optional[DenseCache], dy: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    if cache is None:
        raise StateError("dense_backward called without a forward cache")
    dy = np.asarray(dy, dtype=np.float64)
    dy2 = dy[None, :] if dy.ndim == 1 else dy
    if dy2.shape != (cache.x.shape[0], cache.weight.shape[0]):
        raise DimensionError(
            f"dy has shape {dy.shape}, forward produced {(cache.x.shape[0], cache.weight.shape[0])}"
        )
    dW = dy2.T @ cache.x
    db = dy2.sum(axis=0)
    dx = dy2 @ cache.weight
    if cache.dropout_mask is not None:
        dx = dx * cache.dropout_mask
    return (dx[0] if cache.squeeze else dx), dW, db


def relu(z: Tensor) -> Tensor:
    return np.maximum(z, 0.0)


def init_weights(
    shape: Sequence[int],
    scheme: str = "xavier_uniform",
    rng: Optional[np.random.Generator] = None,
    *,
    mean: float = 0.0,
    std: float = 1.0,
    low: float = 0.0,
    high: float = 1.0,
) -> Tensor:
    """Draw a tensor from the named scheme; deterministic for a seeded generator."""
    if rng is None:
        raise ArgumentError("init_weights needs a seeded generator")
    shape = tuple(int(d) for d in shape)
    if not shape or any(d <= 0 for d in shape):
        raise ArgumentError(f"shape must be positive, got {shape}")

    if scheme == "xavier_uniform":
        fan_out = shape[0]
        fan_in = shape[1] if len(shape) > 1 else shape[0]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape)
    if scheme == "gaussian":
        if not std > 0 or not np.isfinite(mean):
            raise ArgumentError(f"gaussian needs std > 0 and finite mean, got ({mean}, {std})")
        return rng.normal(mean, std, size=shape)
    if scheme == "uniform":
        if not (np.isfinite(low) and np.isfinite(high) and low < high):
            raise ArgumentError(f"uniform needs low < high, got ({low}, {high})")
        return rng.uniform(low, high, size=shape)
    raise ArgumentError(f"unknown init scheme '{scheme}', expected one of {INIT_SCHEMES}")
