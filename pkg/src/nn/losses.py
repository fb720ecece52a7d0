from __future__ import annotations

from typing import Tuple

import numpy as np

from src.utils.errors import ArgumentError, DimensionError, NumericError

from .layers import Tensor


def _log_softmax(logits: Tensor) -> Tensor:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.logaddexp.reduce(z, axis=-1, keepdims=True)


def softmax_xent(logits: Tensor, label: int) -> Tuple[float, Tensor]:
    """Cross entropy of one logit vector against a class index."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise DimensionError(f"expected a 1-D logit vector, got shape {logits.shape}")
    loss, dlogits = softmax_xent_batch(logits[None, :], np.array([label]))
    return loss, dlogits[0]


def softmax_xent_batch(logits: Tensor, labels: np.ndarray) -> Tuple[float, Tensor]:
    """Mean cross entropy over a batch; dlogits = (softmax - onehot) / n."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"logits {logits.shape} and labels {labels.shape} do not match")
    if not np.all(np.isfinite(logits)):
        raise NumericError("logits contain non-finite values")
    n, k = logits.shape
    if n == 0:
        raise ArgumentError("empty batch")
    if labels.min() < 0 or labels.max() >= k:
        raise ArgumentError(f"label out of range for {k} classes")

    logp = _log_softmax(logits)
    rows = np.arange(n)
    loss = float(-logp[rows, labels].mean())
    dlogits = np.exp(logp)
    dlogits[rows, labels] = np.expm1(logp[rows, labels])
    return loss, dlogits / n
