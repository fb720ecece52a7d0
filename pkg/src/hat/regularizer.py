"""
Attention sparsity regularizer and the regularized loss.

The default scheme is an attention-weighted, normalized L1 norm: units already
claimed by earlier tasks (a^{<t} -> 1) are excluded, so only fresh capacity is
penalised. ``plain_l1`` and ``l2`` normalize by the total unit count instead.
"""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.errors import ArgumentError, DimensionError

from .types import REG_SCHEMES, AttentionSet, CumulativeAttention

Vectors = Sequence[np.ndarray]


def _as_vectors(obj: Union[AttentionSet, CumulativeAttention, Vectors, None]) -> Optional[List[np.ndarray]]:
    if obj is None:
        return None
    if isinstance(obj, (AttentionSet, CumulativeAttention)):
        return obj.vectors()
    return [np.asarray(v, dtype=np.float64) for v in obj]


def sparsity_regularizer(
    A_t: Union[AttentionSet, Vectors],
    A_prev: Union[CumulativeAttention, Vectors, None] = None,
    scheme: str = "weighted_l1",
) -> Tuple[float, List[np.ndarray]]:
    """Return R and dR/da for every attention vector of A_t."""
    if scheme not in REG_SCHEMES:
        raise ArgumentError(f"unknown regularizer scheme '{scheme}'")
    current = _as_vectors(A_t)
    prev = _as_vectors(A_prev)
    if prev is None:
        prev = [np.zeros_like(v) for v in current]
    if len(prev) != len(current) or any(p.shape != a.shape for p, a in zip(prev, current)):
        raise DimensionError("current and cumulative attention have different layer structure")

    if scheme == "weighted_l1":
        weights = [1.0 - p for p in prev]
        den = float(sum(w.sum() for w in weights))
        if den == 0.0:
            return 0.0, [np.zeros_like(a) for a in current]
        num = float(sum((a * w).sum() for a, w in zip(current, weights)))
        return num / den, [w / den for w in weights]

    total_units = float(sum(a.size for a in current))
    if scheme == "plain_l1":
        return float(sum(a.sum() for a in current)) / total_units, [np.full_like(a, 1.0 / total_units) for a in current]
    # l2
    return float(sum((a * a).sum() for a in current)) / total_units, [2.0 * a / total_units for a in current]


def regularized_loss(task_loss: float, R: float, c: float) -> float:
    if not c >= 0:
        raise ArgumentError(f"c must be >= 0, got {c}")
    return task_loss + c * R
