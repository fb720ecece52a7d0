"""
Gate, annealing, masking and accumulation of task attention.

    a = sigmoid(s * e), with |s*e| clamped to 50

During an epoch s sweeps linearly from 1/s_max (all gates ~0.5) to s_max
(gates ~binary); evaluation always uses s = s_max.
"""
from __future__ import annotations

import numpy as np

from src.utils.errors import ArgumentError, DimensionError

from .types import CUM_SCHEMES, AttentionSet, CumulativeAttention

SE_CLAMP = 50.0


def sigmoid(z: np.ndarray) -> np.ndarray:
    # callers keep |z| <= SE_CLAMP, so exp cannot overflow
    return 1.0 / (1.0 + np.exp(-z))


def gate(e: np.ndarray, s: float, clamp: float = SE_CLAMP) -> np.ndarray:
    if not s > 0:
        raise ArgumentError(f"gate scale must be positive, got {s}")
    z = np.clip(s * np.asarray(e, dtype=np.float64), -clamp, clamp)
    return sigmoid(z)


def gate_grad(e: np.ndarray, s: float, clamp: float = SE_CLAMP) -> np.ndarray:
    """da/de of the clamped gate; zero where the clamp is active."""
    se = s * np.asarray(e, dtype=np.float64)
    inside = np.abs(se) <= clamp
    z = np.clip(se, -clamp, clamp)
    # sigma(z) * sigma(-z) keeps precision where 1 - sigma(z) would round to 0
    return np.where(inside, s * sigmoid(z) * sigmoid(-z), 0.0)


def anneal_s(b: int, B: int, s_max: float, scheme: str = "linear") -> float:
    """Gate scale for batch b (1-based) of B."""
    if B < 1 or not 1 <= b <= B:
        raise ArgumentError(f"batch index {b} outside 1..{B}")
    s_min = 1.0 / s_max
    if B == 1 or b == B:
        return float(s_max)
    if scheme == "linear":
        if b == 1:
            return s_min
        return s_min + (s_max - s_min) * (b - 1) / (B - 1)
    if scheme == "simple":
        return max(s_min, s_max * (b - 1) / (B - 1))
    raise ArgumentError(f"unknown annealing scheme '{scheme}'")


def apply_attention(h: np.ndarray, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or h.shape[-1] != a.shape[0]:
        raise DimensionError(f"attention of length {a.shape} cannot mask activations {h.shape}")
    return h * a


def binarize(a: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """1 where a > threshold, else 0. A value equal to the threshold maps to 0."""
    if not 0 <= threshold < 1:
        raise ArgumentError(f"threshold must be in [0, 1), got {threshold}")
    return (np.asarray(a) > threshold).astype(np.float64)


def accumulate(
    a_t: AttentionSet,
    prev: CumulativeAttention,
    scheme: str = "max",
    kappa: float = 0.9,
) -> CumulativeAttention:
    if scheme not in CUM_SCHEMES:
        raise ArgumentError(f"unknown accumulation scheme '{scheme}'")
    if len(a_t.layers) != len(prev.layers) or (a_t.input is None) != (prev.input is None):
        raise DimensionError("attention set and cumulative attention have different layers")
    factor = 1.0 if scheme == "max" else kappa

    def _combine(new: np.ndarray, old: np.ndarray) -> np.ndarray:
        if new.shape != old.shape:
            raise DimensionError(f"layer sizes differ: {new.shape} vs {old.shape}")
        return np.maximum(new, factor * old)

    layers = [_combine(n, o) for n, o in zip(a_t.layers, prev.layers)]
    inp = None if a_t.input is None else _combine(a_t.input, prev.input)
    return CumulativeAttention(layers=layers, input=inp, tasks=prev.tasks + 1)
