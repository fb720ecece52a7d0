from __future__ import annotations

from typing import Optional

import numpy as np

from src.utils.errors import ArgumentError, DimensionError

from .attention import SE_CLAMP


def mask_weight_gradient(g: np.ndarray, a_out: np.ndarray, a_in: Optional[np.ndarray] = None) -> np.ndarray:
    """g'_ij = [1 - min(a_out_i, a_in_j)] g_ij.

    ``a_in=None`` means the layer reads raw input with no attention over it; the
    input endpoint is then always present and the factor reduces to 1 - a_out_i.
    """
    a_out = np.asarray(a_out, dtype=np.float64)
    if a_in is None:
        a_in = np.ones(g.shape[1])
    a_in = np.asarray(a_in, dtype=np.float64)
    if g.shape != (a_out.shape[0], a_in.shape[0]):
        raise DimensionError(f"gradient {g.shape} vs attention ({a_out.shape[0]}, {a_in.shape[0]})")
    return (1.0 - np.minimum(a_out[:, None], a_in[None, :])) * g


def mask_bias_gradient(g: np.ndarray, a_out: np.ndarray) -> np.ndarray:
    a_out = np.asarray(a_out, dtype=np.float64)
    if g.shape != a_out.shape:
        raise DimensionError(f"bias gradient {g.shape} vs attention {a_out.shape}")
    return (1.0 - a_out) * g


def compensate_embedding_gradient(
    q: np.ndarray, e: np.ndarray, s: float, s_max: float, clamp: float = SE_CLAMP
) -> np.ndarray:
    """q' = s_max (cosh(s e) + 1) / (s (cosh(e) + 1)) * q, with |s e| clamped inside cosh."""
    if not s > 0:
        raise ArgumentError(f"scale must be positive, got {s}")
    e = np.asarray(e, dtype=np.float64)
    num = np.cosh(np.clip(s * e, -clamp, clamp)) + 1.0
    den = np.cosh(e) + 1.0
    return (s_max / s) * (num / den) * np.asarray(q, dtype=np.float64)
