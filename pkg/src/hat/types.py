"""
Value types for task attention.

Vectors are float64 numpy arrays, one per body layer, optionally preceded by an
input-layer vector when input attention is enabled.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.utils.errors import ArgumentError

ANNEAL_SCHEMES = ("linear", "simple")
CUM_SCHEMES = ("max", "kappa")
REG_SCHEMES = ("weighted_l1", "plain_l1", "l2")
EMBED_INITS = ("gaussian", "uniform")


@dataclass
class HatConfig:
    s_max: float = 400.0
    c: float = 0.75
    anneal_scheme: str = "linear"
    cum_scheme: str = "max"
    kappa: float = 0.9
    reg_scheme: str = "weighted_l1"
    embed_init: str = "gaussian"
    embed_mean: float = 0.0
    embed_std: float = 1.0
    embed_low: float = 0.0
    embed_high: float = 2.0
    input_attention: bool = False
    # binarize a^{<=t} before it conditions gradients and weights the regularizer
    strict_cumulative: bool = False
    threshold: float = 0.5
    se_clamp: float = 50.0
    e_clamp: float = 6.0

    def __post_init__(self) -> None:
        if not self.s_max >= 1:
            raise ArgumentError(f"s_max must be >= 1, got {self.s_max}")
        if not self.c >= 0:
            raise ArgumentError(f"c must be >= 0, got {self.c}")
        if self.anneal_scheme not in ANNEAL_SCHEMES:
            raise ArgumentError(f"anneal_scheme must be one of {ANNEAL_SCHEMES}")
        if self.cum_scheme not in CUM_SCHEMES:
            raise ArgumentError(f"cum_scheme must be one of {CUM_SCHEMES}")
        if self.cum_scheme == "kappa" and not 0 < self.kappa < 1:
            raise ArgumentError(f"kappa must be in (0, 1), got {self.kappa}")
        if self.reg_scheme not in REG_SCHEMES:
            raise ArgumentError(f"reg_scheme must be one of {REG_SCHEMES}")
        if self.embed_init not in EMBED_INITS:
            raise ArgumentError(f"embed_init must be one of {EMBED_INITS}")
        if not 0 <= self.threshold < 1:
            raise ArgumentError(f"threshold must be in [0, 1), got {self.threshold}")
        if not (self.se_clamp > 0 and self.e_clamp > 0):
            raise ArgumentError("clamp bounds must be positive")

    @classmethod
    def compression(cls, **overrides: Any) -> "HatConfig":
        """Compression mode: stronger sparsity and a positive uniform embedding init."""
        params: Dict[str, Any] = {"c": 1.5, "embed_init": "uniform", "embed_low": 0.0, "embed_high": 2.0}
        params.update(overrides)
        return cls(**params)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _check_unit_range(name: str, vectors: Sequence[np.ndarray]) -> None:
    for v in vectors:
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ArgumentError(f"{name} values must lie in [0, 1]")


@dataclass
class TaskEmbeddings:
    layers: List[np.ndarray]
    input: Optional[np.ndarray] = None

    def vectors(self) -> List[np.ndarray]:
        return ([self.input] if self.input is not None else []) + list(self.layers)

    def clamp_(self, bound: float) -> None:
        for v in self.vectors():
            np.clip(v, -bound, bound, out=v)

    def copy(self) -> "TaskEmbeddings":
        return TaskEmbeddings([v.copy() for v in self.layers], None if self.input is None else self.input.copy())


@dataclass
class AttentionSet:
    layers: List[np.ndarray]
    s: float
    input: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        _check_unit_range("attention", self.vectors())

    def vectors(self) -> List[np.ndarray]:
        return ([self.input] if self.input is not None else []) + list(self.layers)


@dataclass
class CumulativeAttention:
    layers: List[np.ndarray]
    input: Optional[np.ndarray] = None
    tasks: int = 0

    def __post_init__(self) -> None:
        _check_unit_range("cumulative attention", self.vectors())

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int], input_size: Optional[int] = None) -> "CumulativeAttention":
        return cls(
            layers=[np.zeros(n) for n in layer_sizes],
            input=None if input_size is None else np.zeros(input_size),
            tasks=0,
        )

    def vectors(self) -> List[np.ndarray]:
        return ([self.input] if self.input is not None else []) + list(self.layers)

    def copy(self) -> "CumulativeAttention":
        return CumulativeAttention(
            [v.copy() for v in self.layers], None if self.input is None else self.input.copy(), self.tasks
        )
