from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.utils.errors import ArgumentError, DimensionError, NumericError

from .layers import Tensor


@dataclass
class OptimizerState:
    lr: float = 0.05
    patience_counter: int = 0
    best_valid_loss: float = float("inf")
    patience: int = 5
    decay: float = 3.0
    lr_min: float = 1e-4

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise ArgumentError(f"lr must be positive, got {self.lr}")


def sgd_step(params: Sequence[Tensor], grads: Sequence[Tensor], lr: float) -> List[Tensor]:
    """In-place p <- p - lr*g. A zero gradient leaves p bitwise unchanged."""
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"parameter {p.shape} vs gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    for p, g in zip(params, grads):
        p -= lr * g
    return list(params)


def plateau_schedule(state: OptimizerState, valid_loss: float) -> Tuple[float, bool]:
    """Divide lr by ``decay`` after ``patience`` epochs without strict improvement."""
    if not np.isfinite(valid_loss):
        raise NumericError(f"validation loss is not finite: {valid_loss}")
    if valid_loss < state.best_valid_loss:
        state.best_valid_loss = valid_loss
        state.patience_counter = 0
    else:
        state.patience_counter += 1
        if state.patience_counter >= state.patience:
            state.lr /= state.decay
            state.patience_counter = 0
    return state.lr, state.lr < state.lr_min
