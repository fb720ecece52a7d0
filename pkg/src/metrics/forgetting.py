"""
Forgetting ratio arithmetic.

    rho = (A - A_R) / (A_J - A_R) - 1

rho ~ 0 means the sequential model matches the jointly trained one, rho ~ -1
means it is no better than a random stratified classifier.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd

from src.utils.errors import ArgumentError, ConsistencyError, UndefinedRatioError


def random_stratified_accuracy(labels: Sequence[int]) -> float:
    """Expected accuracy of guessing classes at their empirical rates: sum of p_c^2."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ArgumentError("no labels to estimate class priors from")
    _, counts = np.unique(labels, return_counts=True)
    p = counts / labels.size
    return float(np.sum(p * p))


def forgetting_ratio(A: float, A_R: float, A_J: float) -> float:
    if A_J == A_R:
        raise UndefinedRatioError(f"joint and random references are equal ({A_J})")
    return (A - A_R) / (A_J - A_R) - 1.0


def average_forgetting(row: Sequence[float]) -> float:
    if len(row) == 0:
        raise ArgumentError("cannot average an empty forgetting row")
    return float(np.mean(np.asarray(row, dtype=np.float64)))


@dataclass
class AccuracyMatrix:
    """Lower-triangular A[t][tau] with tau <= t."""

    rows: List[List[float]]

    def __post_init__(self) -> None:
        self.rows = [[float(v) for v in row] for row in self.rows]
        for t, row in enumerate(self.rows):
            if len(row) != t + 1:
                raise ConsistencyError(f"row {t} has {len(row)} entries, expected {t + 1}")
            if any(not 0.0 <= v <= 1.0 for v in row):
                raise ArgumentError(f"accuracy outside [0, 1] in row {t}")

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, t: int) -> List[float]:
        return self.rows[t]

    def to_array(self) -> np.ndarray:
        """Dense T x T array with NaN above the diagonal."""
        n = len(self.rows)
        out = np.full((n, n), np.nan)
        for t, row in enumerate(self.rows):
            out[t, : t + 1] = row
        return out


@dataclass
class ForgettingReport:
    ratios: List[List[float]]  # rho^{tau<=t}
    average: List[float]  # rho^{<=t}
    random_reference: List[float]
    joint_reference: List[List[float]]
    undefined: List[Tuple[int, int]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"t": t + 1, "task": tau, "rho": rho}
            for t, row in enumerate(self.ratios)
            for tau, rho in enumerate(row)
        ]
        return pd.DataFrame(rows, columns=["t", "task", "rho"])


def forgetting_matrix(
    accuracy: AccuracyMatrix,
    random_reference: Sequence[float],
    joint_reference: AccuracyMatrix,
    skip_undefined: bool = False,
) -> ForgettingReport:
    """rho^{tau<=t} for every cell, plus the per-t average.

    With ``skip_undefined`` cells whose references coincide are NaN and left out
    of the average instead of raising.
    """
    if len(joint_reference) != len(accuracy) or len(random_reference) < len(accuracy):
        raise ConsistencyError("reference shapes do not match the accuracy matrix")
    ratios: List[List[float]] = []
    average: List[float] = []
    undefined = []
    for t, row in enumerate(accuracy.rows):
        rho_row = []
        for tau, a in enumerate(row):
            try:
                rho_row.append(forgetting_ratio(a, random_reference[tau], joint_reference[t][tau]))
            except UndefinedRatioError:
                if not skip_undefined:
                    raise
                rho_row.append(float("nan"))
                undefined.append((t, tau))
        ratios.append(rho_row)
        defined = [r for r in rho_row if not np.isnan(r)]
        average.append(average_forgetting(defined) if defined else float("nan"))
    return ForgettingReport(
        ratios=ratios,
        average=average,
        random_reference=[float(r) for r in random_reference],
        joint_reference=[list(r) for r in joint_reference.rows],
        undefined=undefined,
    )

