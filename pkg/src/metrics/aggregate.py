"""
Multi-seed aggregation into report tables.

Every table is long format with one row per (approach, t[, task]) and mean,
sample standard deviation (n-1 denominator) and the run count n. A single run
reports std 0 with n=1.
"""
from __future__ import annotations

import math
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.training.records import RunReport
from src.utils.errors import ArgumentError, ConsistencyError

from .forgetting import AccuracyMatrix, forgetting_matrix


def mean_std(values: Sequence[float]) -> tuple[float, float, int]:
    arr = np.asarray(values, dtype=np.float64)
    n = int(arr.size)
    if n == 0:
        raise ArgumentError("nothing to aggregate")
    std = float(arr.std(ddof=1)) if n > 1 else 0.0
    return float(arr.mean()), std, n


def format_mean_std(mean: float, std: float, scale: float = 100.0, digits: int = 1) -> str:
    """'99.0 (0.3)' style cell."""
    if math.isnan(mean):
        return "n/a"
    return f"{mean * scale:.{digits}f} ({std * scale:.{digits}f})"


def _check_congruent(reports: Sequence[RunReport]) -> None:
    if not reports:
        raise ArgumentError("at least one run report is required")
    shape = [len(r) for r in reports[0].accuracy]
    for rep in reports[1:]:
        if [len(r) for r in rep.accuracy] != shape:
            raise ConsistencyError(
                f"run seed={rep.seed} has {len(rep.accuracy)} tasks, expected {len(shape)}"
            )
        if rep.task_names != reports[0].task_names:
            raise ConsistencyError(f"run seed={rep.seed} trained a different task sequence")


def aggregate_runs(reports: Sequence[RunReport]) -> pd.DataFrame:
    """Per-cell mean/std of the accuracy matrices: columns t, task, mean, std, n."""
    _check_congruent(reports)
    rows = []
    for t, row in enumerate(reports[0].accuracy):
        for tau in range(len(row)):
            mean, std, n = mean_std([r.accuracy[t][tau] for r in reports])
            rows.append({"t": t + 1, "task": tau, "mean": mean, "std": std, "n": n})
    return pd.DataFrame(rows, columns=["t", "task", "mean", "std", "n"])


def _per_t_table(approach: str, per_run: List[List[float]], prefix: str) -> pd.DataFrame:
    rows = []
    for t in range(len(per_run[0])):
        values = [run[t] for run in per_run if not math.isnan(run[t])]
        if values:
            mean, std, n = mean_std(values)
        else:
            mean, std, n = float("nan"), float("nan"), 0
        rows.append(
            {
                "approach": approach,
                "t": t + 1,
                f"{prefix}_mean": mean,
                f"{prefix}_std": std,
                "n": n,
                "display": format_mean_std(mean, std),
            }
        )
    return pd.DataFrame(rows, columns=["approach", "t", f"{prefix}_mean", f"{prefix}_std", "n", "display"])


def accuracy_table(reports: Sequence[RunReport], approach: Optional[str] = None) -> pd.DataFrame:
    """A^{<=t} (average accuracy over tau <= t) across seeds."""
    _check_congruent(reports)
    return _per_t_table(approach or reports[0].mode, [r.average_accuracy() for r in reports], "acc")


def ratio_table(
    reports: Sequence[RunReport],
    approach: Optional[str] = None,
    joint: Optional[Sequence[RunReport]] = None,
) -> pd.DataFrame:
    """rho^{<=t} across seeds.

    The joint reference comes from each report itself, or from ``joint``
    (multitask reports matched by seed, which must share the task sequence).
    """
    _check_congruent(reports)
    by_seed = {j.seed: j for j in joint or []}
    per_run = []
    for rep in reports:
        joint_rows = rep.joint_reference
        if rep.seed in by_seed:
            match = by_seed[rep.seed]
            if match.task_names != rep.task_names:
                raise ConsistencyError(
                    f"multitask run seed={rep.seed} trained {match.task_names}, not {rep.task_names}"
                )
            joint_rows = match.accuracy
        if joint_rows is None or rep.random_reference is None:
            raise ConsistencyError(f"run seed={rep.seed} has no joint or random reference")
        fr = forgetting_matrix(
            AccuracyMatrix(rep.accuracy), rep.random_reference, AccuracyMatrix(joint_rows), skip_undefined=True
        )
        per_run.append(fr.average)
    return _per_t_table(approach or reports[0].mode, per_run, "rho")


def combine(tables: Iterable[pd.DataFrame]) -> pd.DataFrame:
    tables = list(tables)
    if not tables:
        return pd.DataFrame()
    return pd.concat(tables, ignore_index=True)
