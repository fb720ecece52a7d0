"""
Capacity monitoring from unit attention.

A body weight (i, j) of layer l counts as active when both of its endpoint units
are active after binarization: output unit i of layer l and input unit j of
layer l-1. The raw input is always present unless an input attention vector is
given. Because weight masks are outer products of unit masks, counts reduce to
products of active-unit counts.
"""
from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.hat.attention import binarize
from src.hat.state import HatState
from src.utils.errors import ArgumentError

Vectors = Sequence[np.ndarray]


def _endpoints(layers: Vectors, input_size: int, input_layer: Optional[np.ndarray]) -> List[np.ndarray]:
    first = np.ones(input_size) if input_layer is None else input_layer
    return [first] + list(layers)


def _active_counts(units: Vectors) -> List[int]:
    """Active weights per layer given binary unit vectors [input, l1, l2, ...]."""
    return [int(units[l].sum()) * int(units[l - 1].sum()) for l in range(1, len(units))]


def _totals(layers: Vectors, input_size: int) -> List[int]:
    sizes = [input_size] + [v.shape[0] for v in layers]
    return [sizes[l] * sizes[l - 1] for l in range(1, len(sizes))]


def capacity_usage(
    layers: Vectors,
    input_size: int,
    threshold: float = 0.5,
    input_layer: Optional[np.ndarray] = None,
) -> float:
    """Fraction of body weights whose endpoint units are both active."""
    units = [binarize(v, threshold) for v in _endpoints(layers, input_size, input_layer)]
    return sum(_active_counts(units)) / sum(_totals(layers, input_size))


def layer_activity(
    layers: Vectors, input_size: int, threshold: float = 0.5, input_layer: Optional[np.ndarray] = None
) -> List[float]:
    units = [binarize(v, threshold) for v in _endpoints(layers, input_size, input_layer)]
    return [a / t for a, t in zip(_active_counts(units), _totals(layers, input_size))]


def hat_capacity(hat: HatState, threshold: float = 0.5) -> float:
    cum = hat.cumulative
    return capacity_usage(cum.layers, hat.input_size, threshold, cum.input)


def layer_usage(hat: HatState, layer: int, task: int, include_past: bool = True, threshold: float = 0.5) -> float:
    """Active-weight fraction of body layer ``layer`` (0-based) for ``task``.

    With ``include_past`` the endpoints come from a^{<=t}; otherwise from the
    units the task switched on that no earlier task had claimed.
    """
    if not 0 <= layer < len(hat.layer_sizes):
        raise ArgumentError(f"layer {layer} outside 0..{len(hat.layer_sizes) - 1}")
    if task not in hat.snapshots:
        raise ArgumentError(f"task {task} has not been trained")

    if include_past:
        through = hat.cumulative_through(task)
        units = [binarize(v, threshold) for v in through.vectors()]
    else:
        before = hat.cumulative_before(task)
        snap = hat.snapshots[task]
        units = [
            binarize(a, threshold) * (1.0 - binarize(p, threshold))
            for a, p in zip(snap.vectors(), before.vectors())
        ]
    if not hat.config.input_attention:
        units = [np.ones(hat.input_size)] + units
    out_units, in_units = units[layer + 1], units[layer]
    total = out_units.shape[0] * in_units.shape[0]
    return float(out_units.sum() * in_units.sum()) / total


def _task_units(hat: HatState, task: int, threshold: float) -> List[np.ndarray]:
    if task not in hat.snapshots:
        raise ArgumentError(f"task {task} has not been trained")
    units = [binarize(v, threshold) for v in hat.snapshots[task].vectors()]
    if not hat.config.input_attention:
        units = [np.ones(hat.input_size)] + units
    return units


def reuse_fraction(units_i: Vectors, units_j: Vectors) -> float:
    active_i = sum(_active_counts(units_i))
    if active_i == 0:
        return 0.0
    both = [a * b for a, b in zip(units_i, units_j)]
    return sum(_active_counts(both)) / active_i


def weight_reuse(hat: HatState, i: int, j: int, threshold: float = 0.5) -> float:
    """Share of task i's active weights that task j also uses (j trained after i)."""
    if j <= i:
        raise ArgumentError(f"weight reuse needs j > i, got i={i}, j={j}")
    return reuse_fraction(_task_units(hat, i, threshold), _task_units(hat, j, threshold))


def reuse_matrix(hat: HatState, threshold: float = 0.5) -> pd.DataFrame:
    """Upper-triangular reuse table over trained tasks; the diagonal is self-reuse."""
    tasks = list(hat.task_order)
    units = {t: _task_units(hat, t, threshold) for t in tasks}
    mat = pd.DataFrame(np.nan, index=tasks, columns=tasks)
    for a, i in enumerate(tasks):
        for j in tasks[a:]:
            mat.loc[i, j] = reuse_fraction(units[i], units[j])
    mat.index.name = "task_i"
    return mat


class CapacityMonitor:
    """Per-task capacity and layer-usage tables for a trained HatState."""

    def __init__(self, hat: HatState, threshold: float = 0.5):
        self.hat = hat
        self.threshold = threshold

    def task_capacity(self) -> pd.DataFrame:
        rows: List[Dict[str, float]] = []
        for t in self.hat.task_order:
            through = self.hat.cumulative_through(t)
            rows.append(
                {
                    "task": t,
                    "capacity": capacity_usage(through.layers, self.hat.input_size, self.threshold, through.input),
                }
            )
        return pd.DataFrame(rows, columns=["task", "capacity"])

    def layer_table(self) -> pd.DataFrame:
        rows = []
        for t in self.hat.task_order:
            for l in range(len(self.hat.layer_sizes)):
                rows.append(
                    {
                        "task": t,
                        "layer": l,
                        "usage_including_past": layer_usage(self.hat, l, t, True, self.threshold),
                        "usage_excluding_past": layer_usage(self.hat, l, t, False, self.threshold),
                    }
                )
        return pd.DataFrame(rows, columns=["task", "layer", "usage_including_past", "usage_excluding_past"])

    def reuse_table(self) -> pd.DataFrame:
        mat = reuse_matrix(self.hat, self.threshold)
        long = mat.reset_index().melt(id_vars="task_i", var_name="task_j", value_name="reuse")
        return long.dropna().sort_values(["task_i", "task_j"]).reset_index(drop=True)
