from __future__ import annotations

import math

import numpy as np
import pytest

from src.metrics.aggregate import accuracy_table, aggregate_runs, combine, format_mean_std, mean_std, ratio_table
from src.metrics.forgetting import (
    AccuracyMatrix,
    average_forgetting,
    forgetting_matrix,
    forgetting_ratio,
    random_stratified_accuracy,
)
from src.training.records import RunReport
from src.utils.errors import ArgumentError, ConsistencyError, UndefinedRatioError


def _report(seed, accuracy, joint=None, mode="hat", names=("a", "b")):
    return RunReport(
        seed=seed,
        mode=mode,
        task_names=list(names[: len(accuracy)]),
        accuracy=accuracy,
        random_reference=[0.5] * len(accuracy),
        joint_reference=joint,
    )


def test_random_stratified_accuracy_examples():
    assert random_stratified_accuracy(np.repeat(np.arange(10), 7)) == pytest.approx(0.1)
    assert random_stratified_accuracy([3, 3, 3]) == 1.0
    assert random_stratified_accuracy([0, 0, 1, 2]) == pytest.approx(0.375)
    with pytest.raises(ArgumentError):
        random_stratified_accuracy([])


def test_forgetting_ratio_anchors():
    assert forgetting_ratio(0.98, 0.1, 0.98) == pytest.approx(0.0)
    assert forgetting_ratio(0.1, 0.1, 0.98) == pytest.approx(-1.0)
    assert forgetting_ratio(0.9, 0.1, 1.0) == pytest.approx(-0.1111, abs=1e-4)
    assert forgetting_ratio(1.0, 0.1, 0.9) > 0
    with pytest.raises(UndefinedRatioError):
        forgetting_ratio(0.7, 0.5, 0.5)


def test_average_forgetting():
    assert average_forgetting([0.0, -0.2, -0.1]) == pytest.approx(-0.1)
    with pytest.raises(ArgumentError):
        average_forgetting([])


def test_accuracy_matrix_validation():
    m = AccuracyMatrix([[0.9], [0.8, 0.95]])
    assert len(m) == 2 and m[1] == [0.8, 0.95]
    arr = m.to_array()
    assert arr[1, 1] == 0.95 and math.isnan(arr[0, 1])
    with pytest.raises(ConsistencyError):
        AccuracyMatrix([[0.9, 0.1]])
    with pytest.raises(ArgumentError):
        AccuracyMatrix([[1.2]])


def test_forgetting_matrix_averages_rows():
    acc = AccuracyMatrix([[0.9], [0.5, 0.9]])
    joint = AccuracyMatrix([[0.9], [0.9, 0.9]])
    fr = forgetting_matrix(acc, [0.1, 0.1], joint)
    assert fr.ratios[0] == [pytest.approx(0.0)]
    assert fr.ratios[1][0] == pytest.approx(-0.5)
    assert fr.average == [pytest.approx(0.0), pytest.approx(-0.25)]
    assert list(fr.to_frame().columns) == ["t", "task", "rho"]


def test_forgetting_matrix_undefined_cells():
    acc = AccuracyMatrix([[0.9], [0.5, 0.9]])
    joint = AccuracyMatrix([[0.9], [0.1, 0.9]])
    with pytest.raises(UndefinedRatioError):
        forgetting_matrix(acc, [0.1, 0.1], joint)
    fr = forgetting_matrix(acc, [0.1, 0.1], joint, skip_undefined=True)
    assert fr.undefined == [(1, 0)]
    assert math.isnan(fr.ratios[1][0])
    assert fr.average[1] == pytest.approx(0.0)
    with pytest.raises(ConsistencyError):
        forgetting_matrix(acc, [0.1, 0.1], AccuracyMatrix([[0.9]]))


def test_mean_std():
    mean, std, n = mean_std([0.8, 1.0])
    assert mean == pytest.approx(0.9)
    assert std == pytest.approx(0.1414, abs=1e-4)
    assert n == 2
    assert mean_std([0.7]) == (0.7, 0.0, 1)
    with pytest.raises(ArgumentError):
        mean_std([])


def test_format_mean_std():
    assert format_mean_std(0.99, 0.003) == "99.0 (0.3)"
    assert format_mean_std(float("nan"), 0.0) == "n/a"


def test_aggregate_runs_cells():
    df = aggregate_runs([_report(0, [[0.8], [0.6, 0.9]]), _report(1, [[1.0], [0.8, 0.9]])])
    assert list(df.columns) == ["t", "task", "mean", "std", "n"]
    first = df.iloc[0]
    assert first["mean"] == pytest.approx(0.9)
    assert first["std"] == pytest.approx(0.1414, abs=1e-4)
    assert df.iloc[2]["std"] == pytest.approx(0.0)
    assert (df["n"] == 2).all()


def test_aggregate_rejects_mismatched_runs():
    with pytest.raises(ConsistencyError):
        aggregate_runs([_report(0, [[0.8], [0.6, 0.9]]), _report(1, [[1.0]])])
    with pytest.raises(ConsistencyError):
        aggregate_runs([_report(0, [[0.8]]), _report(1, [[0.9]], names=("z",))])
    with pytest.raises(ArgumentError):
        aggregate_runs([])


def test_accuracy_table_uses_running_average():
    table = accuracy_table([_report(0, [[0.8], [0.6, 1.0]])], "hat")
    assert table["acc_mean"].tolist() == [pytest.approx(0.8), pytest.approx(0.8)]
    assert table["acc_std"].tolist() == [0.0, 0.0]
    assert table["display"].iloc[0] == "80.0 (0.0)"


def test_ratio_table_prefers_matching_joint_run():
    own = [[0.9], [0.9, 0.9]]
    rep = _report(3, [[0.9], [0.5, 0.9]], joint=own)
    with_own = ratio_table([rep], "hat")
    assert with_own["rho_mean"].iloc[1] == pytest.approx(-0.5)
    joint_run = _report(3, [[0.7], [0.7, 0.7]], mode="multitask")
    with_joint = ratio_table([rep], "hat", [joint_run])
    assert with_joint["rho_mean"].iloc[0] == pytest.approx((0.9 - 0.5) / (0.7 - 0.5) - 1.0)
    with pytest.raises(ConsistencyError):
        ratio_table([_report(0, [[0.9]])], "hat")


def test_ratio_table_rejects_joint_run_from_other_suite():
    rep = _report(0, [[0.9], [0.5, 0.9]], names=("split-a", "split-b"))
    other = _report(0, [[0.7], [0.7, 0.7]], mode="multitask", names=("perm0", "perm1"))
    with pytest.raises(ConsistencyError):
        ratio_table([rep], "hat", [other])


def test_combine_tables():
    a = accuracy_table([_report(0, [[0.8]])], "hat")
    b = accuracy_table([_report(0, [[0.6]], mode="sgd")])
    out = combine([a, b])
    assert out["approach"].tolist() == ["hat", "sgd"]
    assert combine([]).empty
