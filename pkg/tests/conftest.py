from __future__ import annotations

import json

import numpy as np
import pytest

from src.hat.types import HatConfig
from src.sources.tasks import make_synthetic_suite
from src.training.trainer import ModelConfig, TrainConfig


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    # keep runs, data and DuckDB mirrors inside the test's tmp dir
    monkeypatch.setenv("HAT_RUNS_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("HAT_DATA_DIR", str(tmp_path / "data"))
    monkeypatch.setenv("USE_DUCKDB", "false")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_suite():
    """Two well separated 2-class tasks in 10 dimensions."""
    return make_synthetic_suite(
        t_count=2, classes=2, dim=10, separation=5.0, seed=7, n_train_per_class=60, n_test_per_class=40
    )


def make_cfg(mode: str = "hat", max_epochs: int = 8, hidden=(20, 20), **hat_overrides) -> TrainConfig:
    hat = HatConfig(**hat_overrides)
    return TrainConfig(
        lr0=0.05,
        batch_size=16,
        max_epochs=max_epochs,
        mode=mode,
        hat=hat,
        model=ModelConfig(hidden_sizes=list(hidden)),
    )


@pytest.fixture
def cfg_factory():
    return make_cfg


@pytest.fixture
def write_config(tmp_path):
    def _write(data: dict, name: str = "exp.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(data, indent=2))
        return str(path)

    return _write
