from __future__ import annotations

import glob
import hashlib
import io
import json
import os

import pandas as pd
import pytest

from src.cli import main
from src.runner.artifacts import RunArtifacts, config_hash, find_run_dirs
from src.runner.commands import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, cmd_compress, cmd_report, cmd_run
from src.runner.config import load_experiment, parse_config, with_seeds
from src.sources import mnist
from src.utils.errors import ConfigError
from src.utils.storage import read_duckdb_table

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


@pytest.fixture
def tiny_config(tmp_path):
    return {
        "name": "tiny",
        "suite": {
            "kind": "synthetic",
            "seeds": [0],
            "task_count": 2,
            "classes": 2,
            "dim": 8,
            "separation": 5.0,
            "n_train_per_class": 40,
            "n_test_per_class": 20,
        },
        "model": {"hidden_sizes": [12, 12]},
        "train": {"max_epochs": 2, "batch_size": 16},
        "hat": {"strict_cumulative": True},
        "joint_reference": True,
        "output_dir": str(tmp_path / "runs"),
    }


@pytest.fixture
def completed_run(tiny_config, write_config):
    path = write_config(tiny_config)
    assert main(["run", "--config", path]) == EXIT_OK
    cfg = load_experiment(path)
    return cfg, RunArtifacts.for_config(cfg, 0)


def test_missing_config_is_a_usage_error(tmp_path):
    assert cmd_run(str(tmp_path / "absent.json")) == EXIT_USAGE
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_USAGE


def test_unknown_key_reports_field_and_line(tmp_path):
    path = tmp_path / "typo.json"
    path.write_text('{\n  "suite": {"kind": "synthetic"},\n  "train": {\n    "epochs": 3\n  }\n}\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(str(path))
    assert info.value.field == "train.epochs"
    assert info.value.line == 4
    assert "line 4" in str(info.value)


def test_wrong_type_is_rejected(tmp_path):
    path = tmp_path / "types.json"
    path.write_text('{\n  "hat": {"c": "high"}\n}\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(str(path))
    assert info.value.field == "hat.c"
    assert info.value.line == 2


def test_invalid_json_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "name": "x",\n  "suite": {,}\n}\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(str(path))
    assert info.value.line == 3


def test_value_out_of_domain(tmp_path):
    with pytest.raises(ConfigError):
        parse_config({"hat": {"s_max": 0.5}})
    with pytest.raises(ConfigError):
        parse_config({"suite": {"kind": "split"}})
    with pytest.raises(ConfigError):
        parse_config({"runs": 3})


def test_sweep_expands_to_grid():
    cfg = load_experiment(os.path.join(CONFIGS, "hyper_sweep.json"))
    variants = cfg.expand()
    assert len(variants) == 16
    assert len({v.name for v in variants}) == 16
    assert len({config_hash(v) for v in variants}) == 16
    assert {(v.hat.s_max, v.hat.c) for v in variants} >= {(25.0, 0.1), (800.0, 2.5)}


def test_bundled_configs_parse():
    for path in sorted(glob.glob(os.path.join(CONFIGS, "*.json"))):
        cfg = load_experiment(path)
        assert cfg.name


def test_config_hash_ignores_seeds_and_output(tiny_config):
    a = parse_config(tiny_config)
    b = with_seeds(parse_config(dict(tiny_config, output_dir="elsewhere")), [4, 5])
    assert config_hash(a) == config_hash(b)
    c = parse_config(dict(tiny_config, hat={"c": 0.5}))
    assert config_hash(a) != config_hash(c)


def test_run_writes_artifacts_and_skips_when_complete(completed_run, write_config, tiny_config):
    cfg, art = completed_run
    for name in ("report.json", "accuracy.csv", "progress.csv", "capacity.csv", "layer_usage.csv", "reuse.csv", "run.log"):
        assert os.path.exists(art.path(name)), name
    assert os.path.exists(art.config_path)
    assert os.path.exists(art.checkpoint_path(1))
    report = json.loads(open(art.report_path).read())
    assert [len(row) for row in report["accuracy"]] == [1, 2]
    assert report["joint_reference"] is not None

    stamp = os.stat(art.report_path).st_mtime_ns
    assert cmd_run(write_config(tiny_config)) == EXIT_OK
    assert os.stat(art.report_path).st_mtime_ns == stamp

    capacity = pd.read_csv(art.path("capacity.csv"))
    assert list(capacity.columns) == ["seed", "update", "kind", "task", "epoch", "capacity"]
    assert set(capacity["kind"]) == {"epoch", "task_end"}
    assert capacity["capacity"].between(0, 1).all()


def test_report_modes(completed_run, tmp_path):
    cfg, art = completed_run
    out = io.StringIO()
    assert cmd_report([cfg.output_dir], "accuracy", stream=out) == EXIT_OK
    acc = pd.read_csv(io.StringIO(out.getvalue()))
    assert acc["approach"].unique().tolist() == ["tiny"]
    assert acc["t"].tolist() == [1, 2]

    out = io.StringIO()
    assert cmd_report([art.root], "ratios", stream=out) == EXIT_OK
    ratios = pd.read_csv(io.StringIO(out.getvalue()))
    assert "rho_mean" in ratios.columns

    out = io.StringIO()
    assert cmd_report([cfg.output_dir], "monitor", stream=out) == EXIT_OK
    assert "capacity" in pd.read_csv(io.StringIO(out.getvalue())).columns

    target = str(tmp_path / "tables" / "acc.csv")
    assert cmd_report([cfg.output_dir], "accuracy", target, stream=io.StringIO()) == EXIT_OK
    assert os.path.exists(target)
    assert os.path.exists(str(tmp_path / "tables" / "acc_matrix.csv"))


def test_report_without_runs(tmp_path):
    assert cmd_report([str(tmp_path)], "accuracy", stream=io.StringIO()) == EXIT_FAILURE
    assert cmd_report([str(tmp_path)], "charts", stream=io.StringIO()) == EXIT_USAGE
    assert find_run_dirs([str(tmp_path)]) == []


def test_compress_at_threshold_zero(completed_run, tmp_path):
    _, art = completed_run
    out_dir = str(tmp_path / "compressed")
    status = main(
        ["compress", "--ckpt", art.checkpoint_path(0), "--task", "0", "--c", "1.5", "--threshold", "0", "--out", out_dir]
    )
    assert status == EXIT_OK
    stats = json.loads(open(os.path.join(out_dir, "compressed_task_0_c1.5.json")).read())
    assert stats["compression"] == 1.0
    assert stats["accuracy_delta"] == 0.0
    assert os.path.exists(os.path.join(out_dir, "compressed_task_0_c1.5.ckpt"))


def test_compress_rejects_bad_arguments(completed_run, tmp_path):
    _, art = completed_run
    ckpt = art.checkpoint_path(0)
    assert cmd_compress(ckpt, 0, c=-1.0) == EXIT_USAGE
    assert cmd_compress(ckpt, 5) == EXIT_USAGE
    assert cmd_compress(ckpt, 0, threshold=1.0) == EXIT_USAGE
    assert cmd_compress(str(tmp_path / "missing.ckpt"), 0) == EXIT_USAGE
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"not a checkpoint")
    assert cmd_compress(str(junk), 0) == EXIT_FAILURE


def test_cli_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["fetch-data", "--name", "cifar"]) == EXIT_USAGE
    assert main(["report", "--mode", "charts", "runs"]) == EXIT_USAGE


def test_fetch_data_exit_codes(tmp_path, monkeypatch):
    monkeypatch.setattr(mnist, "MNIST_FILES", {"a.gz": hashlib.md5(b"alpha").hexdigest()})

    def _download(url, path):
        with open(path, "wb") as f:
            f.write(b"alpha" if "good" in url else b"junk")

    monkeypatch.setattr(mnist, "download_file", _download)
    monkeypatch.setenv("MNIST_BASE_URL", "http://good.invalid")
    assert main(["fetch-data", "--dest", str(tmp_path / "ok")]) == EXIT_OK
    assert os.path.exists(str(tmp_path / "ok" / "a.gz"))

    monkeypatch.setenv("MNIST_BASE_URL", "http://bad.invalid")
    assert main(["fetch-data", "--dest", str(tmp_path / "bad")]) == EXIT_FAILURE


def test_run_mirrors_every_seed_into_duckdb(tiny_config, write_config, monkeypatch, tmp_path):
    monkeypatch.setenv("USE_DUCKDB", "true")
    monkeypatch.setenv("DUCKDB_PATH", str(tmp_path / "hat.duckdb"))
    tiny_config["suite"]["seeds"] = [0, 1]
    assert main(["run", "--config", write_config(tiny_config)]) == EXIT_OK

    accuracy = read_duckdb_table("accuracy")
    assert sorted(accuracy["seed"].unique()) == [0, 1]
    assert len(accuracy) == 2 * 3
    assert accuracy["run"].nunique() == 1
    capacity = read_duckdb_table("capacity")
    assert list(capacity.columns[:2]) == ["run", "seed"]
