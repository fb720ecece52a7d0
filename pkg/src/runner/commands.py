"""
Command implementations behind the CLI.

Every ``cmd_*`` function returns a process exit status:
0 success, 1 runtime failure, 2 usage or config error.
"""
from __future__ import annotations

import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional, TextIO

import numpy as np
import pandas as pd

from src.hat.state import HatState
from src.hat.types import HatConfig
from src.metrics.aggregate import accuracy_table, aggregate_runs, combine, ratio_table
from src.monitor.capacity import CapacityMonitor
from src.monitor.compress import compress_task
from src.nn.network import Network
from src.sources.mnist import fetch_mnist, load_mnist
from src.sources.tasks import TaskSuite, make_permuted_suite, make_split_suite, make_synthetic_suite
from src.training.records import RunReport, TaskRunRecord
from src.training.trainer import run_sequence
from src.utils.checkpoint import load_checkpoint, save_checkpoint
from src.utils.config import Settings, load_settings
from src.utils.errors import ArgumentError, ConfigError, ConsistencyError, HatError, TrainingAborted
from src.utils.logs import attach_file_log, detach_log, log_event
from src.utils.storage import read_csv, read_json, write_json, write_table

from .artifacts import RunArtifacts, find_run_dirs
from .config import ExperimentConfig, SuiteSpec, load_experiment, parse_config, with_seeds

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

REPORT_MODES = ("ratios", "accuracy", "monitor")


def build_suite(suite_cfg: SuiteSpec, seed: int, valid_fraction: float, settings: Optional[Settings] = None) -> TaskSuite:
    if suite_cfg.kind == "synthetic":
        return make_synthetic_suite(
            suite_cfg.task_count,
            suite_cfg.classes,
            suite_cfg.dim,
            suite_cfg.separation,
            seed,
            suite_cfg.n_train_per_class,
            suite_cfg.n_test_per_class,
            valid_fraction,
        )
    settings = settings or load_settings()
    train, test = load_mnist(settings.data_dir)
    if suite_cfg.kind == "split":
        return make_split_suite(train, test, suite_cfg.label_groups, seed, valid_fraction)
    return make_permuted_suite(train, test, suite_cfg.task_count, seed, suite_cfg.identity_first, valid_fraction)


def _write_monitoring(art: RunArtifacts, report: RunReport, hat: Optional[HatState], threshold: float) -> None:
    progress = report.progress_frame()
    write_table(progress, art.path("progress.csv"), "progress", art.key)
    series = progress[["task", "epoch", "capacity"]].copy()
    series.insert(0, "update", range(1, len(series) + 1))
    series.insert(1, "kind", "epoch")
    if hat is not None:
        monitor = CapacityMonitor(hat, threshold)
        boundaries = monitor.task_capacity()
        boundaries.insert(0, "update", [int((series["task"] <= t).sum()) for t in boundaries["task"]])
        boundaries.insert(1, "kind", "task_end")
        boundaries["epoch"] = [int(series.loc[series["task"] == t, "epoch"].max()) for t in boundaries["task"]]
        series = pd.concat([series, boundaries[series.columns]], ignore_index=True)
        series = series.sort_values(["update", "kind"], kind="mergesort").reset_index(drop=True)
        write_table(monitor.layer_table(), art.path("layer_usage.csv"), "layer_usage", art.key)
        write_table(monitor.reuse_table(), art.path("reuse.csv"), "reuse", art.key)
    series.insert(0, "seed", art.seed)
    write_table(series, art.path("capacity.csv"), "capacity", art.key)


def run_seed(cfg: ExperimentConfig, seed: int, force: bool = False, settings: Optional[Settings] = None) -> RunReport:
    """Run one (config, seed) pair; skip when its report already exists."""
    art = RunArtifacts.for_config(cfg, seed)
    if art.is_complete() and not force:
        log_event(logger, "skip_completed", seed=seed, run_dir=art.root)
        return RunReport.from_dict(read_json(art.report_path))

    art.prepare()
    write_json(cfg.to_dict(), art.config_path)
    handler = attach_file_log(art.log_path)
    try:
        suite = build_suite(cfg.suite, seed, cfg.train.valid_fraction, settings)
        write_json(suite.to_manifest(), art.path("suite.json"))
        checkpoints: List[str] = []
        last_hat: List[Optional[HatState]] = [None]

        def _on_task_end(task: int, net: Network, hat: Optional[HatState], record: TaskRunRecord) -> None:
            last_hat[0] = hat
            if cfg.checkpoints:
                extra = {"config": cfg.to_dict(), "seed": seed, "task": task}
                checkpoints.append(save_checkpoint(art.checkpoint_path(task), net, hat, extra))

        log_event(logger, "run_start", name=cfg.name, seed=seed, mode=cfg.train.mode, run_dir=art.root)
        try:
            report = run_sequence(suite, cfg.train, seed, _on_task_end, with_joint_reference=cfg.joint_reference)
        except TrainingAborted as exc:
            write_json(
                {"error": str(exc), "task": exc.task, "epoch": exc.epoch, "batch": exc.batch, "checkpoints": checkpoints},
                art.path("failed.json"),
            )
            raise
        report.checkpoints = checkpoints
        write_table(report.accuracy_frame(), art.path("accuracy.csv"), "accuracy", art.key)
        _write_monitoring(art, report, last_hat[0], cfg.train.monitor_threshold)
        write_json(report.to_dict(), art.report_path)
        log_event(logger, "run_done", seed=seed, final_mean_accuracy=report.average_accuracy()[-1])
        return report
    finally:
        detach_log(handler)


def cmd_run(config_path: str, seeds: Optional[List[int]] = None, force: bool = False) -> int:
    try:
        cfg = with_seeds(load_experiment(config_path), seeds)
    except ConfigError as exc:
        logger.error("invalid config %s: %s", config_path, exc)
        return EXIT_USAGE
    settings = load_settings()
    status = EXIT_OK
    for variant in cfg.expand():
        for seed in variant.suite.seeds:
            try:
                run_seed(variant, seed, force, settings)
            except (HatError, OSError) as exc:
                log_event(logger, "run_failed", logging.ERROR, name=variant.name, seed=seed, error=str(exc))
                status = EXIT_FAILURE
    return status


def _load_reports(run_dirs: List[str]) -> List[tuple]:
    found = find_run_dirs(run_dirs)
    if not found:
        raise ConsistencyError(f"no completed runs under {', '.join(run_dirs)}")
    out = []
    for d in found:
        config = read_json(os.path.join(os.path.dirname(d), "config.json")) or {}
        report = RunReport.from_dict(read_json(os.path.join(d, "report.json")))
        out.append((d, config.get("name", report.mode), report))
    return out


def _emit(df: pd.DataFrame, stream: TextIO, out_path: Optional[str], table: str) -> None:
    df.to_csv(stream, index=False)
    if out_path:
        write_table(df, out_path, table)


def cmd_report(
    run_dirs: List[str], mode: str, out_path: Optional[str] = None, stream: Optional[TextIO] = None
) -> int:
    stream = stream or sys.stdout
    if mode not in REPORT_MODES:
        logger.error("unknown report mode %s (choose from %s)", mode, ", ".join(REPORT_MODES))
        return EXIT_USAGE
    try:
        loaded = _load_reports(run_dirs)
        if mode == "monitor":
            frames = []
            for d, name, _report in loaded:
                df = read_csv(os.path.join(d, "capacity.csv"))
                if df is not None:
                    df.insert(0, "approach", name)
                    frames.append(df)
            if not frames:
                raise ConsistencyError("no monitoring series found")
            _emit(combine(frames), stream, out_path, "monitor_report")
            return EXIT_OK

        groups: dict = {}
        for _d, name, report in loaded:
            groups.setdefault(name, []).append(report)
        joint = [r for reps in groups.values() for r in reps if r.mode == "multitask"]
        tables = []
        for name, reports in groups.items():
            if mode == "accuracy":
                tables.append(accuracy_table(reports, name))
            elif reports[0].mode != "multitask":
                same_tasks = [j for j in joint if j.task_names == reports[0].task_names]
                tables.append(ratio_table(reports, name, same_tasks))
        _emit(combine(tables), stream, out_path, f"{mode}_report")
        if out_path and mode == "accuracy":
            cells = combine(aggregate_runs(reps).assign(approach=name) for name, reps in groups.items())
            write_table(cells, os.path.splitext(out_path)[0] + "_matrix.csv", "accuracy_matrix_report")
        return EXIT_OK
    except HatError as exc:
        logger.error("report failed: %s", exc)
        return EXIT_FAILURE


def cmd_compress(
    ckpt_path: str,
    task: int,
    c: float = 1.5,
    init: str = "uniform",
    threshold: float = 0.5,
    out_dir: Optional[str] = None,
) -> int:
    try:
        hat_cfg = HatConfig.compression(c=c, embed_init=init)
        if not 0 <= threshold < 1:
            raise ArgumentError(f"threshold must be in [0, 1), got {threshold}")
        ckpt = load_checkpoint(ckpt_path)
        if not 0 <= task < len(ckpt.network.heads):
            raise ArgumentError(f"unknown task {task}; checkpoint has {len(ckpt.network.heads)} heads")
        config = ckpt.extra.get("config")
        if config is None:
            raise ArgumentError("checkpoint carries no experiment config; cannot rebuild its data")
        exp = parse_config(config)
    except (ArgumentError, ConfigError, FileNotFoundError) as exc:
        logger.error("compress: %s", exc)
        return EXIT_USAGE
    except HatError as exc:
        logger.error("compress: unreadable checkpoint %s: %s", ckpt_path, exc)
        return EXIT_FAILURE

    try:
        seed = int(ckpt.extra.get("seed", 0))
        suite = build_suite(exp.suite, seed, exp.train.valid_fraction)
        train_cfg = replace(exp.train, hat=hat_cfg, mode="hat")
        rng = np.random.default_rng(np.random.SeedSequence([seed, task]))
        result = compress_task(ckpt.network, suite.tasks[task], task, train_cfg, rng, threshold, ckpt.hat)
        out_dir = out_dir or os.path.dirname(ckpt_path) or "."
        stem = f"compressed_task_{task}_c{c:g}"
        stats = result.summary()
        stats["source_checkpoint"] = ckpt_path
        stats["embed_init"] = init
        extra = dict(ckpt.extra, compressed=stats)
        stats["checkpoint"] = save_checkpoint(os.path.join(out_dir, stem + ".ckpt"), result.pruned.network, result.hat, extra)
        write_json(stats, os.path.join(out_dir, stem + ".json"))
        log_event(logger, "compress_done", **{k: v for k, v in stats.items() if not isinstance(v, dict)})
        return EXIT_OK
    except (HatError, OSError) as exc:
        logger.error("compress failed: %s", exc)
        return EXIT_FAILURE


def cmd_fetch_data(name: str = "mnist", dest: Optional[str] = None) -> int:
    if name != "mnist":
        logger.error("unknown dataset %s (only mnist is available)", name)
        return EXIT_USAGE
    try:
        report = fetch_mnist(dest)
    except (HatError, OSError) as exc:
        logger.error("fetch failed: %s", exc)
        return EXIT_FAILURE
    for row in report:
        log_event(logger, "fetched", **row)
    return EXIT_OK
