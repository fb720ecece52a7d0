"""
Run directory layout.

    <output_dir>/<config hash[:12]>/config.json
    <output_dir>/<config hash[:12]>/seed_<n>/
        report.json        written last; marks the seed complete
        suite.json         task order, seeds and groups of the suite
        accuracy.csv       long-format accuracy matrix
        progress.csv       per-epoch records
        capacity.csv       capacity per training epoch and per task
        layer_usage.csv    per-task, per-layer usage with/without past tasks
        reuse.csv          weight reuse between task pairs
        checkpoints/task_<k>.ckpt
        run.log
        failed.json        only after an aborted run
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Any, Dict, List

from src.utils.storage import ensure_dir

from .config import ExperimentConfig

HASH_CHARS = 12


def config_hash(cfg: ExperimentConfig) -> str:
    """Content hash over everything that changes results; seeds and output path excluded."""
    data: Dict[str, Any] = copy.deepcopy(cfg.to_dict())
    data.pop("output_dir", None)
    data["suite"].pop("seeds", None)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class RunArtifacts:
    output_dir: str
    digest: str
    seed: int

    @classmethod
    def for_config(cls, cfg: ExperimentConfig, seed: int) -> "RunArtifacts":
        return cls(cfg.output_dir, config_hash(cfg), seed)

    @property
    def config_dir(self) -> str:
        return os.path.join(self.output_dir, self.digest[:HASH_CHARS])

    @property
    def root(self) -> str:
        return os.path.join(self.config_dir, f"seed_{self.seed}")

    @property
    def key(self) -> Dict[str, Any]:
        """Identifies this run's rows in shared DuckDB tables."""
        return {"run": self.digest[:HASH_CHARS], "seed": self.seed}

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    @property
    def config_path(self) -> str:
        return os.path.join(self.config_dir, "config.json")

    @property
    def report_path(self) -> str:
        return self.path("report.json")

    @property
    def log_path(self) -> str:
        return self.path("run.log")

    def checkpoint_path(self, task: int) -> str:
        return os.path.join(self.root, "checkpoints", f"task_{task}.ckpt")

    def is_complete(self) -> bool:
        return os.path.exists(self.report_path)

    def prepare(self) -> "RunArtifacts":
        ensure_dir(os.path.join(self.root, "checkpoints"))
        return self


def find_run_dirs(paths: List[str]) -> List[str]:
    """Completed seed directories under each path (a seed dir or any parent)."""
    found: List[str] = []
    for path in paths:
        if os.path.exists(os.path.join(path, "report.json")):
            found.append(path)
            continue
        for root, _dirs, files in os.walk(path):
            if "report.json" in files:
                found.append(root)
    return sorted(set(found))
