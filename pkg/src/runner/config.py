"""
Experiment config files.

A config is a JSON document with the sections ``suite``, ``model``, ``train``,
``hat`` and the optional ``sweep``. Every key is checked against the dataclass
it fills: unknown keys and wrong value types are rejected with the dotted field
path and, where it can be located, the line in the file. Validation runs before
any data is loaded.
"""
from __future__ import annotations

import copy
import itertools
import json
import os
import re
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

from src.hat.types import HatConfig
from src.training.trainer import ModelConfig, TrainConfig
from src.utils.config import load_settings
from src.utils.errors import ArgumentError, ConfigError

SUITE_KINDS = ("split", "permuted", "synthetic")


@dataclass
class SuiteSpec:
    kind: str = "synthetic"
    seeds: List[int] = field(default_factory=lambda: [0])
    task_count: int = 2
    label_groups: List[List[int]] = field(default_factory=list)
    identity_first: bool = True
    # synthetic suites only
    classes: int = 2
    dim: int = 20
    separation: float = 3.0
    n_train_per_class: int = 200
    n_test_per_class: int = 100

    def __post_init__(self) -> None:
        if self.kind not in SUITE_KINDS:
            raise ArgumentError(f"kind must be one of {SUITE_KINDS}, got '{self.kind}'")
        if not self.seeds:
            raise ArgumentError("at least one seed is required")
        if self.kind == "split":
            if not self.label_groups:
                raise ArgumentError("split suites need label_groups")
            self.task_count = len(self.label_groups)
        if self.task_count < 1:
            raise ArgumentError("task_count must be >= 1")


@dataclass
class SweepSpec:
    s_max: List[float] = field(default_factory=list)
    c: List[float] = field(default_factory=list)

    def grid(self, base: HatConfig) -> List[Tuple[str, HatConfig]]:
        s_values = self.s_max or [base.s_max]
        c_values = self.c or [base.c]
        return [
            (f"smax{s:g}_c{c:g}", replace(base, s_max=float(s), c=float(c)))
            for s, c in itertools.product(s_values, c_values)
        ]


@dataclass
class ExperimentConfig:
    name: str
    suite: SuiteSpec
    train: TrainConfig
    output_dir: str = "runs"
    sweep: Optional[SweepSpec] = None
    # also train the multitask reference for every prefix (needed by ratio reports)
    joint_reference: bool = False
    checkpoints: bool = True

    @property
    def model(self) -> ModelConfig:
        return self.train.model

    @property
    def hat(self) -> HatConfig:
        return self.train.hat

    def to_dict(self) -> Dict[str, Any]:
        train = asdict(self.train)
        model = train.pop("model")
        hat = train.pop("hat")
        out: Dict[str, Any] = {
            "name": self.name,
            "suite": asdict(self.suite),
            "model": model,
            "train": train,
            "hat": hat,
            "output_dir": self.output_dir,
            "joint_reference": self.joint_reference,
            "checkpoints": self.checkpoints,
        }
        if self.sweep is not None:
            out["sweep"] = asdict(self.sweep)
        return out

    def expand(self) -> List["ExperimentConfig"]:
        """One config per sweep grid point (or just this one)."""
        if self.sweep is None:
            return [self]
        variants = []
        for label, hat in self.sweep.grid(self.hat):
            train = replace(self.train, hat=hat)
            variants.append(replace(self, name=f"{self.name}-{label}", train=train, sweep=None))
        return variants


_TOP_KEYS = ("name", "suite", "model", "train", "hat", "sweep", "output_dir", "joint_reference", "checkpoints")


def _line_of(text: Optional[str], path: str) -> Optional[int]:
    """Best-effort line of the last key of a dotted path."""
    if not text:
        return None
    pos = 0
    for key in path.split("."):
        m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def _type_ok(value: Any, default: Any) -> bool:
    if default is None:
        return True
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list)
    return True


def _build(cls, section: str, raw: Any, text: Optional[str], skip: Tuple[str, ...] = ()):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("expected an object", section, _line_of(text, section))
    defaults = cls()
    known = {f.name for f in fields(cls) if f.name not in skip}
    for key, value in raw.items():
        path = f"{section}.{key}"
        if key not in known:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(known))})", path, _line_of(text, path))
        if not _type_ok(value, getattr(defaults, key)):
            expected = type(getattr(defaults, key)).__name__
            raise ConfigError(f"expected {expected}, got {json.dumps(value)}", path, _line_of(text, path))
    try:
        return cls(**raw)
    except (ArgumentError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), section, _line_of(text, section)) from exc


def parse_config(data: Any, text: Optional[str] = None, default_name: str = "experiment") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", None, 1 if text else None)
    for key in data:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown key (allowed: {', '.join(_TOP_KEYS)})", key, _line_of(text, key))

    suite = _build(SuiteSpec, "suite", data.get("suite"), text)
    model = _build(ModelConfig, "model", data.get("model"), text)
    hat = _build(HatConfig, "hat", data.get("hat"), text)
    train_raw = data.get("train") or {}
    train_fields = _build(TrainConfig, "train", train_raw, text, skip=("hat", "model"))
    train = replace(train_fields, hat=hat, model=model)
    sweep = None
    if data.get("sweep") is not None:
        sweep = _build(SweepSpec, "sweep", data["sweep"], text)
        for key in ("s_max", "c"):
            values = getattr(sweep, key)
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
                raise ConfigError("expected a list of numbers", f"sweep.{key}", _line_of(text, f"sweep.{key}"))
        try:
            sweep.grid(hat)
        except ArgumentError as exc:
            raise ConfigError(str(exc), "sweep", _line_of(text, "sweep")) from exc

    scalars = {"name": str, "output_dir": str, "joint_reference": bool, "checkpoints": bool}
    for key, typ in scalars.items():
        if key in data and not isinstance(data[key], typ):
            raise ConfigError(f"expected {typ.__name__}", key, _line_of(text, key))
    return ExperimentConfig(
        name=data.get("name", default_name),
        suite=suite,
        train=train,
        output_dir=data.get("output_dir") or load_settings().runs_dir,
        sweep=sweep,
        joint_reference=data.get("joint_reference", False),
        checkpoints=data.get("checkpoints", True),
    )


def load_experiment(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", None, exc.lineno) from exc
    name = os.path.splitext(os.path.basename(path))[0]
    return parse_config(data, text, default_name=name)


def with_seeds(cfg: ExperimentConfig, seeds: Optional[List[int]]) -> ExperimentConfig:
    if not seeds:
        return cfg
    return replace(cfg, suite=replace(copy.deepcopy(cfg.suite), seeds=list(seeds)))
