from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd


@dataclass
class EpochRecord:
    task: int
    epoch: int
    lr: float
    train_loss: float
    valid_loss: float
    reg: float
    capacity: float


@dataclass
class TaskRunRecord:
    task: int
    epochs_run: int
    final_valid_loss: float
    test_accuracy: float
    epochs: List[EpochRecord] = field(default_factory=list)

    @property
    def capacity(self) -> List[float]:
        return [e.capacity for e in self.epochs]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TaskRunRecord":
        epochs = [EpochRecord(**e) for e in data.get("epochs", [])]
        return cls(
            task=data["task"],
            epochs_run=data["epochs_run"],
            final_valid_loss=data["final_valid_loss"],
            test_accuracy=data["test_accuracy"],
            epochs=epochs,
        )


@dataclass
class RunReport:
    """Outcome of one seeded run over a task suite.

    ``accuracy[t][tau]`` is the test accuracy on task tau after training task t
    (lower triangular, rows have t+1 entries).
    """

    seed: int
    mode: str
    task_names: List[str]
    accuracy: List[List[float]]
    records: List[TaskRunRecord] = field(default_factory=list)
    random_reference: Optional[List[float]] = None
    joint_reference: Optional[List[List[float]]] = None
    checkpoints: List[str] = field(default_factory=list)

    @property
    def task_count(self) -> int:
        return len(self.accuracy)

    def average_accuracy(self) -> List[float]:
        """A^{<=t}: mean accuracy over tasks tau <= t after training task t."""
        return [float(np.mean(row)) for row in self.accuracy]

    def accuracy_frame(self) -> pd.DataFrame:
        rows = [
            {"t": t + 1, "task": tau, "accuracy": acc}
            for t, row in enumerate(self.accuracy)
            for tau, acc in enumerate(row)
        ]
        return pd.DataFrame(rows, columns=["t", "task", "accuracy"])

    def progress_frame(self) -> pd.DataFrame:
        rows = [asdict(e) for r in self.records for e in r.epochs]
        return pd.DataFrame(rows, columns=["task", "epoch", "lr", "train_loss", "valid_loss", "reg", "capacity"])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "mode": self.mode,
            "task_names": list(self.task_names),
            "accuracy": [list(map(float, row)) for row in self.accuracy],
            "records": [r.to_dict() for r in self.records],
            "random_reference": self.random_reference,
            "joint_reference": self.joint_reference,
            "checkpoints": list(self.checkpoints),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunReport":
        return cls(
            seed=data["seed"],
            mode=data["mode"],
            task_names=data["task_names"],
            accuracy=data["accuracy"],
            records=[TaskRunRecord.from_dict(r) for r in data.get("records", [])],
            random_reference=data.get("random_reference"),
            joint_reference=data.get("joint_reference"),
            checkpoints=data.get("checkpoints", []),
        )
