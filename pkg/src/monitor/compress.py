"""
Mask-driven pruning.

A trained task's binarized attention selects a sub-network: a body weight is
kept when both of its endpoint units are active. Pruned weights and the biases
of inactive units are set to exactly zero, so the pruned network computes the
same logits as the strictly binary masked one without any masks at all.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from src.hat.attention import binarize
from src.hat.state import HatState
from src.nn.network import Network
from src.sources.tasks import Dataset, TaskData
from src.training.trainer import TrainConfig, evaluate, train_task
from src.utils.errors import ArgumentError
from src.utils.logs import log_event

logger = logging.getLogger(__name__)


@dataclass
class PrunedNetwork:
    network: Network
    keep: List[np.ndarray]  # per body layer, shape of the weight matrix
    task: int
    threshold: float

    @property
    def kept(self) -> int:
        return int(sum(k.sum() for k in self.keep))

    @property
    def total(self) -> int:
        return int(sum(k.size for k in self.keep))

    @property
    def compression(self) -> float:
        """Kept body weights over all body weights; heads are excluded."""
        return self.kept / self.total

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.network.predict(x, self.task)


def prune(net: Network, hat: HatState, task: int, threshold: float = 0.5) -> PrunedNetwork:
    if task not in hat.snapshots:
        raise ArgumentError(f"task {task} has not been trained")
    snap = hat.snapshots[task]
    units = [binarize(a, threshold) for a in snap.layers]
    inp = np.ones(net.input_size) if snap.input is None else binarize(snap.input, threshold)

    pruned = net.copy()
    keep = []
    prev = inp
    for layer, out in zip(pruned.body, units):
        mask = np.outer(out, prev)
        layer.weight = np.where(mask > 0, layer.weight, 0.0)
        layer.bias = np.where(out > 0, layer.bias, 0.0)
        keep.append(mask)
        prev = out
    # inactive last-layer units are already exact zeros, head t stays whole
    return PrunedNetwork(network=pruned, keep=keep, task=task, threshold=threshold)


@dataclass
class CompressionResult:
    task: int
    c: float
    threshold: float
    compression: float
    accuracy_checkpoint: Optional[float]
    accuracy_before: float
    accuracy_after: float
    epochs_run: int
    pruned: PrunedNetwork
    hat: HatState

    def summary(self) -> dict:
        return {
            "task": self.task,
            "c": self.c,
            "threshold": self.threshold,
            "compression": self.compression,
            "kept_weights": self.pruned.kept,
            "total_weights": self.pruned.total,
            "accuracy_checkpoint": self.accuracy_checkpoint,
            "accuracy_before": self.accuracy_before,
            "accuracy_after": self.accuracy_after,
            "accuracy_delta": self.accuracy_after - self.accuracy_before,
            "epochs_run": self.epochs_run,
        }


def _accuracy(logits: np.ndarray, ds: Dataset) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == ds.labels))


def masked_predict(net: Network, hat: HatState, task: int, x: np.ndarray, threshold: float) -> np.ndarray:
    """Forward with the task's attention binarized at ``threshold``."""
    snap = hat.snapshots[task]
    masks = [binarize(a, threshold) for a in snap.layers]
    inp = None if snap.input is None else binarize(snap.input, threshold)
    return net.predict(x, task, masks, inp)


def compress_task(
    net: Network,
    data: TaskData,
    task: int,
    train_cfg: TrainConfig,
    rng: np.random.Generator,
    threshold: float = 0.5,
    hat: Optional[HatState] = None,
) -> CompressionResult:
    """Warm-start from ``net``, learn fresh attention for one task under
    ``train_cfg.hat`` (normally ``HatConfig.compression()``), then prune.

    ``hat`` is the attention state saved with ``net``; it only provides the
    checkpoint accuracy. Accuracy before/after compares the binarized masked
    network with its pruned counterpart at the same threshold.
    """
    if not 0 <= task < len(net.heads):
        raise ArgumentError(f"unknown task {task}")
    checkpoint_acc = None
    if hat is None or task in hat.snapshots:
        checkpoint_acc = evaluate(net, hat, task, data.test)

    work = net.copy()
    fresh = HatState(train_cfg.hat, work.layer_sizes, work.input_size)
    record = train_task(work, fresh, data, train_cfg, rng, task)
    before = _accuracy(masked_predict(work, fresh, task, data.test.images, threshold), data.test)
    pruned = prune(work, fresh, task, threshold)
    after = _accuracy(pruned.predict(data.test.images), data.test)
    log_event(
        logger,
        "compressed",
        task=task,
        c=train_cfg.hat.c,
        compression=pruned.compression,
        accuracy_before=before,
        accuracy_after=after,
    )
    return CompressionResult(
        task=task,
        c=train_cfg.hat.c,
        threshold=threshold,
        compression=pruned.compression,
        accuracy_checkpoint=checkpoint_acc,
        accuracy_before=before,
        accuracy_after=after,
        epochs_run=record.epochs_run,
        pruned=pruned,
        hat=fresh,
    )
