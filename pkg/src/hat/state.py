from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.nn.layers import init_weights
from src.utils.errors import ArgumentError, StateError

from .attention import accumulate, binarize, gate
from .types import AttentionSet, CumulativeAttention, HatConfig, TaskEmbeddings

logger = logging.getLogger(__name__)


class HatState:
    """Per-task embeddings, attention snapshots and the cumulative attention.

    ``history[k]`` is the cumulative attention after k finished tasks, so
    ``history[0]`` is all zeros. Tasks are identified by their head index.
    """

    def __init__(self, config: HatConfig, layer_sizes: Sequence[int], input_size: int):
        self.config = config
        self.layer_sizes = [int(n) for n in layer_sizes]
        self.input_size = int(input_size)
        self.embeddings: Dict[int, TaskEmbeddings] = {}
        self.snapshots: Dict[int, AttentionSet] = {}
        self.task_order: List[int] = []
        in_size = self.input_size if config.input_attention else None
        self.history: List[CumulativeAttention] = [CumulativeAttention.zeros(self.layer_sizes, in_size)]

    @property
    def cumulative(self) -> CumulativeAttention:
        return self.history[-1]

    def _draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        cfg = self.config
        if cfg.embed_init == "gaussian":
            return init_weights((n,), "gaussian", rng, mean=cfg.embed_mean, std=cfg.embed_std)
        return init_weights((n,), "uniform", rng, low=cfg.embed_low, high=cfg.embed_high)

    def init_task(self, task: int, rng: np.random.Generator) -> TaskEmbeddings:
        if task in self.snapshots:
            raise StateError(f"task {task} has already been trained")
        emb = TaskEmbeddings(
            layers=[self._draw(n, rng) for n in self.layer_sizes],
            input=self._draw(self.input_size, rng) if self.config.input_attention else None,
        )
        emb.clamp_(self.config.e_clamp)
        self.embeddings[task] = emb
        return emb

    def _embeddings(self, task: int) -> TaskEmbeddings:
        if task not in self.embeddings:
            raise ArgumentError(f"unknown task {task}")
        return self.embeddings[task]

    def attention(self, task: int, s: Optional[float] = None) -> AttentionSet:
        """Gate the task's embeddings at scale s (default s_max)."""
        emb = self._embeddings(task)
        s = self.config.s_max if s is None else s
        clamp = self.config.se_clamp
        return AttentionSet(
            layers=[gate(e, s, clamp) for e in emb.layers],
            s=s,
            input=None if emb.input is None else gate(emb.input, s, clamp),
        )

    def binary_attention(self, task: int) -> AttentionSet:
        """Hard unit-step attention at evaluation time."""
        soft = self.attention(task)
        thr = self.config.threshold
        return AttentionSet(
            layers=[binarize(a, thr) for a in soft.layers],
            s=soft.s,
            input=None if soft.input is None else binarize(soft.input, thr),
        )

    def conditioning(self) -> CumulativeAttention:
        """Cumulative attention of finished tasks as used by gradient masking."""
        cum = self.cumulative
        if not self.config.strict_cumulative:
            return cum
        thr = self.config.threshold
        return CumulativeAttention(
            layers=[binarize(a, thr) for a in cum.layers],
            input=None if cum.input is None else binarize(cum.input, thr),
            tasks=cum.tasks,
        )

    def finish_task(self, task: int) -> CumulativeAttention:
        """Snapshot the task's attention at s_max and fold it into the cumulative attention."""
        if task in self.snapshots:
            raise StateError(f"task {task} already finished")
        snap = self.attention(task)
        self.snapshots[task] = snap
        cfg = self.config
        self.history.append(accumulate(snap, self.cumulative, cfg.cum_scheme, cfg.kappa))
        self.task_order.append(task)
        logger.debug("accumulated attention for task %d", task)
        return self.cumulative

    def cumulative_before(self, task: int) -> CumulativeAttention:
        """a^{<t}: cumulative attention right before ``task`` was trained."""
        if task not in self.task_order:
            return self.cumulative
        return self.history[self.task_order.index(task)]

    def cumulative_through(self, task: int) -> CumulativeAttention:
        """a^{<=t}: cumulative attention right after ``task`` was trained."""
        if task not in self.task_order:
            raise ArgumentError(f"task {task} has not been trained")
        return self.history[self.task_order.index(task) + 1]
