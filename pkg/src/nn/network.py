"""
Multi-head MLP: a shared ReLU body and one output head per task.

The forward pass accepts optional per-layer attention vectors, which is the
hook the task-attention code plugs into. Without masks it is a plain MLP.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.hat.attention import apply_attention
from src.utils.errors import ArgumentError, DimensionError

from .layers import DenseCache, DenseLayer, Tensor, dense_backward, dense_forward, init_weights, relu


@dataclass
class _BodyRecord:
    dense: DenseCache
    z: Tensor
    h: Tensor  # ReLU output before attention
    mask: Optional[Tensor]


@dataclass
class ForwardCache:
    task: int
    x: Tensor
    input_mask: Optional[Tensor]
    body: List[_BodyRecord]
    head: DenseCache


@dataclass
class Gradients:
    body_w: List[Tensor]
    body_b: List[Tensor]
    head_w: Tensor
    head_b: Tensor
    # dL/da per body layer; None where no mask was applied
    masks: List[Optional[Tensor]] = field(default_factory=list)
    input_mask: Optional[Tensor] = None


class Network:
    def __init__(self, input_size: int, body: Sequence[DenseLayer], heads: Sequence[DenseLayer]):
        self.input_size = int(input_size)
        self.body: List[DenseLayer] = list(body)
        self.heads: List[DenseLayer] = list(heads)
        prev = self.input_size
        for layer in self.body:
            if layer.n_in != prev:
                raise DimensionError(f"body layer expects {layer.n_in} inputs, previous layer gives {prev}")
            prev = layer.n_out
        for head in self.heads:
            if head.n_in != prev:
                raise DimensionError(f"head expects {head.n_in} inputs, body gives {prev}")

    @classmethod
    def build(
        cls,
        input_size: int,
        hidden_sizes: Sequence[int],
        class_counts: Sequence[int],
        rng: np.random.Generator,
        input_dropout: float = 0.0,
        hidden_dropout: float = 0.0,
    ) -> "Network":
        if not hidden_sizes:
            raise ArgumentError("the body needs at least one hidden layer")
        body = []
        prev = input_size
        for i, n in enumerate(hidden_sizes):
            rate = input_dropout if i == 0 else hidden_dropout
            body.append(DenseLayer(init_weights((n, prev), "xavier_uniform", rng), np.zeros(n), rate))
            prev = n
        net = cls(input_size, body, [])
        for k in class_counts:
            net.add_head(k, rng, hidden_dropout)
        return net

    def add_head(self, n_classes: int, rng: np.random.Generator, dropout_rate: float = 0.0) -> int:
        n_in = self.layer_sizes[-1]
        self.heads.append(
            DenseLayer(init_weights((n_classes, n_in), "xavier_uniform", rng), np.zeros(n_classes), dropout_rate)
        )
        return len(self.heads) - 1

    @property
    def layer_sizes(self) -> List[int]:
        return [layer.n_out for layer in self.body]

    @property
    def class_counts(self) -> List[int]:
        return [head.n_out for head in self.heads]

    def body_weight_count(self) -> int:
        return int(sum(layer.weight.size for layer in self.body))

    def copy(self) -> "Network":
        return Network(self.input_size, [l.copy() for l in self.body], [h.copy() for h in self.heads])

    def forward(
        self,
        x: Tensor,
        task: int,
        masks: Optional[Sequence[Tensor]] = None,
        input_mask: Optional[Tensor] = None,
        train_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[Tensor, ForwardCache]:
        if not 0 <= task < len(self.heads):
            raise ArgumentError(f"no head for task {task}")
        if masks is not None and len(masks) != len(self.body):
            raise DimensionError(f"{len(masks)} masks for {len(self.body)} body layers")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]

        h = x if input_mask is None else apply_attention(x, input_mask)
        records = []
        for l, layer in enumerate(self.body):
            z, dense = dense_forward(layer, h, train_mode, rng)
            a = relu(z)
            mask = None if masks is None else masks[l]
            h = a if mask is None else apply_attention(a, mask)
            records.append(_BodyRecord(dense=dense, z=z, h=a, mask=mask))

        # The active head is the hard-coded binary mask of the last layer.
        logits, head_cache = dense_forward(self.heads[task], h, train_mode, rng)
        return logits, ForwardCache(task=task, x=x, input_mask=input_mask, body=records, head=head_cache)

    def backward(self, cache: ForwardCache, dlogits: Tensor) -> Gradients:
        dh, head_w, head_b = dense_backward(cache.head, dlogits)
        n = len(self.body)
        body_w: List[Tensor] = [None] * n  # type: ignore[list-item]
        body_b: List[Tensor] = [None] * n  # type: ignore[list-item]
        dmasks: List[Optional[Tensor]] = [None] * n
        for l in reversed(range(n)):
            rec = cache.body[l]
            if rec.mask is not None:
                dmasks[l] = (dh * rec.h).sum(axis=0)
                dh = dh * rec.mask
            dz = dh * (rec.z > 0)
            dh, body_w[l], body_b[l] = dense_backward(rec.dense, dz)

        dinput = None
        if cache.input_mask is not None:
            dinput = (dh * cache.x).sum(axis=0)
        return Gradients(body_w, body_b, head_w, head_b, dmasks, dinput)

    def predict(self, x: Tensor, task: int, masks=None, input_mask=None) -> Tensor:
        logits, _ = self.forward(x, task, masks, input_mask, train_mode=False)
        return logits
