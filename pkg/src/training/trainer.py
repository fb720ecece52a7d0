"""
Sequential task training.

One task at a time: per batch the gate scale is annealed, the loss is the
cross entropy plus c times the attention sparsity penalty, weight and bias
gradients are conditioned on the attention of earlier tasks, embedding
gradients are compensated for the annealed sigmoid, and the learning rate
follows a plateau schedule on the validation loss. After convergence the task's
attention is snapshotted at s_max and folded into the cumulative attention.

The ``sgd``, ``sgd_freeze`` and ``multitask`` modes train the same network
without task attention and serve as baselines.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.hat.attention import anneal_s, gate_grad
from src.hat.conditioning import compensate_embedding_gradient, mask_bias_gradient, mask_weight_gradient
from src.hat.regularizer import regularized_loss, sparsity_regularizer
from src.hat.state import HatState
from src.hat.types import AttentionSet, HatConfig
from src.metrics.forgetting import random_stratified_accuracy
from src.monitor.capacity import capacity_usage
from src.nn.losses import softmax_xent_batch
from src.nn.network import Network
from src.nn.optim import OptimizerState, plateau_schedule, sgd_step
from src.sources.tasks import Dataset, TaskData, TaskSuite
from src.utils.errors import ArgumentError, NumericError, TrainingAborted
from src.utils.logs import log_event

from .records import EpochRecord, RunReport, TaskRunRecord

logger = logging.getLogger(__name__)

MODES = ("hat", "sgd", "sgd_freeze", "multitask")
EVAL_CHUNK = 2048


@dataclass
class ModelConfig:
    hidden_sizes: List[int] = field(default_factory=lambda: [100, 100])
    input_dropout: float = 0.0
    hidden_dropout: float = 0.0

    def __post_init__(self) -> None:
        if not self.hidden_sizes or any(int(n) <= 0 for n in self.hidden_sizes):
            raise ArgumentError(f"hidden_sizes must be positive, got {self.hidden_sizes}")
        self.hidden_sizes = [int(n) for n in self.hidden_sizes]
        for name in ("input_dropout", "hidden_dropout"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ArgumentError(f"{name} must be in [0, 1), got {rate}")


@dataclass
class TrainConfig:
    lr0: float = 0.05
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 5
    lr_decay: float = 3.0
    lr_min: float = 1e-4
    valid_fraction: float = 0.15
    mode: str = "hat"
    hat: HatConfig = field(default_factory=HatConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    monitor_threshold: float = 0.5
    # hard unit-step attention at evaluation instead of sigmoid(s_max e)
    strict_binary_eval: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ArgumentError(f"mode must be one of {MODES}, got '{self.mode}'")
        for name in ("lr0", "lr_decay", "lr_min"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name} must be positive")
        for name in ("batch_size", "max_epochs", "patience"):
            if int(getattr(self, name)) < 1:
                raise ArgumentError(f"{name} must be >= 1")
        if not 0.0 < self.valid_fraction < 1.0:
            raise ArgumentError(f"valid_fraction must be in (0, 1), got {self.valid_fraction}")
        if not 0.0 <= self.monitor_threshold < 1.0:
            raise ArgumentError(f"monitor_threshold must be in [0, 1), got {self.monitor_threshold}")

    def optimizer(self) -> OptimizerState:
        return OptimizerState(
            lr=self.lr0, patience=self.patience, decay=self.lr_decay, lr_min=self.lr_min
        )

    def to_dict(self) -> dict:
        return asdict(self)


def build_network(input_size: int, class_counts: Sequence[int], cfg: TrainConfig, rng: np.random.Generator) -> Network:
    m = cfg.model
    return Network.build(input_size, m.hidden_sizes, class_counts, rng, m.input_dropout, m.hidden_dropout)


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def _eval_attention(hat: HatState, task: int, strict_binary: bool) -> AttentionSet:
    return hat.binary_attention(task) if strict_binary else hat.attention(task)


def predict_logits(
    net: Network,
    hat: Optional[HatState],
    task: int,
    images: np.ndarray,
    strict_binary: bool = False,
) -> np.ndarray:
    """Eval-mode logits of head ``task``, gated at s_max when ``hat`` is given."""
    masks = input_mask = None
    if hat is not None:
        att = _eval_attention(hat, task, strict_binary)
        masks, input_mask = att.layers, att.input
    if images.shape[0] == 0:
        return np.zeros((0, net.class_counts[task]))
    chunks = [
        net.predict(images[i : i + EVAL_CHUNK], task, masks, input_mask)
        for i in range(0, images.shape[0], EVAL_CHUNK)
    ]
    return np.concatenate(chunks, axis=0)


def evaluate(
    net: Network,
    hat: Optional[HatState],
    task: int,
    ds: Dataset,
    strict_binary: bool = False,
) -> float:
    if not 0 <= task < len(net.heads):
        raise ArgumentError(f"unknown task {task}")
    if len(ds) == 0:
        raise ArgumentError("cannot evaluate on an empty split")
    logits = predict_logits(net, hat, task, ds.images, strict_binary)
    return float(np.mean(np.argmax(logits, axis=1) == ds.labels))


def _loss_on(
    net: Network, hat: Optional[HatState], task: int, ds: Dataset, c: float = 0.0
) -> float:
    """Eval-mode cross entropy, plus c*R at s_max when attention is active."""
    logits = predict_logits(net, hat, task, ds.images)
    loss, _ = softmax_xent_batch(logits, ds.labels)
    if hat is None:
        return loss
    R, _ = sparsity_regularizer(hat.attention(task), hat.conditioning(), hat.config.reg_scheme)
    return regularized_loss(loss, R, c)


def _live_capacity(hat: HatState, task: int, threshold: float) -> float:
    """Capacity with the current task folded into the cumulative attention."""
    cond = hat.conditioning()
    att = hat.attention(task)
    layers = [np.maximum(a, p) for a, p in zip(att.layers, cond.layers)]
    inp = None if att.input is None else np.maximum(att.input, cond.input)
    return capacity_usage(layers, hat.input_size, threshold, inp)


def _plain_step(
    net: Network,
    task: int,
    x: np.ndarray,
    y: np.ndarray,
    lr: float,
    rng: np.random.Generator,
    freeze_body: bool,
) -> float:
    logits, cache = net.forward(x, task, train_mode=True, rng=rng)
    loss, dlogits = softmax_xent_batch(logits, y)
    grads = net.backward(cache, dlogits)
    head = net.heads[task]
    params = [head.weight, head.bias]
    updates = [grads.head_w, grads.head_b]
    if not freeze_body:
        for l, layer in enumerate(net.body):
            params += [layer.weight, layer.bias]
            updates += [grads.body_w[l], grads.body_b[l]]
    sgd_step(params, updates, lr)
    return loss


def _hat_step(
    net: Network,
    hat: HatState,
    task: int,
    x: np.ndarray,
    y: np.ndarray,
    s: float,
    lr: float,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    cfg = hat.config
    att = hat.attention(task, s)
    cond = hat.conditioning()
    logits, cache = net.forward(x, task, att.layers, att.input, train_mode=True, rng=rng)
    xent, dlogits = softmax_xent_batch(logits, y)
    R, dR = sparsity_regularizer(att, cond, cfg.reg_scheme)
    loss = regularized_loss(xent, R, cfg.c)
    grads = net.backward(cache, dlogits)

    head = net.heads[task]
    params = [head.weight, head.bias]
    updates = [grads.head_w, grads.head_b]
    for l, layer in enumerate(net.body):
        a_in = cond.input if l == 0 else cond.layers[l - 1]
        params += [layer.weight, layer.bias]
        updates += [
            mask_weight_gradient(grads.body_w[l], cond.layers[l], a_in),
            mask_bias_gradient(grads.body_b[l], cond.layers[l]),
        ]

    # dR is aligned with att.vectors(): input vector first when present
    emb = hat.embeddings[task]
    dmasks = list(grads.masks)
    embeds = list(emb.layers)
    if att.input is not None:
        dmasks = [grads.input_mask] + dmasks
        embeds = [emb.input] + embeds
    for k, (e, dm) in enumerate(zip(embeds, dmasks)):
        q = (dm + cfg.c * dR[k]) * gate_grad(e, s, cfg.se_clamp)
        params.append(e)
        updates.append(compensate_embedding_gradient(q, e, s, cfg.s_max, cfg.se_clamp))

    sgd_step(params, updates, lr)
    emb.clamp_(cfg.e_clamp)
    return loss, R


def train_task(
    net: Network,
    hat: Optional[HatState],
    data: TaskData,
    cfg: TrainConfig,
    rng: np.random.Generator,
    task: int,
    freeze_body: bool = False,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TaskRunRecord:
    """Train head ``task`` (and the shared body) on one task.

    ``hat=None`` trains without attention (sgd baselines). The caller owns the
    network and attention state; ``hat.finish_task`` is called here once the
    task converged.
    """
    if not 0 <= task < len(net.heads):
        raise ArgumentError(f"no head for task {task}")
    if len(data.train) == 0 or len(data.valid) == 0:
        raise ArgumentError(f"task '{data.name}' has an empty train or valid split")
    if hat is not None and task not in hat.embeddings:
        hat.init_task(task, rng)

    opt = cfg.optimizer()
    c = hat.config.c if hat is not None else 0.0
    n = len(data.train)
    n_batches = math.ceil(n / cfg.batch_size)
    epochs: List[EpochRecord] = []
    valid_loss = float("inf")

    for epoch in range(1, cfg.max_epochs + 1):
        lr = opt.lr
        losses = []
        regs = []
        for b, idx in enumerate(_batches(n, cfg.batch_size, rng), start=1):
            x, y = data.train.images[idx], data.train.labels[idx]
            try:
                if hat is None:
                    losses.append(_plain_step(net, task, x, y, lr, rng, freeze_body))
                else:
                    s = anneal_s(b, n_batches, hat.config.s_max, hat.config.anneal_scheme)
                    loss, R = _hat_step(net, hat, task, x, y, s, lr, rng)
                    losses.append(loss)
                    regs.append(R)
            except NumericError as exc:
                log_event(logger, "abort", logging.ERROR, task=task, epoch=epoch, batch=b, reason=str(exc))
                raise TrainingAborted(
                    f"non-finite value in task {task}, epoch {epoch}, batch {b}: {exc}", task, epoch, b
                ) from exc

        try:
            valid_loss = _loss_on(net, hat, task, data.valid, c)
        except NumericError as exc:
            raise TrainingAborted(f"non-finite validation loss in task {task}, epoch {epoch}", task, epoch, 0) from exc
        capacity = 1.0 if hat is None else _live_capacity(hat, task, cfg.monitor_threshold)
        record = EpochRecord(
            task=task,
            epoch=epoch,
            lr=lr,
            train_loss=float(np.mean(losses)),
            valid_loss=float(valid_loss),
            reg=float(np.mean(regs)) if regs else 0.0,
            capacity=float(capacity),
        )
        epochs.append(record)
        log_event(logger, "epoch", **asdict(record))
        if on_epoch is not None:
            on_epoch(record)

        _, stop = plateau_schedule(opt, valid_loss)
        if stop:
            break

    if hat is not None:
        hat.finish_task(task)
    test_acc = evaluate(net, hat, task, data.test, cfg.strict_binary_eval)
    log_event(logger, "task_done", task=task, name=data.name, epochs=len(epochs), test_accuracy=test_acc)
    return TaskRunRecord(
        task=task,
        epochs_run=len(epochs),
        final_valid_loss=float(valid_loss),
        test_accuracy=test_acc,
        epochs=epochs,
    )


def _streams(seed: int, n_tasks: int) -> List[np.random.Generator]:
    """[init, task 0, task 1, ...] generators spawned from one seed."""
    children = np.random.SeedSequence(seed).spawn(1 + n_tasks)
    return [np.random.default_rng(child) for child in children]


TaskEndHook = Callable[[int, Network, Optional[HatState], TaskRunRecord], None]


def run_sequence(
    suite: TaskSuite,
    cfg: TrainConfig,
    seed: int,
    on_task_end: Optional[TaskEndHook] = None,
    with_joint_reference: bool = False,
) -> RunReport:
    """Train the suite's tasks in order and fill the accuracy matrix.

    After task t, every task tau <= t is evaluated on its test split.
    ``on_task_end`` sees the live network and attention state (for
    checkpoints and monitoring) right after each task.
    """
    if len(suite) == 0:
        raise ArgumentError("empty task suite")
    names = [t.name for t in suite.tasks]
    random_ref = [random_stratified_accuracy(t.test.labels) for t in suite.tasks]

    if cfg.mode == "multitask":
        accuracy = [train_joint(suite, cfg, seed, t) for t in range(1, len(suite) + 1)]
        return RunReport(
            seed=seed,
            mode=cfg.mode,
            task_names=names,
            accuracy=accuracy,
            random_reference=random_ref,
            joint_reference=[list(r) for r in accuracy],
        )

    streams = _streams(seed, len(suite))
    net = build_network(suite.input_size, suite.class_counts, cfg, streams[0])
    hat = None
    if cfg.mode == "hat":
        hat = HatState(cfg.hat, net.layer_sizes, net.input_size)

    accuracy: List[List[float]] = []
    records: List[TaskRunRecord] = []
    for k, data in enumerate(suite.tasks):
        log_event(logger, "task_start", task=k, name=data.name, mode=cfg.mode, seed=seed)
        freeze = cfg.mode == "sgd_freeze" and k > 0
        record = train_task(net, hat, data, cfg, streams[k + 1], k, freeze_body=freeze)
        records.append(record)
        accuracy.append(
            [evaluate(net, hat, tau, suite.tasks[tau].test, cfg.strict_binary_eval) for tau in range(k + 1)]
        )
        log_event(logger, "sequence_step", t=k + 1, mean_accuracy=float(np.mean(accuracy[-1])))
        if on_task_end is not None:
            on_task_end(k, net, hat, record)

    joint = None
    if with_joint_reference:
        joint = joint_reference(suite, cfg, seed)
    return RunReport(
        seed=seed,
        mode=cfg.mode,
        task_names=names,
        accuracy=accuracy,
        records=records,
        random_reference=random_ref,
        joint_reference=joint,
    )


def train_joint(suite: TaskSuite, cfg: TrainConfig, seed: int, t: Optional[int] = None) -> List[float]:
    """Multitask reference: shared body and t heads trained concurrently.

    Each batch comes from a uniformly drawn task; an epoch has as many batches
    as the largest task. Returns test accuracy per task tau < t.
    """
    t = len(suite) if t is None else int(t)
    if not 1 <= t <= len(suite):
        raise ArgumentError(f"prefix length {t} outside 1..{len(suite)}")
    tasks = suite.tasks[:t]
    for data in tasks:
        if len(data.train) == 0 or len(data.valid) == 0:
            raise ArgumentError(f"task '{data.name}' has an empty train or valid split")

    streams = _streams(seed, len(suite))
    chooser = streams[0]
    net = build_network(suite.input_size, [d.class_count for d in tasks], cfg, chooser)
    task_rngs = streams[1 : t + 1]
    opt = cfg.optimizer()
    steps = max(math.ceil(len(d.train) / cfg.batch_size) for d in tasks)

    for epoch in range(1, cfg.max_epochs + 1):
        lr = opt.lr
        queues = [_batches(len(d.train), cfg.batch_size, r) for d, r in zip(tasks, task_rngs)]
        cursors = [0] * t
        losses = []
        for b in range(1, steps + 1):
            k = 0 if t == 1 else int(chooser.integers(t))
            if cursors[k] == len(queues[k]):
                queues[k] = _batches(len(tasks[k].train), cfg.batch_size, task_rngs[k])
                cursors[k] = 0
            idx = queues[k][cursors[k]]
            cursors[k] += 1
            data = tasks[k]
            try:
                losses.append(
                    _plain_step(net, k, data.train.images[idx], data.train.labels[idx], lr, task_rngs[k], False)
                )
            except NumericError as exc:
                raise TrainingAborted(f"non-finite value in joint training, epoch {epoch}, batch {b}: {exc}", k, epoch, b) from exc

        valid_loss = sum(_loss_on(net, None, k, d.valid) for k, d in enumerate(tasks)) / t
        log_event(
            logger, "joint_epoch", tasks=t, epoch=epoch, lr=lr, train_loss=float(np.mean(losses)), valid_loss=valid_loss
        )
        _, stop = plateau_schedule(opt, valid_loss)
        if stop:
            break

    return [evaluate(net, None, k, d.test) for k, d in enumerate(tasks)]


def joint_reference(suite: TaskSuite, cfg: TrainConfig, seed: int) -> List[List[float]]:
    """A_J^{tau<=t}: one multitask run per prefix length t."""
    return [train_joint(suite, cfg, seed, t) for t in range(1, len(suite) + 1)]
