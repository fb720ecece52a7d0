"""
Task construction: datasets, seeded splits and the three suite generators
(permuted pixels, label splits, synthetic Gaussian blobs).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import ArgumentError, ConsistencyError, DimensionError

logger = logging.getLogger(__name__)

SUITE_KINDS = ("permuted", "split", "synthetic")


@dataclass
class Dataset:
    images: np.ndarray  # [n, d]
    labels: np.ndarray  # [n]
    class_count: int
    name: str = ""

    def __post_init__(self) -> None:
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2:
            raise DimensionError(f"images must be [n, d], got {self.images.shape}")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ConsistencyError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ArgumentError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.images.shape[1])

    def subset(self, idx: np.ndarray, name: Optional[str] = None) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx], self.class_count, name or self.name)

    def permuted(self, perm: np.ndarray, name: Optional[str] = None) -> "Dataset":
        return Dataset(permute_images(self.images, perm), self.labels.copy(), self.class_count, name or self.name)


@dataclass
class TaskData:
    name: str
    train: Dataset
    valid: Dataset
    test: Dataset
    classes: List[int] = field(default_factory=list)  # source labels, in head order

    @property
    def class_count(self) -> int:
        return self.train.class_count

    @property
    def dim(self) -> int:
        return self.train.dim


@dataclass
class TaskSuite:
    tasks: List[TaskData]
    seed: int
    kind: str
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in SUITE_KINDS:
            raise ArgumentError(f"suite kind must be one of {SUITE_KINDS}")

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def input_size(self) -> int:
        return self.tasks[0].dim

    @property
    def class_counts(self) -> List[int]:
        return [t.class_count for t in self.tasks]

    def prefix(self, t: int) -> "TaskSuite":
        return TaskSuite(self.tasks[:t], self.seed, self.kind, dict(self.meta))

    def to_manifest(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "meta": self.meta,
            "tasks": [
                {
                    "name": t.name,
                    "classes": list(t.classes),
                    "n_train": len(t.train),
                    "n_valid": len(t.valid),
                    "n_test": len(t.test),
                }
                for t in self.tasks
            ],
        }


def permute_images(images: np.ndarray, perm: np.ndarray) -> np.ndarray:
    if perm.shape != (images.shape[1],):
        raise DimensionError(f"permutation of length {perm.shape} for {images.shape[1]} features")
    return images[:, perm]


def inverse_permutation(perm: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.shape[0])
    return inv


def stratified_split(ds: Dataset, valid_fraction: float = 0.15, seed: int = 0) -> Tuple[Dataset, Dataset]:
    """Seeded per-class split; per-class quotas are rounded by largest remainder."""
    if not 0 < valid_fraction < 1:
        raise ArgumentError(f"valid_fraction must be in (0, 1), got {valid_fraction}")
    classes, counts = np.unique(ds.labels, return_counts=True)
    too_small = classes[counts * valid_fraction < 1]
    if too_small.size:
        raise ArgumentError(
            f"classes {too_small.tolist()} have fewer than {int(np.ceil(1 / valid_fraction))} samples"
        )

    exact = counts * valid_fraction
    quota = np.floor(exact).astype(np.int64)
    target = int(np.floor(len(ds) * valid_fraction + 0.5))
    remainder = exact - quota
    # stable sort keeps ties in class order
    for k in np.argsort(-remainder, kind="stable")[: max(0, target - int(quota.sum()))]:
        quota[k] += 1

    rng = np.random.default_rng(seed)
    valid_idx = []
    for cls, q in zip(classes, quota):
        members = np.flatnonzero(ds.labels == cls)
        valid_idx.append(rng.permutation(members)[:q])
    valid_idx = np.sort(np.concatenate(valid_idx))
    train_mask = np.ones(len(ds), dtype=bool)
    train_mask[valid_idx] = False
    return ds.subset(np.flatnonzero(train_mask)), ds.subset(valid_idx)


def _seeds(seed: int, n: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def make_permuted_suite(
    base: Dataset,
    test: Dataset,
    t_count: int,
    seed: int,
    identity_first: bool = True,
    valid_fraction: float = 0.15,
) -> TaskSuite:
    if t_count < 1:
        raise ArgumentError("t_count must be >= 1")
    split_seed, perm_seed = _seeds(seed, 2)
    train, valid = stratified_split(base, valid_fraction, split_seed)
    rng = np.random.default_rng(perm_seed)
    d = base.dim
    tasks, perms = [], []
    for k in range(t_count):
        perm = np.arange(d) if (k == 0 and identity_first) else rng.permutation(d)
        perms.append(perm)
        name = f"{base.name or 'base'}-perm{k}"
        tasks.append(
            TaskData(
                name=name,
                train=train.permuted(perm, name),
                valid=valid.permuted(perm, name),
                test=test.permuted(perm, name),
                classes=list(range(base.class_count)),
            )
        )
    logger.info("built permuted suite: %d tasks, seed %d", t_count, seed)
    return TaskSuite(tasks, seed, "permuted", {"identity_first": identity_first, "t_count": t_count})


def _select_group(ds: Dataset, group: Sequence[int], name: str) -> Dataset:
    lookup = {label: i for i, label in enumerate(group)}
    keep = np.isin(ds.labels, list(group))
    labels = np.array([lookup[int(v)] for v in ds.labels[keep]], dtype=np.int64)
    return Dataset(ds.images[keep], labels, len(group), name)


def make_split_suite(
    base: Dataset,
    test: Dataset,
    label_groups: Sequence[Sequence[int]],
    seed: int = 0,
    valid_fraction: float = 0.15,
) -> TaskSuite:
    groups = [[int(v) for v in g] for g in label_groups]
    if not groups or any(not g for g in groups):
        raise ArgumentError("label groups must be non-empty")
    seen: set = set()
    for g in groups:
        overlap = seen.intersection(g)
        if overlap or len(set(g)) != len(g):
            raise ArgumentError(f"label groups overlap on {sorted(overlap) or g}")
        seen.update(g)

    present = {int(v) for v in np.unique(base.labels)}
    missing = sorted(seen - present)
    if missing:
        raise ArgumentError(f"label groups name labels with no samples: {missing}")
    dropped = sorted(present - seen)
    if dropped:
        logger.warning("split suite drops samples with labels %s (in no group)", dropped)

    split_seeds = _seeds(seed, len(groups))
    tasks = []
    for k, g in enumerate(groups):
        name = f"{base.name or 'base'}-{'-'.join(map(str, g))}"
        train, valid = stratified_split(_select_group(base, g, name), valid_fraction, split_seeds[k])
        tasks.append(TaskData(name=name, train=train, valid=valid, test=_select_group(test, g, name), classes=g))
    logger.info("built split suite: groups %s", groups)
    return TaskSuite(tasks, seed, "split", {"label_groups": groups})


def make_synthetic_suite(
    t_count: int,
    classes: int,
    dim: int,
    separation: float,
    seed: int,
    n_train_per_class: int = 200,
    n_test_per_class: int = 100,
    valid_fraction: float = 0.15,
) -> TaskSuite:
    """Isotropic unit-variance Gaussian blobs with class means on a sphere of radius ``separation``."""
    if separation < 0:
        raise ArgumentError(f"separation must be >= 0, got {separation}")
    if t_count < 1 or classes < 1 or dim < 1:
        raise ArgumentError("t_count, classes and dim must be positive")
    rng = np.random.default_rng(seed)
    tasks = []
    for k in range(t_count):
        directions = rng.normal(size=(dim, classes))
        if classes <= dim:
            # orthonormal directions keep every pair of means equally far apart
            directions, _ = np.linalg.qr(directions)
        directions = directions / np.linalg.norm(directions, axis=0, keepdims=True)
        means = separation * directions.T  # [classes, dim]

        def _draw(per_class: int) -> Dataset:
            labels = np.repeat(np.arange(classes), per_class)
            x = means[labels] + rng.normal(size=(labels.shape[0], dim))
            order = rng.permutation(labels.shape[0])
            return Dataset(x[order], labels[order], classes, f"synthetic-{k}")

        train_full = _draw(n_train_per_class)
        test = _draw(n_test_per_class)
        train, valid = stratified_split(train_full, valid_fraction, int(rng.integers(2**31)))
        tasks.append(TaskData(f"synthetic-{k}", train, valid, test, list(range(classes))))
    meta = {"classes": classes, "dim": dim, "separation": separation}
    return TaskSuite(tasks, seed, "synthetic", meta)
