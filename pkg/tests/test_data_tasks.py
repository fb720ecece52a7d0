from __future__ import annotations

import gzip
import hashlib
import logging
import os
import struct

import numpy as np
import pytest

from src.sources import mnist
from src.sources.idx import IMAGES_MAGIC, LABELS_MAGIC, load_idx, read_idx
from src.sources.tasks import (
    Dataset,
    inverse_permutation,
    make_permuted_suite,
    make_split_suite,
    make_synthetic_suite,
    permute_images,
    stratified_split,
    TaskSuite,
)
from src.utils.errors import (
    ArgumentError,
    ConsistencyError,
    DimensionError,
    FormatError,
    IntegrityError,
    TruncatedFileError,
)


def _idx_bytes(magic: int, dims, payload: bytes) -> bytes:
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + payload


def _write_pair(tmp_path, n=5, rows=2, cols=3, gz=False, label_count=None):
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(n, rows, cols), dtype=np.uint8)
    labels = (np.arange(label_count if label_count is not None else n) % 3).astype(np.uint8)
    img = _idx_bytes(IMAGES_MAGIC, (n, rows, cols), pixels.tobytes())
    lab = _idx_bytes(LABELS_MAGIC, (labels.shape[0],), labels.tobytes())
    suffix = ".gz" if gz else ""
    img_path = tmp_path / f"images{suffix}"
    lab_path = tmp_path / f"labels{suffix}"
    opener = gzip.open if gz else open
    with opener(img_path, "wb") as f:
        f.write(img)
    with opener(lab_path, "wb") as f:
        f.write(lab)
    return str(img_path), str(lab_path), pixels, labels


@pytest.mark.parametrize("gz", [False, True])
def test_load_idx_scales_and_flattens(tmp_path, gz):
    img_path, lab_path, pixels, labels = _write_pair(tmp_path, gz=gz)
    ds = load_idx(img_path, lab_path)
    assert ds.images.shape == (5, 6)
    assert np.allclose(ds.images, pixels.reshape(5, 6) / 255.0)
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0
    assert np.array_equal(ds.labels, labels)
    assert ds.class_count == 3


def test_read_idx_bad_magic(tmp_path):
    path = tmp_path / "bad"
    path.write_bytes(_idx_bytes(0x00000802, (2,), b"\x00\x01"))
    with pytest.raises(FormatError):
        read_idx(str(path), LABELS_MAGIC)


def test_read_idx_truncated_payload(tmp_path):
    path = tmp_path / "short"
    path.write_bytes(_idx_bytes(IMAGES_MAGIC, (4, 2, 2), b"\x00" * 10))
    with pytest.raises(TruncatedFileError):
        read_idx(str(path), IMAGES_MAGIC)


def test_read_idx_truncated_header(tmp_path):
    path = tmp_path / "header"
    path.write_bytes(struct.pack(">I", IMAGES_MAGIC) + b"\x00\x00")
    with pytest.raises(TruncatedFileError):
        read_idx(str(path), IMAGES_MAGIC)


def test_load_idx_count_mismatch(tmp_path):
    img_path, lab_path, _, _ = _write_pair(tmp_path, n=5, label_count=4)
    with pytest.raises(ConsistencyError):
        load_idx(img_path, lab_path)


def _blobs(n_per_class=50, classes=2, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(classes), n_per_class)
    return Dataset(rng.normal(size=(labels.shape[0], dim)), labels, classes, "blobs")


def test_stratified_split_sizes():
    train, valid = stratified_split(_blobs(), 0.15, seed=3)
    assert len(valid) == 15
    assert len(train) == 85
    counts = np.bincount(valid.labels, minlength=2)
    assert sorted(counts.tolist()) == [7, 8]


def test_stratified_split_deterministic_and_disjoint():
    ds = _blobs()
    t1, v1 = stratified_split(ds, 0.15, seed=9)
    t2, v2 = stratified_split(ds, 0.15, seed=9)
    assert np.array_equal(v1.images, v2.images)
    assert np.array_equal(t1.images, t2.images)
    rows = {tuple(r) for r in t1.images}
    assert not any(tuple(r) in rows for r in v1.images)
    assert len(t1) + len(v1) == len(ds)


def test_stratified_split_rejects_tiny_class():
    ds = Dataset(np.zeros((12, 2)), np.array([0] * 10 + [1] * 2), 2)
    with pytest.raises(ArgumentError):
        stratified_split(ds, 0.15)
    with pytest.raises(ArgumentError):
        stratified_split(_blobs(), 1.0)


def test_permutation_helpers(rng):
    images = rng.normal(size=(4, 6))
    perm = rng.permutation(6)
    inv = inverse_permutation(perm)
    assert np.array_equal(permute_images(permute_images(images, perm), inv), images)
    assert np.array_equal(permute_images(images, np.arange(6)), images)
    with pytest.raises(DimensionError):
        permute_images(images, np.arange(5))


def test_permuted_suite_identity_first_and_determinism():
    base, test = _blobs(dim=8), _blobs(n_per_class=10, dim=8, seed=1)
    suite = make_permuted_suite(base, test, 3, seed=5)
    assert len(suite) == 3
    assert np.array_equal(suite.tasks[0].test.images, test.images)
    assert not np.array_equal(suite.tasks[1].test.images, test.images)
    # every task shares the same train/valid split, only the pixel order differs
    assert np.array_equal(np.sort(suite.tasks[1].train.images, axis=1), np.sort(suite.tasks[0].train.images, axis=1))
    again = make_permuted_suite(base, test, 3, seed=5)
    assert np.array_equal(again.tasks[2].train.images, suite.tasks[2].train.images)
    other = make_permuted_suite(base, test, 3, seed=6)
    assert not np.array_equal(other.tasks[2].test.images, suite.tasks[2].test.images)


def test_permuted_suite_without_identity():
    base, test = _blobs(dim=8), _blobs(n_per_class=10, dim=8, seed=1)
    suite = make_permuted_suite(base, test, 1, seed=5, identity_first=False)
    assert not np.array_equal(suite.tasks[0].test.images, test.images)
    with pytest.raises(ArgumentError):
        make_permuted_suite(base, test, 0, seed=5)


def test_split_suite_relabels_groups():
    base, test = _blobs(n_per_class=20, classes=4), _blobs(n_per_class=5, classes=4, seed=2)
    suite = make_split_suite(base, test, [[2, 0], [1, 3]], seed=0)
    first = suite.tasks[0]
    assert first.classes == [2, 0]
    assert first.class_count == 2
    assert set(np.unique(first.test.labels)) == {0, 1}
    # local label 0 is source label 2
    src = test.images[test.labels == 2]
    assert np.array_equal(first.test.images[first.test.labels == 0], src)
    assert len(first.train) + len(first.valid) == 40


def test_split_suite_rejects_overlap_and_empty():
    base, test = _blobs(n_per_class=20, classes=4), _blobs(n_per_class=5, classes=4)
    with pytest.raises(ArgumentError):
        make_split_suite(base, test, [[0, 1], [1, 2]])
    with pytest.raises(ArgumentError):
        make_split_suite(base, test, [[0], []])


def test_split_suite_checks_labels_in_use(caplog):
    base, test = _blobs(n_per_class=20, classes=4), _blobs(n_per_class=5, classes=4)
    with pytest.raises(ArgumentError):
        make_split_suite(base, test, [[0, 1], [2, 7]])
    with caplog.at_level(logging.WARNING, logger="src.sources.tasks"):
        suite = make_split_suite(base, test, [[0, 1], [2]])
    assert "[3]" in caplog.text
    assert sum(len(t.train) + len(t.valid) for t in suite.tasks) == 60


def test_synthetic_suite_shapes_and_seed():
    suite = make_synthetic_suite(3, 4, 6, 3.0, seed=2, n_train_per_class=40, n_test_per_class=10)
    assert len(suite) == 3
    assert suite.class_counts == [4, 4, 4]
    assert suite.input_size == 6
    assert len(suite.tasks[0].test) == 40
    same = make_synthetic_suite(3, 4, 6, 3.0, seed=2, n_train_per_class=40, n_test_per_class=10)
    assert np.array_equal(same.tasks[1].train.images, suite.tasks[1].train.images)


def test_synthetic_suite_separation_bounds():
    flat = make_synthetic_suite(1, 2, 4, 0.0, seed=0, n_train_per_class=20, n_test_per_class=5)
    assert len(flat.tasks[0].train) + len(flat.tasks[0].valid) == 40
    with pytest.raises(ArgumentError):
        make_synthetic_suite(1, 2, 4, -1.0, seed=0)


def test_suite_prefix_and_manifest(tiny_suite):
    head = tiny_suite.prefix(1)
    assert len(head) == 1 and head.kind == "synthetic"
    manifest = tiny_suite.to_manifest()
    assert [t["name"] for t in manifest["tasks"]] == ["synthetic-0", "synthetic-1"]
    with pytest.raises(ArgumentError):
        TaskSuite([], 0, "rotated")


def test_dataset_validation():
    with pytest.raises(ConsistencyError):
        Dataset(np.zeros((3, 2)), np.zeros(2, dtype=int), 2)
    with pytest.raises(ArgumentError):
        Dataset(np.zeros((2, 2)), np.array([0, 5]), 2)


@pytest.fixture
def fake_mnist(monkeypatch):
    """Two small fake archives standing in for the real distribution."""
    payloads = {"a.gz": b"alpha", "b.gz": b"beta"}
    monkeypatch.setattr(mnist, "MNIST_FILES", {k: hashlib.md5(v).hexdigest() for k, v in payloads.items()})
    calls = []

    def _download(url, path):
        calls.append(url)
        with open(path, "wb") as f:
            f.write(payloads[os.path.basename(path)])

    monkeypatch.setattr(mnist, "download_file", _download)
    return payloads, calls


def test_fetch_mnist_downloads_then_skips(tmp_path, fake_mnist):
    _, calls = fake_mnist
    dest = str(tmp_path / "mnist")
    report = mnist.fetch_mnist(dest, base_url="http://mirror.invalid/")
    assert [r["status"] for r in report] == ["downloaded", "downloaded"]
    assert calls == ["http://mirror.invalid/a.gz", "http://mirror.invalid/b.gz"]
    report = mnist.fetch_mnist(dest, base_url="http://mirror.invalid/")
    assert [r["status"] for r in report] == ["present", "present"]
    assert len(calls) == 2


def test_fetch_mnist_quarantines_bad_download(tmp_path, monkeypatch, fake_mnist):
    def _corrupt(url, path):
        with open(path, "wb") as f:
            f.write(b"corrupt")

    monkeypatch.setattr(mnist, "download_file", _corrupt)
    dest = str(tmp_path / "mnist")
    with pytest.raises(IntegrityError):
        mnist.fetch_mnist(dest, base_url="http://mirror.invalid")
    assert os.path.exists(os.path.join(dest, "quarantine", "a.gz"))
    assert not os.path.exists(os.path.join(dest, "a.gz"))


@pytest.mark.slow
@pytest.mark.skipif(not mnist.mnist_available(), reason="MNIST files not present")
def test_mnist_sizes():
    train, test = mnist.load_mnist()
    assert train.images.shape == (mnist.MNIST_TRAIN_SIZE, 784)
    assert test.images.shape == (mnist.MNIST_TEST_SIZE, 784)
    assert train.class_count == 10
