"""
IDX binary reader (the MNIST distribution format).

    [0..3]   magic: 0x00 0x00 <dtype> <ndim>   (0x08 = unsigned byte)
    [4..]    ndim big-endian uint32 dimension sizes
    [...]    payload, row-major

Images use magic 0x00000803 (3 dims), labels 0x00000801 (1 dim). Files ending
in ``.gz`` are decompressed transparently.
"""
from __future__ import annotations

import gzip
import logging
import struct

import numpy as np

from src.utils.errors import ConsistencyError, FormatError, TruncatedFileError

from .tasks import Dataset

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_bytes(path: str) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def read_idx(path: str, expected_magic: int) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise TruncatedFileError(f"{path}: header declares {ndim} dimensions but the file ends early")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    count = int(np.prod(dims))
    if len(raw) < header_len + count:
        raise TruncatedFileError(f"{path}: expected {count} payload bytes, found {len(raw) - header_len}")
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=header_len)
    return data.reshape(dims)


def load_idx(images_path: str, labels_path: str, name: str = "mnist") -> Dataset:
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} holds {labels.shape[0]} labels"
        )
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    class_count = int(labels.max()) + 1 if labels.size else 0
    logger.info("loaded %s: %d samples, %d features", name, flat.shape[0], flat.shape[1])
    return Dataset(images=flat, labels=labels, class_count=class_count, name=name)
