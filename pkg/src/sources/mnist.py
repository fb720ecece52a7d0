from __future__ import annotations

import hashlib
import logging
import os
import shutil
from typing import Dict, List, Optional, Tuple

import requests

from src.utils.config import load_settings
from src.utils.errors import IntegrityError
from src.utils.storage import ensure_dir

from .idx import load_idx
from .tasks import Dataset

logger = logging.getLogger(__name__)

# MD5 digests of the official gzip distribution
MNIST_FILES: Dict[str, str] = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}

MNIST_TRAIN_SIZE = 60000
MNIST_TEST_SIZE = 10000


def md5sum(path: str) -> str:
    h = hashlib.md5()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def verify_file(path: str, expected_md5: str) -> bool:
    return os.path.exists(path) and md5sum(path) == expected_md5


def quarantine(path: str, dest: str) -> str:
    qdir = ensure_dir(os.path.join(dest, "quarantine"))
    target = os.path.join(qdir, os.path.basename(path))
    shutil.move(path, target)
    return target


def download_file(url: str, path: str) -> None:
    tmp = path + ".part"
    with requests.get(url, stream=True, timeout=60) as resp:
        resp.raise_for_status()
        with open(tmp, "wb") as f:
            for chunk in resp.iter_content(chunk_size=1 << 16):
                f.write(chunk)
    os.replace(tmp, path)


def fetch_mnist(dest: Optional[str] = None, base_url: Optional[str] = None) -> List[Dict[str, str]]:
    """Download the four MNIST files into ``dest`` and verify their checksums.

    Files already present with the right checksum are left alone. A file that
    fails verification is moved to ``dest/quarantine`` and IntegrityError is raised.
    """
    settings = load_settings()
    dest = ensure_dir(dest or settings.data_dir)
    base_url = base_url or settings.mnist_base_url
    report = []
    for filename, expected in MNIST_FILES.items():
        path = os.path.join(dest, filename)
        if verify_file(path, expected):
            report.append({"file": filename, "md5": expected, "status": "present"})
            continue
        if os.path.exists(path):
            quarantine(path, dest)
        logger.info("downloading %s", filename)
        download_file(base_url.rstrip("/") + "/" + filename, path)
        actual = md5sum(path)
        if actual != expected:
            moved = quarantine(path, dest)
            raise IntegrityError(f"{filename}: md5 {actual} != {expected}; moved to {moved}")
        report.append({"file": filename, "md5": actual, "status": "downloaded"})
    return report


def _locate(data_dir: str, filename: str) -> str:
    gz = os.path.join(data_dir, filename)
    raw = gz[: -len(".gz")]
    return gz if os.path.exists(gz) or not os.path.exists(raw) else raw


def mnist_available(data_dir: Optional[str] = None) -> bool:
    data_dir = data_dir or load_settings().data_dir
    return all(os.path.exists(_locate(data_dir, f)) for f in MNIST_FILES)


def load_mnist(data_dir: Optional[str] = None) -> Tuple[Dataset, Dataset]:
    """Load (train, test) from user-supplied IDX files, gzip or raw."""
    data_dir = data_dir or load_settings().data_dir
    train = load_idx(
        _locate(data_dir, "train-images-idx3-ubyte.gz"),
        _locate(data_dir, "train-labels-idx1-ubyte.gz"),
        name="mnist-train",
    )
    test = load_idx(
        _locate(data_dir, "t10k-images-idx3-ubyte.gz"),
        _locate(data_dir, "t10k-labels-idx1-ubyte.gz"),
        name="mnist-test",
    )
    test.class_count = train.class_count
    return train, test
