"""
Binary checkpoint container for a Network and its task-attention state.

Layout (all integers little-endian, see docs/CHECKPOINT_FORMAT.md):

    magic     8 bytes  b"HATCKPT\\0"
    version   u32
    manifest  u32 length + UTF-8 JSON (sorted keys)
    count     u32 number of tensor records
    records   u16 name length, name, u8 ndim, ndim x u64 dims, float64 payload

Writes are atomic and byte-for-byte deterministic for equal inputs.
"""
from __future__ import annotations

import io
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Any, BinaryIO, Dict, List, Optional, Tuple

import numpy as np

from src.hat.state import HatState
from src.hat.types import AttentionSet, CumulativeAttention, HatConfig, TaskEmbeddings
from src.nn.layers import DenseLayer
from src.nn.network import Network

from .errors import FormatError, TruncatedFileError
from .storage import ensure_dir

logger = logging.getLogger(__name__)

MAGIC = b"HATCKPT\0"
VERSION = 1


@dataclass
class Checkpoint:
    network: Network
    hat: Optional[HatState] = None
    extra: Dict[str, Any] = field(default_factory=dict)


def _hat_tensors(hat: HatState) -> List[Tuple[str, np.ndarray]]:
    out: List[Tuple[str, np.ndarray]] = []

    def _add(prefix: str, layers: List[np.ndarray], inp: Optional[np.ndarray]) -> None:
        if inp is not None:
            out.append((f"{prefix}.input", inp))
        for l, v in enumerate(layers):
            out.append((f"{prefix}.{l}", v))

    for task in sorted(hat.embeddings):
        emb = hat.embeddings[task]
        _add(f"hat.emb.{task}", emb.layers, emb.input)
    for task in sorted(hat.snapshots):
        snap = hat.snapshots[task]
        _add(f"hat.snap.{task}", snap.layers, snap.input)
    for k, cum in enumerate(hat.history):
        _add(f"hat.cum.{k}", cum.layers, cum.input)
    return out


def _manifest(net: Network, hat: Optional[HatState], extra: Dict[str, Any]) -> Dict[str, Any]:
    manifest: Dict[str, Any] = {
        "input_size": net.input_size,
        "layer_sizes": net.layer_sizes,
        "class_counts": net.class_counts,
        "task_count": len(net.heads),
        "body_dropout": [layer.dropout_rate for layer in net.body],
        "head_dropout": [head.dropout_rate for head in net.heads],
        "hat": None,
        "extra": extra,
    }
    if hat is not None:
        manifest["hat"] = {
            "config": hat.config.to_dict(),
            "task_order": list(hat.task_order),
            "embedded_tasks": sorted(hat.embeddings),
            "snapshot_scales": {str(t): float(hat.snapshots[t].s) for t in sorted(hat.snapshots)},
            "history": [cum.tasks for cum in hat.history],
        }
    return manifest


def _write_tensor(buf: BinaryIO, name: str, arr: np.ndarray) -> None:
    raw = name.encode("utf-8")
    arr = np.ascontiguousarray(arr, dtype="<f8")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    buf.write(struct.pack("<B", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    buf.write(arr.tobytes())


def encode_checkpoint(net: Network, hat: Optional[HatState] = None, extra: Optional[Dict[str, Any]] = None) -> bytes:
    tensors: List[Tuple[str, np.ndarray]] = []
    for l, layer in enumerate(net.body):
        tensors += [(f"body.{l}.weight", layer.weight), (f"body.{l}.bias", layer.bias)]
    for k, head in enumerate(net.heads):
        tensors += [(f"head.{k}.weight", head.weight), (f"head.{k}.bias", head.bias)]
    if hat is not None:
        tensors += _hat_tensors(hat)

    manifest = json.dumps(_manifest(net, hat, extra or {}), sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<I", len(manifest)))
    buf.write(manifest)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        _write_tensor(buf, name, arr)
    return buf.getvalue()


def save_checkpoint(
    path: str, net: Network, hat: Optional[HatState] = None, extra: Optional[Dict[str, Any]] = None
) -> str:
    data = encode_checkpoint(net, hat, extra)
    ensure_dir(os.path.dirname(path) or ".")
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
    logger.debug("checkpoint written to %s (%d bytes)", path, len(data))
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"checkpoint truncated while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (m_len,) = r.unpack("<I", "manifest length")
    try:
        manifest = json.loads(r.take(m_len, "manifest").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"checkpoint manifest is not valid JSON: {exc}") from exc
    (count,) = r.unpack("<I", "tensor count")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (n_len,) = r.unpack("<H", "tensor name length")
        name = r.take(n_len, "tensor name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"rank of {name}")
        shape = r.unpack(f"<{ndim}Q", f"shape of {name}") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        payload = r.take(8 * size, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after the last tensor")
    return manifest, tensors


def _vectors(tensors: Dict[str, np.ndarray], prefix: str, n_layers: int) -> Tuple[List[np.ndarray], Optional[np.ndarray]]:
    try:
        layers = [tensors[f"{prefix}.{l}"] for l in range(n_layers)]
    except KeyError as exc:
        raise FormatError(f"checkpoint misses tensor {exc}") from exc
    return layers, tensors.get(f"{prefix}.input")


def _restore_hat(meta: Dict[str, Any], tensors: Dict[str, np.ndarray], layer_sizes: List[int], input_size: int) -> HatState:
    hat = HatState(HatConfig(**meta["config"]), layer_sizes, input_size)
    n = len(layer_sizes)
    for task in meta["embedded_tasks"]:
        layers, inp = _vectors(tensors, f"hat.emb.{task}", n)
        hat.embeddings[int(task)] = TaskEmbeddings(layers, inp)
    for task, s in meta["snapshot_scales"].items():
        layers, inp = _vectors(tensors, f"hat.snap.{task}", n)
        hat.snapshots[int(task)] = AttentionSet(layers, s, inp)
    hat.history = []
    for k, tasks in enumerate(meta["history"]):
        layers, inp = _vectors(tensors, f"hat.cum.{k}", n)
        hat.history.append(CumulativeAttention(layers, inp, tasks))
    hat.task_order = [int(t) for t in meta["task_order"]]
    return hat


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as f:
        manifest, tensors = decode_checkpoint(f.read())

    try:
        body = [
            DenseLayer(tensors[f"body.{l}.weight"], tensors[f"body.{l}.bias"], rate)
            for l, rate in enumerate(manifest["body_dropout"])
        ]
        heads = [
            DenseLayer(tensors[f"head.{k}.weight"], tensors[f"head.{k}.bias"], rate)
            for k, rate in enumerate(manifest["head_dropout"])
        ]
    except KeyError as exc:
        raise FormatError(f"checkpoint misses {exc}") from exc
    net = Network(manifest["input_size"], body, heads)
    hat = None
    if manifest.get("hat") is not None:
        hat = _restore_hat(manifest["hat"], tensors, net.layer_sizes, net.input_size)
    return Checkpoint(network=net, hat=hat, extra=manifest.get("extra", {}))
