from __future__ import annotations

import numpy as np
import pytest

from src.hat.state import HatState
from src.hat.types import HatConfig
from src.nn.network import Network
from src.utils.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from src.utils.errors import FormatError, TruncatedFileError


@pytest.fixture
def model():
    rng = np.random.default_rng(8)
    net = Network.build(5, [4, 3], [2, 3], rng, hidden_dropout=0.2)
    hat = HatState(HatConfig(c=0.4, input_attention=True), net.layer_sizes, net.input_size)
    hat.init_task(0, rng)
    hat.finish_task(0)
    hat.init_task(1, rng)
    return net, hat


def test_round_trip_restores_network_and_attention(tmp_path, model):
    net, hat = model
    path = save_checkpoint(str(tmp_path / "ckpt" / "task_1.ckpt"), net, hat, {"seed": 3})
    ckpt = load_checkpoint(path)

    x = np.random.default_rng(0).normal(size=(6, 5))
    for task in (0, 1):
        att = hat.attention(task)
        restored = ckpt.hat.attention(task)
        assert np.array_equal(
            ckpt.network.predict(x, task, restored.layers, restored.input),
            net.predict(x, task, att.layers, att.input),
        )
    assert ckpt.network.body[1].dropout_rate == 0.2
    assert ckpt.hat.config == hat.config
    assert ckpt.hat.task_order == [0]
    assert sorted(ckpt.hat.embeddings) == [0, 1]
    assert [c.tasks for c in ckpt.hat.history] == [0, 1]
    assert np.array_equal(ckpt.hat.cumulative.input, hat.cumulative.input)
    assert ckpt.extra == {"seed": 3}


def test_network_without_attention(tmp_path, model):
    net, _ = model
    ckpt = load_checkpoint(save_checkpoint(str(tmp_path / "plain.ckpt"), net))
    assert ckpt.hat is None
    assert ckpt.network.class_counts == [2, 3]


def test_encoding_is_deterministic(model):
    net, hat = model
    assert encode_checkpoint(net, hat, {"a": 1, "b": 2}) == encode_checkpoint(net, hat, {"b": 2, "a": 1})


def test_bad_magic(model):
    data = encode_checkpoint(*model)
    with pytest.raises(FormatError):
        decode_checkpoint(b"NOTCKPT\0" + data[len(MAGIC) :])


def test_unsupported_version(model):
    data = bytearray(encode_checkpoint(*model))
    data[len(MAGIC)] = 9
    with pytest.raises(FormatError):
        decode_checkpoint(bytes(data))


def test_truncated_file(tmp_path, model):
    data = encode_checkpoint(*model)
    path = tmp_path / "short.ckpt"
    path.write_bytes(data[:-5])
    with pytest.raises(TruncatedFileError):
        load_checkpoint(str(path))


def test_trailing_bytes(model):
    with pytest.raises(FormatError):
        decode_checkpoint(encode_checkpoint(*model) + b"\x00")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(str(tmp_path / "nope.ckpt"))
