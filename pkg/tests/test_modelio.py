import json
import struct

import numpy as np
import pytest

from hawk.errors import WeightFileError
from hawk.modelio import (
    MAGIC,
    decode_weights,
    encode_weights,
    load_model,
    load_sequence,
    save_model,
    save_sequence,
    tensor_names,
)
from hawk.model import VISUAL_FIRST, MultimodalSequence


def assert_same_weights(a, b):
    assert a.config == b.config
    for name in tensor_names(a.config):
        if name.startswith("layers."):
            _, i, t = name.split(".")
            x, y = getattr(a.layers[int(i)], t), getattr(b.layers[int(i)], t)
        else:
            x, y = getattr(a, name), getattr(b, name)
        np.testing.assert_array_equal(x, y)


def test_round_trip_bit_exact(small_model, tmp_path):
    save_model(small_model, tmp_path / "m.bin", {"note": "x"})
    loaded, meta = load_model(tmp_path / "m.bin")
    assert_same_weights(small_model, loaded)
    assert meta["note"] == "x" and meta["format"] == "HAWKWTS1"
    assert encode_weights(loaded) == (tmp_path / "m.bin").read_bytes()


def test_header_layout(small_model):
    data = encode_weights(small_model)
    assert data[:8] == MAGIC
    counts = struct.unpack_from("<7I", data, 8)
    c = small_model.config
    assert counts == (c.d_model, c.n_layers, c.n_heads, c.d_k, c.vocab_size, c.bytes_per_element, c.d_mlp)
    (base,) = struct.unpack_from("<d", data, 8 + 28)
    assert base == c.rope_base
    (n_tensors,) = struct.unpack_from("<I", data, 8 + 36)
    assert n_tensors == len(tensor_names(c)) == 2 + 8 * c.n_layers + 1
    (name_len,) = struct.unpack_from("<I", data, 8 + 40)
    assert data[52 : 52 + name_len] == b"embed"


def test_bad_magic(small_model):
    data = bytearray(encode_weights(small_model))
    data[0:8] = b"NOTHAWK!"
    with pytest.raises(WeightFileError, match="magic"):
        decode_weights(bytes(data))


def test_truncated(small_model):
    data = encode_weights(small_model)
    with pytest.raises(WeightFileError):
        decode_weights(data[:-8])
    with pytest.raises(WeightFileError):
        decode_weights(data + b"\0")


def test_sidecar_disagreement(small_model, tmp_path):
    save_model(small_model, tmp_path / "m.bin")
    side = json.loads((tmp_path / "m.json").read_text())
    side["vocab_size"] += 1
    (tmp_path / "m.json").write_text(json.dumps(side))
    with pytest.raises(WeightFileError, match="disagrees"):
        load_model(tmp_path / "m.bin")


def test_missing_file(tmp_path):
    with pytest.raises(WeightFileError):
        load_model(tmp_path / "nope.bin")


def test_sequence_round_trip(rng, tmp_path):
    seq = MultimodalSequence(rng.standard_normal((2, 4)), rng.standard_normal((5, 4)), VISUAL_FIRST)
    save_sequence(seq, tmp_path / "s.json")
    back = load_sequence(tmp_path / "s.json")
    assert back.order == VISUAL_FIRST
    np.testing.assert_array_equal(back.text_embeddings, seq.text_embeddings)
    np.testing.assert_array_equal(back.visual_embeddings, seq.visual_embeddings)
