"""Binary weight container and JSON config sidecar.

Layout (all little-endian)::

    b"HAWKWTS1"
    u32 d_model, n_layers, n_heads, d_k, vocab_size, bytes_per_element, d_mlp
    f64 rope_base
    u32 n_tensors
    n_tensors x { u32 name_len, utf-8 name, u32 ndim, u32 dims[ndim], f64 data[prod(dims)] }

Tensors appear in the order given by ``tensor_names``. The sidecar
``<stem>.json`` holds the same config fields, plus optional metadata such as
the copy-task construction.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import WeightFileError
from .model import LayerWeights, ModelConfig, ModelWeights, MultimodalSequence

MAGIC = b"HAWKWTS1"
_HEADER = struct.Struct("<7Id")
_COUNT_FIELDS = ("d_model", "n_layers", "n_heads", "d_k", "vocab_size", "bytes_per_element", "d_mlp")
_LAYER_TENSORS = ("attn_norm", "w_q", "w_k", "w_v", "w_o", "mlp_norm", "w_up", "w_down")


def tensor_names(config: ModelConfig) -> list[str]:
    names = ["embed"]
    for i in range(config.n_layers):
        names += [f"layers.{i}.{t}" for t in _LAYER_TENSORS]
    return names + ["final_norm", "readout"]


def _get(weights: ModelWeights, name: str) -> np.ndarray:
    if name.startswith("layers."):
        _, i, t = name.split(".")
        return getattr(weights.layers[int(i)], t)
    return getattr(weights, name)


def atomic_write_bytes(path: Path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def encode_weights(weights: ModelWeights) -> bytes:
    c = weights.config
    parts = [MAGIC, _HEADER.pack(*(getattr(c, f) for f in _COUNT_FIELDS), float(c.rope_base))]
    names = tensor_names(c)
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(_get(weights, name), dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def decode_weights(data: bytes) -> ModelWeights:
    if data[:8] != MAGIC:
        raise WeightFileError(f"bad magic {data[:8]!r}, expected {MAGIC!r}")
    off = 8
    try:
        vals = _HEADER.unpack_from(data, off)
        off += _HEADER.size
        config = ModelConfig(**dict(zip(_COUNT_FIELDS, vals[:-1])), rope_base=vals[-1])
        (n_tensors,) = struct.unpack_from("<I", data, off)
        off += 4
        tensors = {}
        for _ in range(n_tensors):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            name = data[off : off + n].decode("utf-8")
            off += n
            (ndim,) = struct.unpack_from("<I", data, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            if off + 8 * count > len(data):
                raise WeightFileError(f"tensor {name!r} truncated")
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
            off += 8 * count
            tensors[name] = arr.astype(np.float64)
    except struct.error as exc:
        raise WeightFileError(f"truncated weight file: {exc}") from exc
    if off != len(data):
        raise WeightFileError(f"{len(data) - off} trailing bytes after last tensor")

    expected = tensor_names(config)
    if list(tensors) != expected:
        raise WeightFileError(f"tensor names/order mismatch: got {list(tensors)[:4]}...")
    layers = [
        LayerWeights(**{t: tensors[f"layers.{i}.{t}"] for t in _LAYER_TENSORS})
        for i in range(config.n_layers)
    ]
    return ModelWeights(config, tensors["embed"], layers, tensors["final_norm"], tensors["readout"])


def save_model(weights: ModelWeights, path, metadata: Optional[dict] = None):
    """Write ``path`` (binary) and its ``.json`` sidecar."""
    path = Path(path)
    atomic_write_bytes(path, encode_weights(weights))
    side = weights.config.to_dict()
    side["format"] = MAGIC.decode()
    if metadata:
        side.update(metadata)
    atomic_write_text(sidecar_path(path), dumps_json(side))


def load_model(path) -> tuple[ModelWeights, dict]:
    """Load weights and sidecar; the two configs must agree."""
    path = Path(path)
    try:
        weights = decode_weights(path.read_bytes())
    except OSError as exc:
        raise WeightFileError(f"cannot read weight file {path}: {exc}") from exc
    side_path = sidecar_path(path)
    meta: dict = {}
    if side_path.exists():
        meta = json.loads(side_path.read_text(encoding="utf-8"))
        side_cfg = ModelConfig.from_dict(meta)
        if side_cfg != weights.config:
            raise WeightFileError(f"config sidecar {side_path} disagrees with weight file header")
    return weights, meta


def sequence_to_dict(seq) -> dict:
    return {
        "order": seq.order,
        "text_embeddings": seq.text_embeddings.tolist(),
        "visual_embeddings": seq.visual_embeddings.tolist(),
    }


def sequence_from_dict(d: dict) -> MultimodalSequence:
    return MultimodalSequence(
        np.array(d["text_embeddings"], dtype=np.float64),
        np.array(d["visual_embeddings"], dtype=np.float64),
        d.get("order", "text-first"),
    )


def save_sequence(seq, path):
    atomic_write_text(Path(path), dumps_json(sequence_to_dict(seq)))


def load_sequence(path):
    return sequence_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
