"""Toy multimodal decoder.

Pre-norm blocks (RMSNorm -> multi-head attention with rotary embeddings ->
residual -> RMSNorm -> ReLU MLP -> residual), a final norm and a linear
readout. Text and visual embeddings are supplied directly and concatenated
in the order recorded on the sequence; generated tokens are embedded through
the token table.

Per-head visual masking sets the attention logits from every query to every
visual key to -inf for the masked (layer, head) pairs before the softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Matrix, as_matrix, softmax_rows

TEXT_FIRST = "text-first"
VISUAL_FIRST = "visual-first"
ORDERS = (TEXT_FIRST, VISUAL_FIRST)

NORM_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    d_model: int
    n_layers: int
    n_heads: int
    d_k: int
    vocab_size: int
    rope_base: float = 10000.0
    bytes_per_element: int = 4
    d_mlp: int = 0  # 0 means 2 * d_model

    def __post_init__(self):
        for name in ("d_model", "n_layers", "n_heads", "d_k", "vocab_size", "bytes_per_element"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model != self.n_heads * self.d_k:
            raise ConfigError(
                f"d_model ({self.d_model}) must equal n_heads*d_k ({self.n_heads}*{self.d_k})"
            )
        if self.d_mlp < 0:
            raise ConfigError("d_mlp must be >= 0")
        if self.d_mlp == 0:
            object.__setattr__(self, "d_mlp", 2 * self.d_model)
        if not self.rope_base > 0:
            raise ConfigError("rope_base must be positive")

    def to_dict(self) -> dict:
        return {
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_k": self.d_k,
            "vocab_size": self.vocab_size,
            "rope_base": float(self.rope_base),
            "bytes_per_element": self.bytes_per_element,
            "d_mlp": self.d_mlp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        missing = {"d_model", "n_layers", "n_heads", "d_k", "vocab_size"} - set(known)
        if missing:
            raise ConfigError(f"model config missing fields: {sorted(missing)}")
        return cls(**known)


@dataclass
class LayerWeights:
    attn_norm: np.ndarray  # (d,)
    w_q: Matrix  # (d, d); head i owns columns i*d_k:(i+1)*d_k
    w_k: Matrix
    w_v: Matrix
    w_o: Matrix  # (d, d); head i owns rows i*d_k:(i+1)*d_k
    mlp_norm: np.ndarray
    w_up: Matrix  # (d, d_mlp)
    w_down: Matrix  # (d_mlp, d)


@dataclass
class ModelWeights:
    config: ModelConfig
    embed: Matrix  # (vocab, d)
    layers: list[LayerWeights]
    final_norm: np.ndarray
    readout: Matrix  # (d, vocab)

    def __post_init__(self):
        self.validate()

    def validate(self):
        c = self.config
        d = c.d_model
        expect = {
            "embed": (self.embed, (c.vocab_size, d)),
            "final_norm": (self.final_norm, (d,)),
            "readout": (self.readout, (d, c.vocab_size)),
        }
        if len(self.layers) != c.n_layers:
            raise ShapeError(f"expected {c.n_layers} layers, got {len(self.layers)}")
        for i, lw in enumerate(self.layers):
            expect.update(
                {
                    f"layers.{i}.attn_norm": (lw.attn_norm, (d,)),
                    f"layers.{i}.w_q": (lw.w_q, (d, d)),
                    f"layers.{i}.w_k": (lw.w_k, (d, d)),
                    f"layers.{i}.w_v": (lw.w_v, (d, d)),
                    f"layers.{i}.w_o": (lw.w_o, (d, d)),
                    f"layers.{i}.mlp_norm": (lw.mlp_norm, (d,)),
                    f"layers.{i}.w_up": (lw.w_up, (d, c.d_mlp)),
                    f"layers.{i}.w_down": (lw.w_down, (c.d_mlp, d)),
                }
            )
        for name, (arr, shape) in expect.items():
            if np.shape(arr) != shape:
                raise ShapeError(f"{name} has shape {np.shape(arr)}, expected {shape}")

    def head_slice(self, head: int) -> slice:
        if not 0 <= head < self.config.n_heads:
            raise ConfigError(f"head {head} out of range for {self.config.n_heads} heads")
        dk = self.config.d_k
        return slice(head * dk, (head + 1) * dk)

    def head_wq(self, layer: int, head: int) -> Matrix:
        return self.layers[layer].w_q[:, self.head_slice(head)]

    def head_wk(self, layer: int, head: int) -> Matrix:
        return self.layers[layer].w_k[:, self.head_slice(head)]

    def head_wv(self, layer: int, head: int) -> Matrix:
        return self.layers[layer].w_v[:, self.head_slice(head)]

    def copy(self) -> "ModelWeights":
        layers = [LayerWeights(**{k: np.array(v) for k, v in vars(lw).items()}) for lw in self.layers]
        return ModelWeights(
            self.config, self.embed.copy(), layers, self.final_norm.copy(), self.readout.copy()
        )


def init_random_weights(config: ModelConfig, rng: np.random.Generator) -> ModelWeights:
    """Gaussian weights with 1/sqrt(fan_in) scale and unit norm gains."""
    d, f, v = config.d_model, config.d_mlp, config.vocab_size

    def gauss(rows, cols):
        return rng.standard_normal((rows, cols)) / math.sqrt(rows)

    embed = rng.standard_normal((v, d))
    layers = []
    for _ in range(config.n_layers):
        layers.append(
            LayerWeights(
                attn_norm=np.ones(d),
                w_q=gauss(d, d),
                w_k=gauss(d, d),
                w_v=gauss(d, d),
                w_o=gauss(d, d),
                mlp_norm=np.ones(d),
                w_up=gauss(d, f),
                w_down=gauss(f, d),
            )
        )
    return ModelWeights(config, embed, layers, np.ones(d), gauss(d, v))


@dataclass(frozen=True)
class MultimodalSequence:
    text_embeddings: Matrix  # (N, d)
    visual_embeddings: Matrix  # (M, d)
    order: str = TEXT_FIRST

    def __post_init__(self):
        t = as_matrix(self.text_embeddings, name="text_embeddings")
        v = as_matrix(self.visual_embeddings, name="visual_embeddings")
        if t.shape[0] < 1 or v.shape[0] < 1:
            raise ShapeError(f"need N>=1 and M>=1, got N={t.shape[0]} M={v.shape[0]}")
        if t.shape[1] != v.shape[1]:
            raise ShapeError(f"text width {t.shape[1]} != visual width {v.shape[1]}")
        if self.order not in ORDERS:
            raise ConfigError(f"order must be one of {ORDERS}, got {self.order!r}")
        object.__setattr__(self, "text_embeddings", t)
        object.__setattr__(self, "visual_embeddings", v)

    @property
    def n_text(self) -> int:
        return self.text_embeddings.shape[0]

    @property
    def n_visual(self) -> int:
        return self.visual_embeddings.shape[0]

    @property
    def length(self) -> int:
        return self.n_text + self.n_visual

    @property
    def boundary(self) -> int:
        """Index of the first position of the second block."""
        return self.n_text if self.order == TEXT_FIRST else self.n_visual

    def embeddings(self) -> Matrix:
        if self.order == TEXT_FIRST:
            return np.vstack([self.text_embeddings, self.visual_embeddings])
        return np.vstack([self.visual_embeddings, self.text_embeddings])

    def visual_flags(self) -> np.ndarray:
        flags = np.zeros(self.length, dtype=bool)
        if self.order == TEXT_FIRST:
            flags[self.n_text :] = True
        else:
            flags[: self.n_visual] = True
        return flags

    def with_visual(self, visual: Matrix) -> "MultimodalSequence":
        return replace(self, visual_embeddings=visual)


@dataclass(frozen=True)
class HeadVisualMask:
    """Blocks one head's access to visual keys on the given layers."""

    layers: frozenset
    head: int
    active: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layers", frozenset(int(i) for i in self.layers))

    @classmethod
    def first_layer(cls, head: int) -> "HeadVisualMask":
        return cls(frozenset({0}), head)

    @classmethod
    def all_layers(cls, head: int, n_layers: int) -> "HeadVisualMask":
        return cls(frozenset(range(n_layers)), head)


def resolve_masks(masks: Iterable[HeadVisualMask], config: ModelConfig) -> dict[int, frozenset]:
    """Map layer -> heads whose visual access is disabled."""
    out: dict[int, set] = {}
    for m in masks:
        if not 0 <= m.head < config.n_heads:
            raise ConfigError(f"mask head {m.head} out of range for {config.n_heads} heads")
        for layer in m.layers:
            if not 0 <= layer < config.n_layers:
                raise ConfigError(f"mask layer {layer} out of range for {config.n_layers} layers")
        if not m.active:
            continue
        for layer in m.layers:
            out.setdefault(layer, set()).add(m.head)
    return {k: frozenset(v) for k, v in out.items()}


@dataclass
class GenerationOutput:
    tokens: list[int]
    distributions: np.ndarray  # (O, vocab)

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise ShapeError("generation output needs at least one step")


def rms_norm(x: Matrix, gain: np.ndarray) -> Matrix:
    return x / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + NORM_EPS) * gain


def rope_angles(positions: Sequence[int], width: int, base: float) -> np.ndarray:
    pos = np.asarray(positions, dtype=np.float64)
    freqs = base ** (-np.arange(0, width, 2, dtype=np.float64) / width)
    return np.outer(pos, freqs)


def apply_rope(x: Matrix, positions: Sequence[int], base: float = 10000.0) -> Matrix:
    """Rotate each interleaved pair (2i, 2i+1) of every row by pos * base**(-2i/width).

    ``x`` may be (L, width) or (L, heads, width); the same angles apply to
    every head.
    """
    x = np.asarray(x, dtype=np.float64)
    width = x.shape[-1]
    if width % 2:
        raise ShapeError(f"rotary width must be even, got {width}")
    if len(positions) != x.shape[0]:
        raise ShapeError(f"{len(positions)} positions for {x.shape[0]} rows")
    ang = rope_angles(positions, width, base)
    if x.ndim == 3:
        ang = ang[:, None, :]
    cos, sin = np.cos(ang), np.sin(ang)
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


class KVCache:
    """Per-layer rotated keys and values plus a visual flag per cached position.

    Single-owner mutable state; one instance per decode session.
    """

    def __init__(self, config: ModelConfig, capacity: int):
        self.config = config
        self.capacity = capacity
        shape = (capacity, config.n_heads, config.d_k)
        self.keys = [np.zeros(shape) for _ in range(config.n_layers)]
        self.values = [np.zeros(shape) for _ in range(config.n_layers)]
        self.visual = np.zeros(capacity, dtype=bool)
        self.length = 0

    def write(self, layer: int, start: int, k: np.ndarray, v: np.ndarray):
        end = start + k.shape[0]
        if end > self.capacity:
            raise ShapeError(f"KV cache overflow: {end} > capacity {self.capacity}")
        self.keys[layer][start:end] = k
        self.values[layer][start:end] = v

    def nbytes(self) -> int:
        return kv_cache_bytes(self.config, self.length)


def kv_cache_bytes(config: ModelConfig, seq_len: int) -> int:
    if seq_len < 0:
        raise ShapeError(f"seq_len must be >= 0, got {seq_len}")
    return 2 * config.n_layers * config.n_heads * config.d_k * seq_len * config.bytes_per_element


def attention_forward(
    x: Matrix,
    weights: ModelWeights,
    layer: int,
    visual_flags: np.ndarray,
    masked_heads: Iterable[int] = (),
    *,
    start: int = 0,
    cache: Optional[KVCache] = None,
) -> Matrix:
    """Causal multi-head attention for the rows of ``x`` at positions start..start+L-1.

    ``x`` is the normed block input. With a cache, keys/values for the new
    rows are written at ``start`` and the queries attend to every cached
    position up to their own. ``visual_flags`` covers all key positions
    (length start+L). Queries with no admissible key produce zeros.
    """
    c = weights.config
    lw = weights.layers[layer]
    n_new = x.shape[0]
    total = start + n_new
    flags = np.asarray(visual_flags, dtype=bool)
    if flags.shape[0] < total:
        raise ShapeError(f"visual flags cover {flags.shape[0]} positions, need {total}")
    masked = frozenset(masked_heads)
    for h in masked:
        if not 0 <= h < c.n_heads:
            raise ConfigError(f"mask head {h} out of range for {c.n_heads} heads")

    positions = np.arange(start, total)
    q = apply_rope((x @ lw.w_q).reshape(n_new, c.n_heads, c.d_k), positions, c.rope_base)
    k = apply_rope((x @ lw.w_k).reshape(n_new, c.n_heads, c.d_k), positions, c.rope_base)
    v = (x @ lw.w_v).reshape(n_new, c.n_heads, c.d_k)
    if cache is not None:
        cache.write(layer, start, k, v)
        k_all = cache.keys[layer][:total]
        v_all = cache.values[layer][:total]
    else:
        if start:
            raise ShapeError("start > 0 requires a cache holding the earlier positions")
        k_all, v_all = k, v

    causal = positions[:, None] >= np.arange(total)[None, :]
    text_only = causal & ~flags[None, :total]
    scale = 1.0 / math.sqrt(c.d_k)
    out = np.empty((n_new, c.n_heads, c.d_k))
    for h in range(c.n_heads):
        logits = (q[:, h, :] @ k_all[:, h, :].T) * scale
        keep = text_only if h in masked else causal
        probs = softmax_rows(logits, keep, allow_empty=True)
        out[:, h, :] = probs @ v_all[:, h, :]
    return out.reshape(n_new, c.d_model) @ lw.w_o


def block_forward(
    x: Matrix,
    weights: ModelWeights,
    layer: int,
    visual_flags: np.ndarray,
    masked_heads: Iterable[int] = (),
    *,
    start: int = 0,
    cache: Optional[KVCache] = None,
) -> Matrix:
    lw = weights.layers[layer]
    h = x + attention_forward(
        rms_norm(x, lw.attn_norm), weights, layer, visual_flags, masked_heads, start=start, cache=cache
    )
    mlp = np.maximum(rms_norm(h, lw.mlp_norm) @ lw.w_up, 0.0) @ lw.w_down
    return h + mlp


def forward(
    weights: ModelWeights,
    x: Matrix,
    visual_flags: np.ndarray,
    masks: Iterable[HeadVisualMask] = (),
    *,
    start: int = 0,
    cache: Optional[KVCache] = None,
) -> Matrix:
    """Final-layer hidden states (before the final norm) for the rows of ``x``."""
    per_layer = resolve_masks(masks, weights.config)
    h = np.asarray(x, dtype=np.float64)
    for layer in range(weights.config.n_layers):
        h = block_forward(
            h, weights, layer, visual_flags, per_layer.get(layer, ()), start=start, cache=cache
        )
    return h


def logits_from_hidden(weights: ModelWeights, h: Matrix) -> np.ndarray:
    return rms_norm(h, weights.final_norm) @ weights.readout


def _softmax_vec(z: np.ndarray) -> np.ndarray:
    return softmax_rows(z[None, :])[0]


def decode_greedy(
    weights: ModelWeights,
    seq: MultimodalSequence,
    max_steps: int,
    masks: Iterable[HeadVisualMask] = (),
    *,
    use_cache: bool = True,
) -> GenerationOutput:
    """Argmax decoding; the first token is predicted from the last prompt position."""
    if max_steps < 1:
        raise ShapeError(f"max_steps must be >= 1, got {max_steps}")
    c = weights.config
    masks = tuple(masks)
    resolve_masks(masks, c)
    prompt = seq.embeddings()
    if prompt.shape[1] != c.d_model:
        raise ShapeError(f"sequence width {prompt.shape[1]} != d_model {c.d_model}")
    L = prompt.shape[0]
    flags = np.concatenate([seq.visual_flags(), np.zeros(max_steps, dtype=bool)])

    tokens: list[int] = []
    dists = []
    if use_cache:
        cache = KVCache(c, L + max_steps)
        cache.visual[: L + max_steps] = flags
        h = forward(weights, prompt, flags, masks, cache=cache)[-1:]
        cache.length = L
        for step in range(max_steps):
            p = _softmax_vec(logits_from_hidden(weights, h)[0])
            tok = int(np.argmax(p))
            tokens.append(tok)
            dists.append(p)
            if step + 1 == max_steps:
                break
            h = forward(weights, weights.embed[tok][None, :], flags, masks, start=cache.length, cache=cache)
            cache.length += 1
    else:
        rows = prompt
        for step in range(max_steps):
            h = forward(weights, rows, flags, masks)[-1:]
            p = _softmax_vec(logits_from_hidden(weights, h)[0])
            tok = int(np.argmax(p))
            tokens.append(tok)
            dists.append(p)
            rows = np.vstack([rows, weights.embed[tok][None, :]])
    return GenerationOutput(tokens, np.vstack(dists))
