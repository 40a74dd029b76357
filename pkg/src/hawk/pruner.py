"""Head-importance-aware visual token pruning.

Pipeline:

1. ``compute_head_weights`` turns an ablation table (baseline score and
   per-head ablated score for each dataset) into one weight per head: the
   per-dataset score drops are shifted so the smallest is zero, L1
   normalized, then averaged over datasets.
2. ``text_guided_scores`` projects text rows to queries and visual rows to
   keys with each head's first-layer projections, takes raw scaled dot
   products (no rotary rotation, no softmax) and averages over text rows,
   giving one relevance row per head.
3. ``aggregate_importance`` weights those rows by the head weights.
4. ``select_tokens`` keeps the top-k visual tokens in their original order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BoundError, ConfigError, ConsistencyError, EmptyTableError, ShapeError, WeightFileError
from .model import TEXT_FIRST, ModelWeights, MultimodalSequence, apply_rope
from .modelio import atomic_write_text, dumps_json
from .tensor import softmax_rows, top_k_indices

HEAD_WEIGHTS_VERSION = 1

MODES = ("hawk", "mean-head", "random", "diversity")
BASELINE_MODES = ("mean-head", "random", "diversity")


@dataclass
class AblationTable:
    datasets: list[str]
    base: np.ndarray  # (N_d,) unablated score per dataset
    scores: np.ndarray  # (N_h, N_d) score with head i ablated on dataset j

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=np.float64).reshape(-1)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or self.scores.size == 0 or self.base.size == 0:
            raise EmptyTableError(f"ablation table is empty (scores shape {self.scores.shape})")
        n_h, n_d = self.scores.shape
        if len(self.datasets) != n_d or self.base.size != n_d:
            raise ShapeError(
                f"table has {n_d} score columns, {self.base.size} baselines, {len(self.datasets)} names"
            )
        if not (np.isfinite(self.scores).all() and np.isfinite(self.base).all()):
            raise ConsistencyError("ablation table has missing or non-finite entries")

    @property
    def n_heads(self) -> int:
        return self.scores.shape[0]

    @property
    def n_datasets(self) -> int:
        return self.scores.shape[1]

    def delta(self) -> np.ndarray:
        return self.base[None, :] - self.scores

    def to_dict(self) -> dict:
        return {
            "datasets": list(self.datasets),
            "base": self.base.tolist(),
            "scores": self.scores.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AblationTable":
        return cls(list(d["datasets"]), np.array(d["base"], dtype=float), np.array(d["scores"], dtype=float))


@dataclass
class HeadWeightVector:
    weights: np.ndarray
    datasets: list[str] = field(default_factory=list)
    fallback_uniform: bool = False
    created: Optional[str] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if self.weights.size == 0:
            raise EmptyTableError("head weight vector is empty")

    @property
    def n_heads(self) -> int:
        return self.weights.size

    def to_dict(self) -> dict:
        d = {
            "version": HEAD_WEIGHTS_VERSION,
            "n_heads": self.n_heads,
            "weights": self.weights.tolist(),
            "datasets": list(self.datasets),
            "fallback_uniform": bool(self.fallback_uniform),
        }
        if self.created is not None:
            d["created"] = self.created
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HeadWeightVector":
        if d.get("version") != HEAD_WEIGHTS_VERSION:
            raise WeightFileError(f"unsupported head-weight version {d.get('version')!r}")
        w = np.array(d["weights"], dtype=np.float64)
        if w.size != d["n_heads"]:
            raise WeightFileError(f"n_heads={d['n_heads']} but {w.size} weights")
        return cls(w, list(d.get("datasets", [])), bool(d.get("fallback_uniform", False)), d.get("created"))

    @classmethod
    def uniform(cls, n_heads: int) -> "HeadWeightVector":
        return cls(np.full(n_heads, 1.0 / n_heads))


def save_head_weights(w: HeadWeightVector, path):
    try:
        atomic_write_text(Path(path), dumps_json(w.to_dict()))
    except OSError as exc:
        raise OSError(f"cannot write head weights to {path}: {exc}") from exc


def load_head_weights(path) -> HeadWeightVector:
    return HeadWeightVector.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def compute_head_weights(table: AblationTable) -> HeadWeightVector:
    drop = table.delta()
    shifted = drop - drop.min(axis=0, keepdims=True)
    totals = shifted.sum(axis=0)
    n_h = table.n_heads
    per_dataset = np.empty_like(shifted)
    degenerate = totals == 0.0
    # an all-zero column means every head mattered equally on that dataset
    per_dataset[:, degenerate] = 1.0 / n_h
    per_dataset[:, ~degenerate] = shifted[:, ~degenerate] / totals[~degenerate]
    return HeadWeightVector(
        per_dataset.mean(axis=1), list(table.datasets), fallback_uniform=bool(degenerate.any())
    )


def _query_rows(h_t: np.ndarray, query_window: Optional[str]) -> np.ndarray:
    """Select text rows used as queries: ``all``, ``last:K`` or ``first:K``."""
    if query_window in (None, "all"):
        return np.arange(h_t.shape[0])
    try:
        where, k = query_window.split(":")
        k = int(k)
    except ValueError:
        raise ConfigError(f"bad query window {query_window!r}; use all, last:K or first:K") from None
    if k < 1:
        raise ConfigError(f"query window size must be >= 1, got {k}")
    n = h_t.shape[0]
    k = min(k, n)
    if where == "last":
        return np.arange(n - k, n)
    if where == "first":
        return np.arange(k)
    raise ConfigError(f"bad query window {query_window!r}; use all, last:K or first:K")


def text_guided_scores(
    seq: MultimodalSequence,
    weights: ModelWeights,
    *,
    layer: int = 0,
    query_window: Optional[str] = None,
    score_softmax: bool = False,
    rope: bool = False,
) -> np.ndarray:
    """Per-head relevance of each visual token to the text, shape (N_h, M).

    The defaults follow the method exactly. ``query_window``, ``score_softmax``
    and ``rope`` exist only for ablation variants; ``rope=True`` rotates
    queries and keys by their positions in the concatenated sequence.
    """
    c = weights.config
    if not 0 <= layer < c.n_layers:
        raise ConfigError(f"score layer {layer} out of range for {c.n_layers} layers")
    h_t, h_v = seq.text_embeddings, seq.visual_embeddings
    if h_t.shape[1] != c.d_model:
        raise ShapeError(f"sequence width {h_t.shape[1]} != d_model {c.d_model}")
    rows = _query_rows(h_t, query_window)
    h_t = h_t[rows]
    if seq.order == TEXT_FIRST:
        text_pos, vis_pos = rows, seq.n_text + np.arange(seq.n_visual)
    else:
        text_pos, vis_pos = seq.n_visual + rows, np.arange(seq.n_visual)

    scale = 1.0 / math.sqrt(c.d_k)
    out = np.empty((c.n_heads, seq.n_visual))
    for i in range(c.n_heads):
        q = h_t @ weights.head_wq(layer, i)
        k = h_v @ weights.head_wk(layer, i)
        if rope:
            q = apply_rope(q, text_pos, c.rope_base)
            k = apply_rope(k, vis_pos, c.rope_base)
        a = (q @ k.T) * scale
        if score_softmax:
            a = softmax_rows(a)
        out[i] = a.mean(axis=0)
    return out


def aggregate_importance(scores: np.ndarray, w: HeadWeightVector | np.ndarray) -> np.ndarray:
    wv = w.weights if isinstance(w, HeadWeightVector) else np.asarray(w, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != wv.size:
        raise ShapeError(f"score matrix {scores.shape} vs {wv.size} head weights")
    return wv @ scores


@dataclass
class PruneDecision:
    kept: np.ndarray
    keep_count: int
    n_visual: int
    mode: str = "hawk"
    scores: Optional[np.ndarray] = None

    def __post_init__(self):
        self.kept = np.asarray(self.kept, dtype=np.int64).reshape(-1)
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.kept.size != self.keep_count:
            raise ConsistencyError(f"{self.kept.size} kept indices for keep_count {self.keep_count}")
        if self.kept.size and (np.any(np.diff(self.kept) <= 0) or self.kept[0] < 0):
            raise ConsistencyError("kept indices must be strictly ascending and non-negative")
        if self.kept.size and self.kept[-1] >= self.n_visual:
            raise ConsistencyError(f"kept index {self.kept[-1]} out of range for M={self.n_visual}")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_visual": self.n_visual,
            "keep_count": self.keep_count,
            "pruning_ratio": pruning_ratio(self.n_visual, self.keep_count),
            "kept": self.kept.tolist(),
            "scores": None if self.scores is None else np.asarray(self.scores).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PruneDecision":
        scores = d.get("scores")
        return cls(
            np.array(d["kept"], dtype=np.int64),
            int(d["keep_count"]),
            int(d["n_visual"]),
            d["mode"],
            None if scores is None else np.array(scores, dtype=np.float64),
        )


def _check_keep(keep_count: int, m: int):
    if keep_count < 1 or keep_count > m:
        raise BoundError(f"keep_count {keep_count} outside [1, {m}]")


def select_tokens(importance, keep_count: int, *, mode: str = "hawk") -> PruneDecision:
    importance = np.asarray(importance, dtype=np.float64)
    _check_keep(keep_count, importance.size)
    kept = top_k_indices(importance, keep_count)
    return PruneDecision(kept, keep_count, importance.size, mode, importance.copy())


def apply_decision(seq: MultimodalSequence, d: PruneDecision) -> MultimodalSequence:
    if d.n_visual != seq.n_visual:
        raise ConsistencyError(f"decision made for M={d.n_visual}, sequence has M={seq.n_visual}")
    if d.kept.size and (d.kept.min() < 0 or d.kept.max() >= seq.n_visual):
        raise ConsistencyError("decision index out of range")
    return seq.with_visual(seq.visual_embeddings[d.kept].copy())


def hawk_select(
    seq: MultimodalSequence,
    weights: ModelWeights,
    head_weights: HeadWeightVector,
    keep_count: int,
    **score_opts,
) -> PruneDecision:
    if head_weights.n_heads != weights.config.n_heads:
        raise ShapeError(
            f"head weights cover {head_weights.n_heads} heads, model has {weights.config.n_heads}"
        )
    c = text_guided_scores(seq, weights, **score_opts)
    return select_tokens(aggregate_importance(c, head_weights), keep_count)


def max_min_diverse(x: np.ndarray, k: int) -> np.ndarray:
    """Greedy max-min subset under cosine distance, seeded by the largest-norm row."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    unit = np.divide(x, norms[:, None], out=np.zeros_like(x), where=norms[:, None] > 0)
    dist = 1.0 - unit @ unit.T
    chosen = [int(np.argmax(norms))]
    nearest = dist[chosen[0]].copy()
    taken = np.zeros(x.shape[0], dtype=bool)
    taken[chosen[0]] = True
    while len(chosen) < k:
        cand = np.where(taken, -np.inf, nearest)
        nxt = int(np.argmax(cand))
        chosen.append(nxt)
        taken[nxt] = True
        nearest = np.minimum(nearest, dist[nxt])
    return np.sort(np.array(chosen, dtype=np.int64))


def baseline_select(
    seq: MultimodalSequence,
    mode: str,
    keep_count: int,
    rng: Optional[np.random.Generator] = None,
    *,
    weights: Optional[ModelWeights] = None,
    **score_opts,
) -> PruneDecision:
    m = seq.n_visual
    _check_keep(keep_count, m)
    if mode == "mean-head":
        if weights is None:
            raise ConfigError("mean-head selection needs model weights")
        c = text_guided_scores(seq, weights, **score_opts)
        imp = aggregate_importance(c, HeadWeightVector.uniform(weights.config.n_heads))
        return select_tokens(imp, keep_count, mode="mean-head")
    if mode == "random":
        if rng is None:
            raise ConfigError("random selection needs an rng")
        kept = np.sort(rng.choice(m, size=keep_count, replace=False))
        return PruneDecision(kept, keep_count, m, "random")
    if mode == "diversity":
        return PruneDecision(max_min_diverse(seq.visual_embeddings, keep_count), keep_count, m, "diversity")
    raise ConfigError(f"unknown baseline mode {mode!r}; expected one of {BASELINE_MODES}")


def select(
    seq: MultimodalSequence,
    mode: str,
    keep_count: int,
    *,
    weights: Optional[ModelWeights] = None,
    head_weights: Optional[HeadWeightVector] = None,
    rng: Optional[np.random.Generator] = None,
    **score_opts,
) -> PruneDecision:
    """Dispatch on ``mode``; ``hawk`` needs model and head weights."""
    if mode == "hawk":
        if weights is None or head_weights is None:
            raise ConfigError("hawk selection needs model weights and head weights")
        return hawk_select(seq, weights, head_weights, keep_count, **score_opts)
    return baseline_select(seq, mode, keep_count, rng, weights=weights, **score_opts)


def _exact(r: float) -> Fraction:
    # the shortest repr is the decimal the caller typed, so 0.802 means 802/1000
    return Fraction(repr(float(r)))


def keep_count_from_ratio(
    m: int, *, keep_ratio: Optional[float] = None, prune_ratio: Optional[float] = None
) -> int:
    """``max(1, floor(M * keep_ratio))``; a prune ratio p means keep ratio 1 - p."""
    if (keep_ratio is None) == (prune_ratio is None):
        raise ConfigError("give exactly one of keep_ratio / prune_ratio")
    r = keep_ratio if keep_ratio is not None else prune_ratio
    if not 0.0 <= r <= 1.0:
        raise BoundError(f"ratio {r} outside [0, 1]")
    keep = _exact(keep_ratio) if keep_ratio is not None else 1 - _exact(prune_ratio)
    return max(1, math.floor(m * keep))


def pruning_ratio(m: int, keep_count: int) -> float:
    """Fraction of visual tokens removed."""
    return 1.0 - keep_count / m


def format_ratio(m: int, keep_count: int) -> str:
    return f"{100 * pruning_ratio(m, keep_count):.1f}%"
