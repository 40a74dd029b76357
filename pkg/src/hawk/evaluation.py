"""Synthetic tasks, metrics and efficiency accounting.

Copy-task models are built analytically rather than trained. The residual
stream is split into orthonormal directions::

    needle key | query marker | constant | payload slots (V) | answer slots (V) | content

Head 0 of layer 0 is the copy head: its query reads the marker present on
every text row, its key reads the needle-key direction, so the last text
position attends mostly to the needle; its value reads the payload slots and
its output writes the matching answer slot, which the readout turns into a
logit. Distractor visual rows carry a weaker needle-key component (graded
relevance) and wrong payloads. Token 0 is the default answer, reached
through a small readout bias on the constant direction whenever nothing is
copied. All embedding rows have norm sqrt(d_model), so the pre-attention
RMSNorm leaves them unchanged.

Copy-task sequences are visual-first: under causal attention the text that
asks the question has to come after the visual tokens it reads.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import BenchmarkInvalidError, BoundError, ConfigError, ShapeError
from .model import (
    VISUAL_FIRST,
    GenerationOutput,
    HeadVisualMask,
    LayerWeights,
    ModelConfig,
    ModelWeights,
    MultimodalSequence,
    decode_greedy,
    init_random_weights,
    kv_cache_bytes,
)
from .pruner import (
    HeadWeightVector,
    PruneDecision,
    apply_decision,
    keep_count_from_ratio,
    select,
)
from .tensor import make_rng

SCORING_RULES = ("accuracy", "recall", "neg-divergence")
KL_EPS = 1e-12

# coefficients of the special directions in embedding rows
_MARK = 3.0
_KEY = 3.0
_PAYLOAD = 3.0
_NEEDLE_LOGIT = 8.0
_ANSWER = 2.0
_READOUT = 4.0
_BIAS = 1.0
_DECOY = 4.0
_NOISE_SCALE = 0.01


def copy_task_config(**overrides) -> ModelConfig:
    base = dict(d_model=32, n_layers=1, n_heads=4, d_k=8, vocab_size=8)
    base.update(overrides)
    return ModelConfig(**base)


def large_toy_config() -> ModelConfig:
    return ModelConfig(d_model=256, n_layers=4, n_heads=8, d_k=32, vocab_size=256)


@dataclass
class NeedleTask:
    seq: MultimodalSequence
    needles: np.ndarray  # visual positions that carry the payload
    payload: int
    answer: int

    def __post_init__(self):
        self.needles = np.asarray(self.needles, dtype=np.int64)
        if self.needles.size < 1 or self.needles.min() < 0 or self.needles.max() >= self.seq.n_visual:
            raise ShapeError(f"needle indices {self.needles.tolist()} invalid for M={self.seq.n_visual}")


class CopyTaskBuilder:
    """Holds the residual basis of one copy-task model and mints weights and tasks."""

    def __init__(
        self,
        config: ModelConfig,
        basis: np.ndarray,
        noise_heads: int = 3,
        harmful_heads: int = 0,
        distractor_relevance: float = 0.5,
        noise_seed: int = 0,
    ):
        c = config
        v = c.vocab_size
        if noise_heads < 0 or harmful_heads < 0:
            raise ConfigError("head counts must be >= 0")
        if c.n_heads < 1 + noise_heads + harmful_heads:
            raise ConfigError(
                f"config has {c.n_heads} heads, need {1 + noise_heads + harmful_heads} "
                f"(copy + {noise_heads} noise + {harmful_heads} harmful)"
            )
        if v < 3:
            raise ConfigError("copy task needs vocab_size >= 3")
        if c.d_k < v or c.d_k < 2:
            raise ConfigError(f"copy head needs d_k >= vocab_size ({c.d_k} < {v})")
        if c.d_model < 3 + 2 * v + 1 or c.d_model <= _KEY**2 + 1 + _PAYLOAD**2:
            raise ConfigError(f"d_model={c.d_model} too small for vocab_size={v}")
        basis = np.asarray(basis, dtype=np.float64)
        if basis.shape != (c.d_model, c.d_model):
            raise ShapeError(f"basis must be {c.d_model}x{c.d_model}")
        self.config = c
        self.basis = basis
        self.noise_heads = noise_heads
        self.harmful_heads = harmful_heads
        self.distractor_relevance = float(distractor_relevance)
        self.noise_seed = int(noise_seed)

    @classmethod
    def create(
        cls,
        config: ModelConfig,
        rng: np.random.Generator,
        needle_direction: Optional[np.ndarray] = None,
        **kw,
    ) -> "CopyTaskBuilder":
        d = config.d_model
        raw = rng.standard_normal((d, d))
        if needle_direction is not None:
            u = np.asarray(needle_direction, dtype=np.float64).reshape(-1)
            if u.size != d or not np.linalg.norm(u) > 0:
                raise ShapeError(f"needle direction must be a non-zero vector of length {d}")
            raw[:, 0] = u
        q, r = np.linalg.qr(raw)
        q = q * np.sign(np.diag(r))[None, :]
        kw.setdefault("noise_seed", int(rng.integers(0, 2**63)))
        return cls(config, q, **kw)

    # residual directions
    @property
    def needle_dir(self):
        return self.basis[:, 0]

    @property
    def marker_dir(self):
        return self.basis[:, 1]

    @property
    def const_dir(self):
        return self.basis[:, 2]

    def payload_dir(self, t: int):
        return self.basis[:, 3 + t]

    def answer_dir(self, t: int):
        return self.basis[:, 3 + self.config.vocab_size + t]

    @property
    def content_basis(self) -> np.ndarray:
        return self.basis[:, 3 + 2 * self.config.vocab_size :]

    def copy_head(self) -> int:
        return 0

    def noise_head_ids(self) -> list[int]:
        return list(range(1, 1 + self.noise_heads))

    def harmful_head_ids(self) -> list[int]:
        start = 1 + self.noise_heads
        return list(range(start, start + self.harmful_heads))

    def _fill(self, rng, row: np.ndarray) -> np.ndarray:
        """Top the row up with a random content vector so its norm is sqrt(d)."""
        d = self.config.d_model
        rest = d - float(row @ row)
        cb = self.content_basis
        direction = cb @ rng.standard_normal(cb.shape[1])
        direction /= np.linalg.norm(direction)
        return row + math.sqrt(max(rest, 0.0)) * direction

    def text_row(self, rng) -> np.ndarray:
        return self._fill(rng, _MARK * self.marker_dir + self.const_dir)

    def visual_row(self, rng, relevance: float, payload: int) -> np.ndarray:
        row = relevance * _KEY * self.needle_dir + self.const_dir + _PAYLOAD * self.payload_dir(payload)
        return self._fill(rng, row)

    def build_weights(self) -> ModelWeights:
        c = self.config
        d, dk, v = c.d_model, c.d_k, c.vocab_size
        rng = make_rng(self.noise_seed)
        zeros = lambda *s: np.zeros(s)
        layers = [
            LayerWeights(np.ones(d), zeros(d, d), zeros(d, d), zeros(d, d), zeros(d, d),
                         np.ones(d), zeros(d, c.d_mlp), zeros(c.d_mlp, d))
            for _ in range(c.n_layers)
        ]
        lw = layers[0]
        qk = math.sqrt(_NEEDLE_LOGIT * math.sqrt(dk) / (_MARK * _KEY))
        slot = dk - 2  # slowest rotary pair: its angle barely moves over the prompt

        def block(h):
            return slice(h * dk, (h + 1) * dk)

        h0 = block(self.copy_head())
        lw.w_q[:, h0.start + slot] = qk * self.marker_dir
        lw.w_k[:, h0.start + slot] = qk * self.needle_dir
        for t in range(v):
            lw.w_v[:, h0.start + t] = self.payload_dir(t)
            lw.w_o[h0.start + t, :] = (_ANSWER / _PAYLOAD) * self.answer_dir(t)

        for h in self.noise_head_ids():
            b = block(h)
            for mat in (lw.w_q, lw.w_k, lw.w_v):
                mat[:, b] = _NOISE_SCALE * rng.standard_normal((d, dk))
            lw.w_o[b, :] = _NOISE_SCALE * rng.standard_normal((dk, d))

        for h in self.harmful_head_ids():
            b = block(h)
            lw.w_q[:, b.start + slot] = qk * self.marker_dir
            lw.w_k[:, b.start + slot] = qk * self.needle_dir
            lw.w_v[:, b.start] = self.needle_dir
            lw.w_o[b.start, :] = (_DECOY / _KEY) * self.answer_dir(0)

        readout = np.zeros((d, v))
        for t in range(v):
            readout[:, t] = _READOUT * self.answer_dir(t)
        readout[:, 0] += _BIAS * self.const_dir
        embed = np.vstack([self.text_row(rng) for _ in range(v)])
        return ModelWeights(c, embed, layers, np.ones(d), readout)

    def make_task(
        self,
        rng: np.random.Generator,
        *,
        n_text: int = 8,
        n_visual: int = 64,
        payload: Optional[int] = None,
        needles: Optional[Sequence[int]] = None,
        n_needles: int = 1,
    ) -> NeedleTask:
        v = self.config.vocab_size
        if payload is None:
            payload = int(rng.integers(1, v))
        if not 1 <= payload < v:
            raise ConfigError(f"payload must be in [1, {v}), got {payload}")
        if needles is None:
            needles = np.sort(rng.choice(n_visual, size=n_needles, replace=False))
        needles = np.asarray(needles, dtype=np.int64)
        wrong = np.array([t for t in range(1, v) if t != payload])
        is_needle = np.zeros(n_visual, dtype=bool)
        is_needle[needles] = True
        visual = []
        for k in range(n_visual):
            if is_needle[k]:
                visual.append(self.visual_row(rng, 1.0, payload))
            else:
                rel = rng.uniform(0.0, self.distractor_relevance)
                visual.append(self.visual_row(rng, rel, int(rng.choice(wrong))))
        text = np.vstack([self.text_row(rng) for _ in range(n_text)])
        seq = MultimodalSequence(text, np.vstack(visual), VISUAL_FIRST)
        return NeedleTask(seq, needles, payload, payload)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.tolist(),
            "noise_heads": self.noise_heads,
            "harmful_heads": self.harmful_heads,
            "distractor_relevance": self.distractor_relevance,
            "noise_seed": self.noise_seed,
        }

    @classmethod
    def from_dict(cls, config: ModelConfig, d: dict) -> "CopyTaskBuilder":
        return cls(
            config,
            np.array(d["basis"], dtype=np.float64),
            int(d["noise_heads"]),
            int(d.get("harmful_heads", 0)),
            float(d.get("distractor_relevance", 0.5)),
            int(d["noise_seed"]),
        )


def make_copy_task_model(
    config: ModelConfig,
    needle_direction: Optional[np.ndarray],
    payload: Optional[int],
    noise_heads: int,
    rng: np.random.Generator,
    **task_kw,
) -> tuple[ModelWeights, NeedleTask]:
    builder = CopyTaskBuilder.create(config, rng, needle_direction, noise_heads=noise_heads)
    return builder.build_weights(), builder.make_task(rng, payload=payload, **task_kw)


def needle_recall(d: PruneDecision, t: NeedleTask) -> float:
    kept = np.intersect1d(d.kept, t.needles)
    return kept.size / t.needles.size


def output_divergence(full: GenerationOutput, pruned: GenerationOutput) -> float:
    """Mean over steps of KL(full || pruned), log arguments floored at 1e-12."""
    steps = min(len(full.tokens), len(pruned.tokens))
    if steps < 1:
        raise BoundError("cannot compare empty generation outputs")
    p = np.maximum(full.distributions[:steps], KL_EPS)
    q = np.maximum(pruned.distributions[:steps], KL_EPS)
    kl = np.sum(full.distributions[:steps] * np.log(p / q), axis=1)
    # the floor can push a near-zero KL a hair below zero
    return max(float(np.mean(kl)), 0.0)


def prefill_flops_breakdown(config: ModelConfig, n_text: int, n_visual: int) -> dict:
    """Multiply-accumulate counted as 2 FLOPs; norms, RoPE and softmax ignored.

    Per layer, with L = n_text + n_visual, d = d_model, f = d_mlp:
      projections  8 L d^2     (Q, K, V, O)
      attention    4 L^2 d     (QK^T and AV over all heads, dense L x L)
      mlp          4 L d f
    plus 2 d V for the readout of the last position.
    """
    if n_text < 0 or n_visual < 0:
        raise BoundError("token counts must be >= 0")
    L = n_text + n_visual
    d, f, n = config.d_model, config.d_mlp, config.n_layers
    parts = {
        "projections": n * 8 * L * d * d,
        "attention": n * 4 * L * L * d,
        "mlp": n * 4 * L * d * f,
        "readout": 2 * d * config.vocab_size if L else 0,
    }
    parts["total"] = sum(parts.values())
    return parts


def prefill_flops(config: ModelConfig, n_text: int, n_visual: int) -> int:
    return prefill_flops_breakdown(config, n_text, n_visual)["total"]


@dataclass
class EvalSuite:
    name: str
    tasks: list[NeedleTask]
    scoring: str = "accuracy"
    seed: int = 0
    steps: int = 1

    def __post_init__(self):
        if not self.tasks:
            raise ConfigError(f"suite {self.name!r} has no tasks")
        if self.scoring not in SCORING_RULES:
            raise ConfigError(f"suite {self.name!r}: unknown scoring rule {self.scoring!r}")


SUITE_FIELDS = {
    "name": str,
    "scoring": str,
    "seed": int,
    "n_tasks": int,
    "n_text": int,
    "n_visual": int,
    "n_needles": int,
    "steps": int,
}
SUITE_DEFAULTS = {"kind": "needle", "scoring": "accuracy", "seed": 0, "n_tasks": 16,
                  "n_text": 8, "n_visual": 64, "n_needles": 1, "steps": 1}


def parse_suite_spec(d: dict) -> dict:
    if not isinstance(d, dict) or "name" not in d:
        raise ConfigError("suite definition must be an object with a 'name'")
    spec = dict(SUITE_DEFAULTS)
    spec.update(d)
    if spec["kind"] != "needle":
        raise ConfigError(f"suite {spec['name']!r}: unsupported kind {spec['kind']!r}")
    for k, typ in SUITE_FIELDS.items():
        if not isinstance(spec[k], typ) or isinstance(spec[k], bool):
            raise ConfigError(f"suite {spec['name']!r}: field {k!r} must be {typ.__name__}")
    if spec["scoring"] not in SCORING_RULES:
        raise ConfigError(f"suite {spec['name']!r}: unknown scoring rule {spec['scoring']!r}")
    for k in ("n_tasks", "n_text", "n_visual", "n_needles", "steps"):
        if spec[k] < 1:
            raise ConfigError(f"suite {spec['name']!r}: {k} must be >= 1")
    if spec["n_needles"] > spec["n_visual"]:
        raise ConfigError(f"suite {spec['name']!r}: more needles than visual tokens")
    return spec


def load_suite_spec(path) -> dict:
    """Read and validate a suite JSON file; ``json.JSONDecodeError`` propagates with its location."""
    return parse_suite_spec(json.loads(Path(path).read_text(encoding="utf-8")))


def build_suite(spec: dict, builder: CopyTaskBuilder, seed: Optional[int] = None,
                n_tasks: Optional[int] = None) -> EvalSuite:
    """Materialize tasks; the stream depends on the suite seed and the run seed."""
    spec = parse_suite_spec(spec)
    entropy = [spec["seed"]] if seed is None else [seed, spec["seed"]]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
    tasks = [
        builder.make_task(rng, n_text=spec["n_text"], n_visual=spec["n_visual"], n_needles=spec["n_needles"])
        for _ in range(n_tasks or spec["n_tasks"])
    ]
    return EvalSuite(spec["name"], tasks, spec["scoring"], spec["seed"], spec["steps"])


Decider = Callable[[NeedleTask], PruneDecision]


def evaluate_suite(
    weights: ModelWeights,
    suite: EvalSuite,
    masks: Iterable[HeadVisualMask] = (),
    decide: Optional[Decider] = None,
    references: Optional[list[GenerationOutput]] = None,
) -> float:
    """Score of ``suite`` under ``masks`` and an optional pruning policy."""
    masks = tuple(masks)
    total = 0.0
    for i, task in enumerate(suite.tasks):
        seq = task.seq
        decision = None
        if decide is not None:
            decision = decide(task)
            seq = apply_decision(seq, decision)
        if suite.scoring == "recall":
            total += 1.0 if decision is None else needle_recall(decision, task)
            continue
        out = decode_greedy(weights, seq, suite.steps, masks)
        if suite.scoring == "accuracy":
            total += float(out.tokens[0] == task.answer)
        else:
            ref = references[i] if references else decode_greedy(weights, task.seq, suite.steps)
            total -= output_divergence(ref, out)
    return total / len(suite.tasks)


METRIC_COLUMNS = [
    "suite", "mode", "keep_ratio", "score", "relative_score", "recall",
    "divergence", "flops_ratio", "cache_ratio", "wallclock_ms",
]


def relative_score(score: float, baseline: float) -> float:
    """Percent of the unpruned score kept; NaN when the baseline is 0 and the score is not."""
    if baseline == 0.0:
        return 100.0 if score == 0.0 else float("nan")
    return 100.0 * score / baseline


def _task_score(rule: str, task: NeedleTask, out: GenerationOutput, recall: float, div: float) -> float:
    if rule == "accuracy":
        return float(out.tokens[0] == task.answer)
    if rule == "recall":
        return recall
    return -div


def run_eval(
    weights: ModelWeights,
    suites: Sequence[EvalSuite],
    modes: Sequence[str],
    ratios: Sequence[float],
    *,
    head_weights: Optional[HeadWeightVector] = None,
    seed: int = 0,
    ratio_kind: str = "keep",
    score_opts: Optional[dict] = None,
) -> list[dict]:
    """One row per (suite, mode, ratio) plus a ``MEAN`` row per (mode, ratio).

    ``ratios`` are keep ratios, or prune ratios when ``ratio_kind="prune"``.
    The MEAN row's relative_score is the unweighted mean of the per-suite
    relative scores; its other numeric columns are plain means too.
    """
    if ratio_kind not in ("keep", "prune"):
        raise ConfigError(f"ratio_kind must be 'keep' or 'prune', got {ratio_kind!r}")
    score_opts = score_opts or {}
    c = weights.config
    rows = []
    for si, suite in enumerate(suites):
        refs = [decode_greedy(weights, t.seq, suite.steps) for t in suite.tasks]
        base = float(np.mean([_task_score(suite.scoring, t, r, 1.0, 0.0) for t, r in zip(suite.tasks, refs)]))
        for mi, mode in enumerate(modes):
            for ri, ratio in enumerate(ratios):
                rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, si, mi, ri])))
                kw = {f"{ratio_kind}_ratio": ratio}
                scores, recalls, divs, fl, ca = [], [], [], [], []
                t0 = time.perf_counter()
                for task, ref in zip(suite.tasks, refs):
                    n, m = task.seq.n_text, task.seq.n_visual
                    k = keep_count_from_ratio(m, **kw)
                    d = select(task.seq, mode, k, weights=weights, head_weights=head_weights,
                               rng=rng, **score_opts)
                    out = decode_greedy(weights, apply_decision(task.seq, d), suite.steps)
                    recalls.append(needle_recall(d, task))
                    divs.append(output_divergence(ref, out))
                    scores.append(_task_score(suite.scoring, task, out, recalls[-1], divs[-1]))
                    fl.append(prefill_flops(c, n, k) / prefill_flops(c, n, m))
                    ca.append(kv_cache_bytes(c, n + k) / kv_cache_bytes(c, n + m))
                elapsed = (time.perf_counter() - t0) * 1000.0
                score = float(np.mean(scores))
                keep_ratio = ratio if ratio_kind == "keep" else float(1 - Fraction(repr(float(ratio))))
                rows.append({
                    "suite": suite.name,
                    "mode": mode,
                    "keep_ratio": keep_ratio,
                    "score": score,
                    "relative_score": relative_score(score, base),
                    "recall": float(np.mean(recalls)),
                    "divergence": float(np.mean(divs)),
                    "flops_ratio": float(np.mean(fl)),
                    "cache_ratio": float(np.mean(ca)),
                    "wallclock_ms": elapsed,
                })
    per_suite = list(rows)
    for mode in modes:
        for ratio in dict.fromkeys(r["keep_ratio"] for r in per_suite):
            group = [r for r in per_suite if r["mode"] == mode and r["keep_ratio"] == ratio]
            mean = {"suite": "MEAN", "mode": mode, "keep_ratio": ratio}
            for col in METRIC_COLUMNS[3:]:
                mean[col] = float(np.mean([r[col] for r in group]))
            rows.append(mean)
    return rows


def metrics_csv(rows: Sequence[dict], *, with_timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=METRIC_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        out = {k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()}
        if not with_timing:
            out["wallclock_ms"] = ""
        w.writerow(out)
    return buf.getvalue()


@dataclass
class EfficiencyReport:
    n_text: int
    n_visual: int
    keep_count: int
    mode: str
    flops_full: int
    flops_pruned: int
    cache_bytes_full: int
    cache_bytes_pruned: int
    wallclock_full_ms: float
    wallclock_pruned_ms: float
    repetitions: int
    samples_full_ms: list = field(default_factory=list)
    samples_pruned_ms: list = field(default_factory=list)

    @property
    def speedup(self) -> float:
        return self.wallclock_full_ms / self.wallclock_pruned_ms

    @property
    def flops_ratio(self) -> float:
        return self.flops_pruned / self.flops_full

    @property
    def cache_ratio(self) -> Fraction:
        return Fraction(self.cache_bytes_pruned, self.cache_bytes_full)

    @property
    def pruning_ratio(self) -> float:
        return 1.0 - self.keep_count / self.n_visual

    def to_dict(self) -> dict:
        return {
            "n_text": self.n_text,
            "n_visual": self.n_visual,
            "keep_count": self.keep_count,
            "pruning_ratio": self.pruning_ratio,
            "mode": self.mode,
            "flops_full": self.flops_full,
            "flops_pruned": self.flops_pruned,
            "flops_ratio": self.flops_ratio,
            "cache_bytes_full": self.cache_bytes_full,
            "cache_bytes_pruned": self.cache_bytes_pruned,
            "cache_ratio": float(self.cache_ratio),
            "cache_ratio_exact": f"{self.cache_ratio.numerator}/{self.cache_ratio.denominator}",
            "wallclock_full_ms": self.wallclock_full_ms,
            "wallclock_pruned_ms": self.wallclock_pruned_ms,
            "speedup": self.speedup,
            "repetitions": self.repetitions,
            "samples_full_ms": list(self.samples_full_ms),
            "samples_pruned_ms": list(self.samples_pruned_ms),
        }


def random_sequence(config: ModelConfig, n_text: int, n_visual: int, rng, order: str = VISUAL_FIRST):
    return MultimodalSequence(
        rng.standard_normal((n_text, config.d_model)),
        rng.standard_normal((n_visual, config.d_model)),
        order,
    )


def bench_end_to_end(
    weights: ModelWeights,
    seq: MultimodalSequence,
    keep_count: int,
    *,
    mode: str = "hawk",
    head_weights: Optional[HeadWeightVector] = None,
    repetitions: int = 5,
    steps: int = 4,
    seed: int = 0,
    min_ms: float = 1.0,
) -> EfficiencyReport:
    """Median wall-clock of full decode vs select + prune + decode.

    Runs are serialized and interleaved (full, pruned, full, ...) after one
    warm-up of each, so slow drift in machine load hits both sides equally.
    """
    if repetitions < 3:
        raise BoundError(f"need at least 3 repetitions, got {repetitions}")
    c = weights.config
    if mode == "hawk" and head_weights is None:
        head_weights = HeadWeightVector.uniform(c.n_heads)
    rng = make_rng(seed)

    def run_full():
        decode_greedy(weights, seq, steps)

    def run_pruned():
        d = select(seq, mode, keep_count, weights=weights, head_weights=head_weights, rng=rng)
        decode_greedy(weights, apply_decision(seq, d), steps)

    run_full()
    run_pruned()
    full_ms, pruned_ms = [], []
    for _ in range(repetitions):
        for fn, acc in ((run_full, full_ms), (run_pruned, pruned_ms)):
            t0 = time.perf_counter()
            fn()
            acc.append((time.perf_counter() - t0) * 1000.0)
    med_full = statistics.median(full_ms)
    med_pruned = statistics.median(pruned_ms)
    if med_full < min_ms or med_pruned <= 0.0:
        raise BenchmarkInvalidError(
            f"full decode took {med_full:.3f} ms (< {min_ms} ms); use a larger config"
        )
    n, m = seq.n_text, seq.n_visual
    return EfficiencyReport(
        n_text=n,
        n_visual=m,
        keep_count=keep_count,
        mode=mode,
        flops_full=prefill_flops(c, n, m),
        flops_pruned=prefill_flops(c, n, keep_count),
        cache_bytes_full=kv_cache_bytes(c, n + m),
        cache_bytes_pruned=kv_cache_bytes(c, n + keep_count),
        wallclock_full_ms=med_full,
        wallclock_pruned_ms=med_pruned,
        repetitions=repetitions,
        samples_full_ms=full_ms,
        samples_pruned_ms=pruned_ms,
    )


def random_model(config: ModelConfig, seed: int) -> ModelWeights:
    return init_random_weights(config, make_rng(seed))
