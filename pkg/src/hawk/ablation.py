"""Per-head visual ablation.

Every suite is scored once with no mask and once per head with that head's
access to visual keys disabled. The resulting table feeds
``compute_head_weights``.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import AblationError, ConfigError
from .evaluation import EvalSuite, evaluate_suite
from .model import HeadVisualMask, ModelWeights
from .modelio import atomic_write_text, dumps_json
from .pruner import AblationTable, HeadWeightVector, compute_head_weights, save_head_weights

LAYER_POLICIES = ("first-layer", "all-layers")


@dataclass
class AblationRunSpec:
    model: str
    suites: list[str]
    heads: Optional[list[int]] = None  # None = every head
    layer_policy: str = "first-layer"
    seed: int = 0
    samples_per_suite: Optional[int] = None

    def __post_init__(self):
        if not self.suites:
            raise ConfigError("ablation needs at least one suite")
        if self.layer_policy not in LAYER_POLICIES:
            raise ConfigError(f"layer policy must be one of {LAYER_POLICIES}, got {self.layer_policy!r}")

    def head_list(self, n_heads: int) -> list[int]:
        heads = list(range(n_heads)) if self.heads is None else [int(h) for h in self.heads]
        if not heads:
            raise ConfigError("empty head range")
        bad = [h for h in heads if not 0 <= h < n_heads]
        if bad:
            raise ConfigError(f"heads {bad} out of range for {n_heads} heads")
        return heads

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "suites": list(self.suites),
            "heads": self.heads,
            "layer_policy": self.layer_policy,
            "seed": self.seed,
            "samples_per_suite": self.samples_per_suite,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AblationRunSpec":
        return cls(**d)


@dataclass
class AblationReport:
    spec: AblationRunSpec
    heads: list[int]
    table: AblationTable
    weights: HeadWeightVector
    timing: dict = field(default_factory=dict)  # seconds: {"base": x, "heads": [...]}

    @property
    def delta(self) -> np.ndarray:
        return self.table.delta()

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "heads": list(self.heads),
            "table": self.table.to_dict(),
            "delta": self.delta.tolist(),
            "weights": self.weights.to_dict(),
            "timing": self.timing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AblationReport":
        return cls(
            AblationRunSpec.from_dict(d["spec"]),
            list(d["heads"]),
            AblationTable.from_dict(d["table"]),
            HeadWeightVector.from_dict(d["weights"]),
            dict(d.get("timing", {})),
        )


def head_mask(head: int, policy: str, n_layers: int) -> HeadVisualMask:
    if policy == "all-layers":
        return HeadVisualMask.all_layers(head, n_layers)
    return HeadVisualMask.first_layer(head)


def run_ablation(
    spec: AblationRunSpec,
    weights: ModelWeights,
    suites: Mapping[str, EvalSuite] | Sequence[EvalSuite],
    *,
    workers: int = 1,
) -> AblationReport:
    """Build the ablation table; any failing cell aborts the whole run."""
    if not isinstance(suites, Mapping):
        suites = {s.name: s for s in suites}
    missing = [name for name in spec.suites if name not in suites]
    if missing:
        raise ConfigError(f"unknown suites: {missing}")
    chosen = [suites[name] for name in spec.suites]
    c = weights.config
    heads = spec.head_list(c.n_heads)

    def score_all(head: Optional[int]):
        masks = () if head is None else (head_mask(head, spec.layer_policy, c.n_layers),)
        t0 = time.perf_counter()
        out = []
        for suite in chosen:
            try:
                out.append(evaluate_suite(weights, suite, masks))
            except Exception as exc:
                raise AblationError(
                    f"evaluation failed for head={head} suite={suite.name!r}: {exc}",
                    head=head,
                    dataset=suite.name,
                ) from exc
        return out, time.perf_counter() - t0

    base, base_time = score_all(None)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(score_all, heads))
    else:
        results = [score_all(h) for h in heads]

    table = AblationTable(list(spec.suites), np.array(base), np.array([r[0] for r in results]))
    return AblationReport(
        spec,
        heads,
        table,
        compute_head_weights(table),
        {"base_s": base_time, "heads_s": [r[1] for r in results]},
    )


def export_weights(report: AblationReport, path):
    save_head_weights(report.weights, path)


def save_report(report: AblationReport, path):
    atomic_write_text(Path(path), dumps_json(report.to_dict()))


def load_report(path) -> AblationReport:
    return AblationReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def weight_spread(reports: Sequence[AblationReport]) -> dict:
    """Per-head mean and variance of the derived weights across repeated runs."""
    w = np.vstack([r.weights.weights for r in reports])
    return {"mean": w.mean(axis=0).tolist(), "variance": w.var(axis=0).tolist(), "runs": len(reports)}
