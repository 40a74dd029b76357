"""Command-line entry point: ``hawk {gen-model,ablate,prune,eval,bench}``.

Exit codes: 0 success, 1 runtime/compute failure, 2 usage or input
validation failure. Output goes to ``--out``, else ``$HAWK_OUT_DIR``, else
``./hawk_out``. Every file is written atomically.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .ablation import AblationRunSpec, export_weights, run_ablation, save_report
from .errors import HawkError
from .evaluation import (
    CopyTaskBuilder,
    bench_end_to_end,
    build_suite,
    copy_task_config,
    large_toy_config,
    parse_suite_spec,
    metrics_csv,
    random_model,
    random_sequence,
    run_eval,
)
from .model import ModelConfig, init_random_weights
from .modelio import (
    atomic_write_text,
    dumps_json,
    load_model,
    load_sequence,
    save_model,
    save_sequence,
)
from .pruner import (
    MODES,
    apply_decision,
    keep_count_from_ratio,
    load_head_weights,
    select,
)
from .tensor import make_rng

log = logging.getLogger("hawk")

DEFAULT_OUT = "hawk_out"


class UsageError(Exception):
    """Bad flags or unreadable/invalid inputs (exit 2)."""


class RuntimeFailure(Exception):
    """Computation failed on valid inputs (exit 1)."""


def out_dir(args) -> Path:
    d = Path(args.out or os.environ.get("HAWK_OUT_DIR") or DEFAULT_OUT)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _load_json(path, what: str):
    p = _require(path, what)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}:{exc.lineno}:{exc.colno}: malformed {what}: {exc.msg}") from exc


def _load_model(path):
    p = _require(path, "model")
    try:
        return load_model(p)
    except (HawkError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot load model {p}: {exc}") from exc


def _builder(weights, meta, path) -> CopyTaskBuilder:
    if "copy_task" not in meta:
        raise UsageError(f"model {path} has no copy-task metadata; suites need a copy-task model")
    return CopyTaskBuilder.from_dict(weights.config, meta["copy_task"])


def _load_suites(paths, builder, seed, samples=None):
    suites = []
    for p in paths:
        raw = _load_json(p, "suite")
        try:
            spec = parse_suite_spec(raw)
        except HawkError as exc:
            raise UsageError(f"{p}: invalid suite: {exc}") from exc
        suites.append(build_suite(spec, builder, seed=seed, n_tasks=samples))
    names = [s.name for s in suites]
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate suite names: {names}")
    return suites


def _load_head_weights(path):
    p = _require(path, "head-weight file")
    _load_json(p, "head-weight file")
    try:
        return load_head_weights(p)
    except (HawkError, KeyError) as exc:
        raise UsageError(f"invalid head-weight file {p}: {exc}") from exc


def _score_opts(args) -> dict:
    return {
        "layer": args.score_layer,
        "query_window": args.query_window,
        "score_softmax": args.score_softmax,
        "rope": args.score_rope,
    }


def cmd_gen_model(args) -> int:
    out = out_dir(args)
    rng = make_rng(args.seed)
    path = out / "model.bin"
    if args.kind == "copy":
        config = copy_task_config(n_layers=args.n_layers)
        builder = CopyTaskBuilder.create(
            config, rng, noise_heads=args.noise_heads, harmful_heads=args.harmful_heads
        )
        weights = builder.build_weights()
        save_model(weights, path, {"copy_task": builder.to_dict()})
        for i, name in enumerate(("suite_a", "suite_b")):
            spec = {"name": name, "kind": "needle", "scoring": "accuracy", "seed": args.seed * 2 + i,
                    "n_tasks": 16, "n_text": 8, "n_visual": 64, "n_needles": 1, "steps": 1}
            atomic_write_text(out / f"{name}.json", dumps_json(spec))
        task = builder.make_task(rng)
        save_sequence(task.seq, out / "sequence.json")
    else:
        config = large_toy_config() if args.preset == "large" else ModelConfig(
            d_model=64, n_layers=args.n_layers, n_heads=4, d_k=16, vocab_size=64
        )
        weights = init_random_weights(config, rng)
        save_model(weights, path)
        save_sequence(random_sequence(config, 8, 64, rng), out / "sequence.json")
    print(f"wrote {path} and {path.with_suffix('.json')}")
    return 0


def cmd_ablate(args) -> int:
    weights, meta = _load_model(args.model)
    builder = _builder(weights, meta, args.model)
    suites = _load_suites(args.suite, builder, args.seed, args.samples)
    heads = None
    if args.heads:
        try:
            lo, _, hi = args.heads.partition("-")
            heads = list(range(int(lo), int(hi or lo) + 1))
        except ValueError:
            raise UsageError(f"bad --heads {args.heads!r}; use N or A-B") from None
    try:
        spec = AblationRunSpec(
            model=str(args.model),
            suites=[s.name for s in suites],
            heads=heads,
            layer_policy=args.layer_policy,
            seed=args.seed,
            samples_per_suite=args.samples,
        )
        spec.head_list(weights.config.n_heads)
    except HawkError as exc:
        raise UsageError(str(exc)) from exc
    report = run_ablation(spec, weights, suites, workers=args.workers)
    out = out_dir(args)
    save_report(report, out / "ablation_report.json")
    export_weights(report, out / "head_weights.json")
    w = report.weights.weights
    print("head weights: " + " ".join(f"{x:.4f}" for x in w))
    return 0


def _keep_count(args, m: int) -> int:
    try:
        return keep_count_from_ratio(m, keep_ratio=args.keep_ratio, prune_ratio=args.prune_ratio)
    except HawkError as exc:
        raise UsageError(str(exc)) from exc


def cmd_prune(args) -> int:
    weights, _ = _load_model(args.model)
    _load_json(args.input, "sequence file")
    try:
        seq = load_sequence(args.input)
    except (HawkError, KeyError) as exc:
        raise UsageError(f"invalid sequence file {args.input}: {exc}") from exc
    if args.keep_ratio is None and args.prune_ratio is None:
        raise UsageError("one of --keep-ratio / --prune-ratio is required")
    hw = None
    if args.mode == "hawk":
        if not args.weights:
            raise UsageError("--weights is required for mode hawk")
        hw = _load_head_weights(args.weights)
        if hw.n_heads != weights.config.n_heads:
            raise RuntimeFailure(
                f"head-weight file has {hw.n_heads} heads, model has {weights.config.n_heads}"
            )
    k = _keep_count(args, seq.n_visual)
    decision = select(seq, args.mode, k, weights=weights, head_weights=hw,
                      rng=make_rng(args.seed), **_score_opts(args))
    out = out_dir(args)
    atomic_write_text(out / "decision.json", dumps_json(decision.to_dict()))
    if args.write_sequence:
        save_sequence(apply_decision(seq, decision), out / "pruned_sequence.json")
    print(f"kept {decision.keep_count}/{seq.n_visual} visual tokens "
          f"(pruning ratio {100 * (1 - decision.keep_count / seq.n_visual):.1f}%)")
    return 0


def cmd_eval(args) -> int:
    weights, meta = _load_model(args.model)
    builder = _builder(weights, meta, args.model)
    suites = _load_suites(args.suite, builder, args.seed)
    modes = args.modes
    hw = None
    if "hawk" in modes:
        if not args.weights:
            raise UsageError("--weights is required when evaluating mode hawk")
        hw = _load_head_weights(args.weights)
        if hw.n_heads != weights.config.n_heads:
            raise RuntimeFailure(
                f"head-weight file has {hw.n_heads} heads, model has {weights.config.n_heads}"
            )
    if args.prune_ratio:
        ratios, kind = args.prune_ratio, "prune"
    else:
        ratios, kind = args.keep_ratio or [1.0, 0.5, 0.2], "keep"
    for r in ratios:
        if not 0.0 <= r <= 1.0:
            raise UsageError(f"ratio {r} outside [0, 1]")
    rows = run_eval(weights, suites, modes, ratios, head_weights=hw, seed=args.seed,
                    ratio_kind=kind, score_opts=_score_opts(args))
    out = out_dir(args)
    atomic_write_text(out / "metrics.csv", metrics_csv(rows))
    atomic_write_text(out / "metrics.json", dumps_json({"rows": rows}))
    for r in rows:
        print(f"{r['suite']:<10} {r['mode']:<10} keep={r['keep_ratio']:.3f} "
              f"rel={r['relative_score']:.1f}% recall={r['recall']:.3f} div={r['divergence']:.4g}")
    return 0


def cmd_bench(args) -> int:
    if args.repetitions < 3:
        raise UsageError("--repetitions must be >= 3")
    if args.model:
        weights, _ = _load_model(args.model)
    else:
        weights = random_model(large_toy_config(), args.seed)
    hw = _load_head_weights(args.weights) if args.weights else None
    if hw is not None and hw.n_heads != weights.config.n_heads:
        raise RuntimeFailure(f"head-weight file has {hw.n_heads} heads, model has {weights.config.n_heads}")
    seq = random_sequence(weights.config, args.n_text, args.n_visual, make_rng(args.seed + 1))
    rows = []
    for p in args.prune_ratio:
        try:
            k = keep_count_from_ratio(args.n_visual, prune_ratio=p)
        except HawkError as exc:
            raise UsageError(str(exc)) from exc
        rep = bench_end_to_end(weights, seq, k, mode=args.mode, head_weights=hw,
                               repetitions=args.repetitions, steps=args.steps, seed=args.seed)
        rows.append(rep.to_dict())
    out = out_dir(args)
    atomic_write_text(out / "efficiency.json", dumps_json({"rows": rows}))
    print(f"{'prune':>6} {'kept':>6} {'full ms':>9} {'pruned ms':>10} {'speedup':>8} "
          f"{'flops':>7} {'cache':>7}")
    for r in rows:
        print(f"{r['pruning_ratio']:6.3f} {r['keep_count']:6d} {r['wallclock_full_ms']:9.2f} "
              f"{r['wallclock_pruned_ms']:10.2f} {r['speedup']:8.2f}x {r['flops_ratio']:7.3f} "
              f"{r['cache_ratio']:7.4f}")
    return 0


def _add_ratio_flags(p, multiple=False):
    g = p.add_mutually_exclusive_group()
    kw = {"nargs": "+"} if multiple else {}
    g.add_argument("--keep-ratio", type=float, help="fraction of visual tokens kept", **kw)
    g.add_argument("--prune-ratio", type=float, help="fraction of visual tokens removed", **kw)


def _add_score_flags(p):
    p.add_argument("--score-layer", type=int, default=0, help="layer whose projections score tokens")
    p.add_argument("--query-window", default="all", help="text rows used as queries: all, last:K, first:K")
    p.add_argument("--score-softmax", action="store_true", help="softmax the text-to-visual scores")
    p.add_argument("--score-rope", action="store_true", help="apply rotary embedding when scoring")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hawk", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output directory (default $HAWK_OUT_DIR or ./hawk_out)")

    p = sub.add_parser("gen-model", help="emit a seeded toy or copy-task model")
    common(p)
    p.add_argument("--kind", choices=("copy", "random"), default="copy")
    p.add_argument("--preset", choices=("small", "large"), default="small")
    p.add_argument("--n-layers", type=int, default=1)
    p.add_argument("--noise-heads", type=int, default=3)
    p.add_argument("--harmful-heads", type=int, default=0)
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("ablate", help="per-head visual ablation -> head weights")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--suite", action="append", required=True)
    p.add_argument("--layer-policy", choices=("first-layer", "all-layers"), default="first-layer")
    p.add_argument("--heads", help="head index or inclusive range A-B (default all)")
    p.add_argument("--samples", type=int, help="tasks per suite (overrides the suite file)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("prune", help="score and prune one sequence")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="sequence JSON file")
    p.add_argument("--weights", help="head-weight JSON (required for mode hawk)")
    p.add_argument("--mode", choices=MODES, default="hawk")
    p.add_argument("--write-sequence", action="store_true")
    _add_ratio_flags(p)
    _add_score_flags(p)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("eval", help="compare pruning modes on suites")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--suite", action="append", required=True)
    p.add_argument("--weights")
    p.add_argument("--modes", nargs="+", choices=MODES, default=["hawk", "random"])
    _add_ratio_flags(p, multiple=True)
    _add_score_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="end-to-end latency, FLOPs and KV-cache accounting")
    common(p)
    p.add_argument("--model", help="weight file (default: seeded large toy model)")
    p.add_argument("--weights")
    p.add_argument("--mode", choices=MODES, default="hawk")
    p.add_argument("--n-text", type=int, default=32)
    p.add_argument("--n-visual", type=int, default=1024)
    p.add_argument("--prune-ratio", type=float, nargs="+", default=[0.8])
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--steps", type=int, default=4)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hawk {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeFailure, HawkError, OSError) as exc:
        print(f"hawk {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
