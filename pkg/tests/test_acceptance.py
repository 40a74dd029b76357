"""Acceptance suite: one test per criterion, each reporting a pass/fail line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines
appear in the "acceptance criteria" section at the end of the run.
"""

import json
import time
from fractions import Fraction

import numpy as np

from conftest import ACCEPTANCE_RESULTS, random_instance
from hawk.ablation import AblationRunSpec, run_ablation
from hawk.cli import main
from hawk.evaluation import (
    CopyTaskBuilder,
    bench_end_to_end,
    build_suite,
    copy_task_config,
    evaluate_suite,
    large_toy_config,
    needle_recall,
    output_divergence,
    prefill_flops,
    random_model,
    random_sequence,
)
from hawk.model import HeadVisualMask, decode_greedy, kv_cache_bytes
from hawk.pruner import (
    AblationTable,
    HeadWeightVector,
    aggregate_importance,
    apply_decision,
    baseline_select,
    compute_head_weights,
    format_ratio,
    hawk_select,
    keep_count_from_ratio,
    select_tokens,
    text_guided_scores,
)
from hawk.tensor import make_rng
from oracles import naive_head_weights, naive_importance, naive_scores, naive_top_k


def record(cid, ok, detail):
    ACCEPTANCE_RESULTS[cid] = (bool(ok), detail)
    print(f"criterion {cid}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def ablated_weights(builder, weights, n_tasks=8, seed=0):
    suites = [build_suite({"name": n, "seed": i, "n_tasks": n_tasks}, builder, seed=seed)
              for i, n in enumerate(("a", "b"))]
    return run_ablation(AblationRunSpec("copy", ["a", "b"], seed=seed), weights, suites).weights


def test_criterion_1_pipeline_matches_scalar_reference():
    t0 = time.perf_counter()
    worst_c = worst_i = 0.0
    mismatched = 0
    for seed in range(100):
        weights, seq, w, keep = random_instance(seed)
        cfg = weights.config
        c = text_guided_scores(seq, weights)
        c_ref = naive_scores(seq.text_embeddings, seq.visual_embeddings,
                             [weights.head_wq(0, i) for i in range(cfg.n_heads)],
                             [weights.head_wk(0, i) for i in range(cfg.n_heads)], cfg.d_k)
        imp = aggregate_importance(c, w)
        imp_ref = naive_importance(c_ref, w.tolist())
        worst_c = max(worst_c, float(np.abs(c - np.asarray(c_ref)).max()))
        worst_i = max(worst_i, float(np.abs(imp - np.asarray(imp_ref)).max()))
        kept = hawk_select(seq, weights, HeadWeightVector(w), keep).kept.tolist()
        mismatched += kept != naive_top_k(imp_ref, keep)
    elapsed = time.perf_counter() - t0
    ok = mismatched == 0 and worst_c <= 1e-9 and worst_i <= 1e-9 and elapsed < 10
    record(1, ok, f"100 instances, {mismatched} kept-set mismatches, max|dC|={worst_c:.1e}, "
                  f"max|dI|={worst_i:.1e}, {elapsed:.2f}s")


def test_criterion_2_head_weight_properties():
    rng = make_rng(2024)
    failures = []
    for trial in range(200):
        n_h, n_d = int(rng.integers(1, 9)), int(rng.integers(1, 6))
        base = rng.uniform(0.3, 1.0, n_d)
        scores = base - rng.uniform(-0.3, 0.6, (n_h, n_d))
        w = compute_head_weights(AblationTable([str(j) for j in range(n_d)], base, scores)).weights
        drops = base[None, :] - scores
        shifted = compute_head_weights(
            AblationTable([str(j) for j in range(n_d)], np.zeros(n_d), -(drops + rng.uniform(-3, 3, n_d)))
        ).weights
        scaled = compute_head_weights(
            AblationTable([str(j) for j in range(n_d)], np.zeros(n_d), -(drops * rng.uniform(0.1, 9, n_d)))
        ).weights
        if (w < 0).any() or abs(w.sum() - 1) > 1e-9:
            failures.append((trial, "simplex"))
        if np.abs(shifted - w).max() > 1e-12 or np.abs(scaled - w).max() > 1e-12:
            failures.append((trial, "invariance"))
        if np.abs(w - naive_head_weights(base.tolist(), scores.tolist())).max() > 1e-12:
            failures.append((trial, "oracle"))
    flat = compute_head_weights(AblationTable(["a"], [1.0], [[0.5], [0.5], [0.5]]))
    hand = compute_head_weights(AblationTable(["a"], [3.0], [[0.0], [2.0], [3.0]])).weights
    ok = (not failures and flat.fallback_uniform and flat.weights.tolist() == [1 / 3] * 3
          and np.allclose(hand, [0.75, 0.25, 0.0], atol=1e-15, rtol=0))
    record(2, ok, f"200 tables, failures={failures[:3]}, fallback={flat.fallback_uniform}, "
                  f"hand={hand.round(4).tolist()}")


def test_criterion_3_copy_head_recovered():
    strict_max = 0
    worst_masked = 0.0
    cfg = copy_task_config()
    chance = 1 / cfg.vocab_size
    for seed in range(20):
        builder = CopyTaskBuilder.create(cfg, make_rng(seed), noise_heads=3)
        weights = builder.build_weights()
        w = ablated_weights(builder, weights, seed=seed).weights
        strict_max += bool(w[0] > np.delete(w, 0).max())
        suite = build_suite({"name": "chk", "n_tasks": 16}, builder, seed=seed + 100)
        worst_masked = max(worst_masked, evaluate_suite(weights, suite, [HeadVisualMask.first_layer(0)]))
    ok = strict_max >= 19 and worst_masked <= chance + 0.1
    record(3, ok, f"copy head strict max in {strict_max}/20 runs; worst masked accuracy "
                  f"{worst_masked:.3f} (chance {chance:.3f})")


def test_criterion_4_needle_retention():
    cfg = copy_task_config()
    misses = []
    for seed in range(50):
        builder = CopyTaskBuilder.create(cfg, make_rng(1000 + seed))
        weights = builder.build_weights()
        hw = ablated_weights(builder, weights, seed=seed)
        task = builder.make_task(make_rng(seed), n_visual=64)
        imp = aggregate_importance(text_guided_scores(task.seq, weights), hw)
        for k in range(1, 33):
            if needle_recall(select_tokens(imp, k), task) != 1.0:
                misses.append((seed, k))
    builder = CopyTaskBuilder.create(cfg, make_rng(7))
    task = builder.make_task(make_rng(7), n_visual=64)
    rng = make_rng(77)
    random_recall = float(np.mean([needle_recall(baseline_select(task.seq, "random", 32, rng), task)
                                   for _ in range(10_000)]))
    ok = not misses and 0.44 <= random_recall <= 0.56
    record(4, ok, f"HAWK misses {len(misses)}/1600 (task, keep) cases; "
                  f"random recall at keep 32 = {random_recall:.4f}")


def test_criterion_5_divergence_ordering():
    cfg = copy_task_config()
    builder = CopyTaskBuilder.create(cfg, make_rng(5))
    weights = builder.build_weights()
    hw = ablated_weights(builder, weights)
    rng = make_rng(55)
    tasks = [builder.make_task(make_rng(500 + i)) for i in range(32)]
    medians = {}
    keep_all_max = 0.0
    for prune in (0.5, 0.8):
        divs = {"hawk": [], "random": []}
        for task in tasks:
            full = decode_greedy(weights, task.seq, 2)
            k = keep_count_from_ratio(task.seq.n_visual, prune_ratio=prune)
            for mode, d in (("hawk", hawk_select(task.seq, weights, hw, k)),
                            ("random", baseline_select(task.seq, "random", k, rng))):
                divs[mode].append(output_divergence(full, decode_greedy(weights, apply_decision(task.seq, d), 2)))
        medians[prune] = (float(np.median(divs["hawk"])), float(np.median(divs["random"])))
    for task in tasks:
        full = decode_greedy(weights, task.seq, 2)
        d = hawk_select(task.seq, weights, hw, task.seq.n_visual)
        keep_all_max = max(keep_all_max, output_divergence(full, decode_greedy(weights, apply_decision(task.seq, d), 2)))
    ok = all(h < r for h, r in medians.values()) and keep_all_max == 0.0
    detail = "; ".join(f"prune {p:.0%}: hawk {h:.2e} < random {r:.2e}" for p, (h, r) in medians.items())
    record(5, ok, f"32 tasks, {detail}; keep-all divergence {keep_all_max}")


def test_criterion_6_position_agnostic():
    rng = make_rng(6)
    bad_cols = bad_sets = 0
    for trial in range(50):
        weights, seq, w, keep = random_instance(600 + trial)
        perm = rng.permutation(seq.n_visual)
        c = text_guided_scores(seq, weights)
        permuted = seq.with_visual(seq.visual_embeddings[perm])
        bad_cols += not np.array_equal(text_guided_scores(permuted, weights), c[:, perm])
        base = set(hawk_select(seq, weights, HeadWeightVector(w), keep).kept.tolist())
        mapped = set(perm[hawk_select(permuted, weights, HeadWeightVector(w), keep).kept].tolist())
        bad_sets += mapped != base
    record(6, bad_cols == 0 and bad_sets == 0,
           f"50 permutations, {bad_cols} column mismatches, {bad_sets} kept-set mismatches")


def test_criterion_7_ratio_anchors():
    got = [format_ratio(1296, k) for k in (512, 256, 128)]
    ok = got == ["60.5%", "80.2%", "90.1%"] and keep_count_from_ratio(1296, prune_ratio=0.802) == 256
    record(7, ok, f"M=1296 keep 512/256/128 -> {'/'.join(got)}")


def test_criterion_8_efficiency_accounting():
    t0 = time.perf_counter()
    cfg = large_toy_config()
    n, m = 32, 1024
    cache_exact = all(
        Fraction(kv_cache_bytes(cfg, n + k), kv_cache_bytes(cfg, n + m)) == Fraction(k + n, m + n)
        for k in range(1, m + 1)
    )
    flops = [prefill_flops(cfg, n, k) for k in range(0, m + 1)]
    flops_monotone = all(a < b for a, b in zip(flops, flops[1:]))
    weights = random_model(cfg, 0)
    seq = random_sequence(cfg, n, m, make_rng(1))
    keep = keep_count_from_ratio(m, prune_ratio=0.8)
    rep = bench_end_to_end(weights, seq, keep, mode="hawk", repetitions=5, steps=4)
    elapsed = time.perf_counter() - t0
    ok = cache_exact and flops_monotone and rep.speedup > 1.2 and elapsed < 120
    record(8, ok, f"cache ratio exact={cache_exact}, FLOPs strictly monotone={flops_monotone}, "
                  f"speedup {rep.speedup:.2f}x at 80% (median of {rep.repetitions}: "
                  f"{rep.wallclock_full_ms:.1f} ms -> {rep.wallclock_pruned_ms:.1f} ms), {elapsed:.1f}s total")


def _mask_timing(obj):
    if isinstance(obj, dict):
        return {k: _mask_timing(v) for k, v in obj.items() if k not in ("timing", "wallclock_ms")}
    if isinstance(obj, list):
        return [_mask_timing(v) for v in obj]
    return obj


def test_criterion_9_cli_determinism(tmp_path):
    out = tmp_path / "run"
    names = ("ablation_report.json", "head_weights.json", "decision.json", "metrics.json")

    def run_all():
        assert main(["gen-model", "--seed", "9", "--out", str(out)]) == 0
        model, suites = str(out / "model.bin"), ["--suite", str(out / "suite_a.json"),
                                                 "--suite", str(out / "suite_b.json")]
        assert main(["ablate", "--model", model, *suites, "--seed", "9", "--out", str(out)]) == 0
        assert main(["prune", "--model", model, "--input", str(out / "sequence.json"),
                     "--weights", str(out / "head_weights.json"), "--keep-ratio", "0.25",
                     "--seed", "9", "--out", str(out)]) == 0
        assert main(["eval", "--model", model, *suites, "--weights", str(out / "head_weights.json"),
                     "--modes", "hawk", "random", "--keep-ratio", "0.5", "0.2", "--seed", "9",
                     "--out", str(out)]) == 0
        # same paths both times, so the recorded model path cannot differ
        return {name: (out / name).read_bytes() for name in names + ("model.bin",)}

    a, b = run_all(), run_all()
    differing = []
    for name in names:
        ja, jb = (json.loads(blobs[name]) for blobs in (a, b))
        if json.dumps(_mask_timing(ja), sort_keys=True) != json.dumps(_mask_timing(jb), sort_keys=True):
            differing.append(name)
    for name in ("head_weights.json", "decision.json", "model.bin"):
        if a[name] != b[name]:
            differing.append(name)
    record(9, not differing, f"ablate/prune/eval reruns; differing outputs: {differing or 'none'}")
