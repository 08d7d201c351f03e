"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured runtime (run with `pytest tests/test_acceptance.py -v -s`).

Tolerances and runtime budgets are pinned here and nowhere else.
"""

import math
import time
from collections import Counter

import numpy as np
import pytest

from symcalc.controller import ToyEncoder, decode_switch, decode_weights, init_switch_params
from symcalc.datagen import (
    SwitchLabeledStream,
    sample_decoder_example,
    sample_expression_example,
    sample_switch_dataset,
)
from symcalc.harness import BenchConfig, run_benchmark
from symcalc.network import (
    PRIMITIVES,
    argmax_function,
    build_complete,
    dag_operator,
    evaluate,
    evaluate_batch,
    init_equal_probability,
    primitive,
    probability,
    probability_lower_bound,
    sample_arrays,
)
from symcalc.textio import (
    extract_numbers,
    match_places,
    matches,
    render_number,
    score_response,
    select_operands,
)
from symcalc.training import (
    TrainConfig,
    _decode_with_caches,
    decoder_loss_and_grad,
    loss_for_dags,
    reward_vector,
    switch_loss_and_grad,
    switch_scores,
    train_decoder,
    train_switch,
)
from oracles import assignment_to_dag, enumerate_assignments, is_tree

NET_A = build_complete([primitive(n) for n in ("add", "sub", "mul", "div")], 2, 1)
NET_B = build_complete([primitive(n) for n in ("sin", "add")], 1, 2)


def _random_weights(spec, seed):
    from symcalc.network import LayerWeights
    rng = np.random.default_rng(seed)
    return LayerWeights(mats=tuple(rng.normal(0, 1, size=s) for s in spec.weight_shapes()))


def _report(criterion, elapsed, detail):
    print(f"PASS criterion {criterion} ({elapsed:.1f}s): {detail}")


# -------------------------------------------------------------------------
# 1. probability oracle: enumeration, Monte-Carlo consistency, lower bound
# -------------------------------------------------------------------------

def test_criterion_1_probability_oracle():
    t0 = time.time()
    details = []
    for name, spec, seed in (("1-layer", NET_A, 3), ("2-layer", NET_B, 4)):
        weights = _random_weights(spec, seed)
        assignments = enumerate_assignments(spec)
        probs = {}
        for a in assignments:
            dag = assignment_to_dag(spec, a)
            p = probability(spec, weights, dag)
            q = probability_lower_bound(spec, weights, dag)
            assert q <= p + 1e-12
            if is_tree(spec, a):
                assert q == pytest.approx(p, abs=1e-12)
            key = tuple(sorted(a.items()))
            probs[key] = p
        total = sum(probs.values())
        assert total == pytest.approx(1.0, abs=1e-9)

        n = 100_000
        batch = sample_arrays(spec, weights, np.random.default_rng(99), n)
        counts = Counter()
        for i in range(n):
            key = []
            for s in range(1, spec.n_softmax_layers + 1):
                needed = batch.needed[s - 1][i]
                for row in range(spec.m_rows[s - 1]):
                    if needed[row]:
                        key.append((s, row, int(batch.choices[s - 1][i, row])))
            counts[tuple(key)] += 1
        for key, p in probs.items():
            if p < 0.01:
                continue
            flat = tuple((s, row, c) for (s, row), c in key)
            freq = counts[flat] / n
            sigma = math.sqrt(p * (1 - p) / n)
            assert abs(freq - p) < 4 * sigma, (key, p, freq)
        details.append(f"{name}: {len(assignments)} dags, sum(p)={total:.12f}")
    elapsed = time.time() - t0
    assert elapsed < 30
    _report(1, elapsed, "; ".join(details))


# -------------------------------------------------------------------------
# 2. equal-probability initialization uniformity
# -------------------------------------------------------------------------

def test_criterion_2_init_uniformity():
    t0 = time.time()
    ratios = []
    for spec in (NET_A, NET_B):
        weights = init_equal_probability(spec)
        qs = [
            probability_lower_bound(spec, weights, assignment_to_dag(spec, a))
            for a in enumerate_assignments(spec)
        ]
        ratio = max(qs) / min(qs)
        assert ratio == pytest.approx(1.0, abs=1e-9)
        ratios.append(ratio)
    elapsed = time.time() - t0
    assert elapsed < 10
    _report(2, elapsed, f"bound ratios {ratios[0]:.12f}, {ratios[1]:.12f}")


# -------------------------------------------------------------------------
# 3. gradient checks against central finite differences
# -------------------------------------------------------------------------

def _decoder_instance(seed):
    from symcalc.controller import init_decoder_params
    rng = np.random.default_rng(seed)
    params = init_decoder_params(NET_A, 3, 12, intermediate=6, seed=seed)
    for _, arr in params.arrays():
        arr += rng.normal(0, 0.3, size=arr.shape)
    h = rng.normal(0, 1, size=(3, 12))
    x = [float(rng.integers(2, 9)), float(rng.integers(2, 9))]
    return params, h, x, x[0] + x[1]


def test_criterion_3_gradient_checks():
    t0 = time.time()
    eps = 1e-6
    worst_dec = worst_sw = 0.0
    checked = 0
    for seed in range(50):
        params, h, x, y = _decoder_instance(seed)
        result = decoder_loss_and_grad(NET_A, params, h, x, y, n_samples=30, seed=seed)
        if result.stats["n_rewarded"] == 0:
            continue
        checked += 1
        weights, _ = _decode_with_caches(NET_A, params, h)
        batch = sample_arrays(NET_A, weights, np.random.default_rng(seed), 30)
        values, valid = evaluate_batch(NET_A, batch.choices, x)
        rewards = reward_vector(values, valid, y)
        rng = np.random.default_rng(seed + 10_000)
        grads = [arr for g in result.grads for _, arr in g.arrays()]
        for arr, grad in zip([a for _, a in params.arrays()], grads):
            flat, gflat = arr.ravel(), grad.ravel()
            for i in rng.choice(flat.size, size=min(3, flat.size), replace=False):
                orig = flat[i]
                flat[i] = orig + eps
                up = loss_for_dags(NET_A, params, h, batch, rewards)
                flat[i] = orig - eps
                down = loss_for_dags(NET_A, params, h, batch, rewards)
                flat[i] = orig
                fd = (up - down) / (2 * eps)
                if max(abs(gflat[i]), abs(fd)) > 1e-8:
                    worst_dec = max(worst_dec, abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd)))
    assert checked >= 50 * 0.8  # nearly every instance rewards something
    for seed in range(50):
        rng = np.random.default_rng(seed)
        params = init_switch_params(3, 12, intermediate=6, seed=seed)
        for _, arr in params.arrays():
            arr += rng.normal(0, 0.3, size=arr.shape)
        h = rng.normal(0, 1, size=(10, 3, 12))
        labels = rng.integers(0, 2, size=10)
        result = switch_loss_and_grad(params, h, labels)
        for (_, arr), (_, grad) in zip(params.arrays(), result.grads.arrays()):
            flat, gflat = arr.ravel(), grad.ravel()
            for i in rng.choice(flat.size, size=min(3, flat.size), replace=False):
                orig = flat[i]
                flat[i] = orig + eps
                up = switch_loss_and_grad(params, h, labels).loss
                flat[i] = orig - eps
                down = switch_loss_and_grad(params, h, labels).loss
                flat[i] = orig
                fd = (up - down) / (2 * eps)
                if max(abs(gflat[i]), abs(fd)) > 1e-8:
                    worst_sw = max(worst_sw, abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd)))
    assert worst_dec < 1e-4
    assert worst_sw < 1e-4
    elapsed = time.time() - t0
    assert elapsed < 120
    _report(3, elapsed, f"max rel err decoder {worst_dec:.2e}, switch {worst_sw:.2e}")


# -------------------------------------------------------------------------
# 4. toy end-to-end decoder: operator selection on the ten primitives
# -------------------------------------------------------------------------

def _held_out_arith(n, seed_base):
    out = []
    seed = seed_base
    while len(out) < n:
        ex = sample_decoder_example(seed)
        seed += 1
        if ex.category in ("simple-arith", "complex-arith"):
            out.append(ex)
    return out

def test_criterion_4_end_to_end_decoder(provider, spec10, trained_decoder):
    t0 = time.time()
    params = trained_decoder["params"]
    held_out = _held_out_arith(1000, seed_base=990_000)
    correct_op = 0
    match_failures = 0
    for ex in held_out:
        states = provider.encode(ex.text)
        weights = decode_weights(params, states.at(states.n_tokens - 1))
        best = argmax_function(spec10, weights, n_samples=100, rng_seed=17)
        if dag_operator(spec10, best.dag) != ex.operator:
            continue
        correct_op += 1
        x, _ = select_operands(extract_numbers(ex.text), spec10.n_inputs)
        value = evaluate(spec10, best.dag, x)
        assert value is not None
        if not matches(render_number(value), ex.answer):
            match_failures += 1
    accuracy = correct_op / len(held_out)
    assert accuracy >= 0.99
    assert match_failures == 0
    elapsed = time.time() - t0 + trained_decoder["seconds"]
    assert elapsed < 600
    _report(4, elapsed, f"operator selection {accuracy:.4f} on 1000 prompts, "
                        f"match rule 100% of {correct_op} correct")


# -------------------------------------------------------------------------
# 5. two-layer multistep analog
# -------------------------------------------------------------------------

def test_criterion_5_two_layer_multistep(provider):
    t0 = time.time()
    spec = build_complete([primitive(n) for n in ("add", "sub", "mul", "div")],
                          n_inputs=3, n_layers=2)
    train = [sample_expression_example(s, max_ops=2) for s in range(20_000, 24_000)]
    held = [sample_expression_example(s, max_ops=2) for s in range(90_000, 91_000)]
    config = TrainConfig(learning_rate=3e-4, weight_decay=0.01, effective_batch=8,
                         samples_per_token=2000, max_steps=10 ** 9, seed=0)
    params, _ = train_decoder(config, provider, spec, [(train, 800)], intermediate=512)
    hits = 0
    for ex in held:
        states = provider.encode(ex.text)
        weights = decode_weights(params, states.at(states.n_tokens - 1))
        best = argmax_function(spec, weights, n_samples=100, rng_seed=23)
        x, _ = select_operands(extract_numbers(ex.text), spec.n_inputs)
        value = evaluate(spec, best.dag, x)
        if value is not None and abs(value - ex.answer) <= max(1e-9, 1e-9 * abs(ex.answer)):
            hits += 1
    accuracy = hits / len(held)
    assert accuracy >= 0.95
    elapsed = time.time() - t0
    assert elapsed < 1800
    _report(5, elapsed, f"dag selection {accuracy:.4f} on 1000 expression prompts")


# -------------------------------------------------------------------------
# 6. switch quality with permutation control
# -------------------------------------------------------------------------

def _masked_f1(provider, params, streams):
    tp = fp = fn = 0
    for s in streams:
        h = provider.encode(s.text)
        pred = (switch_scores(params, h.states) > 0.5) & s.mask.astype(bool)
        truth = s.labels.astype(bool) & s.mask.astype(bool)
        tp += int((pred & truth).sum())
        fp += int((pred & ~truth).sum())
        fn += int((~pred & truth).sum())
    precision = tp / max(tp + fp, 1)
    recall = tp / max(tp + fn, 1)
    return 2 * precision * recall / max(precision + recall, 1e-12)


def test_criterion_6_switch_quality(provider, trained_switch):
    t0 = time.time()
    params = trained_switch["params"]
    held_out = sample_switch_dataset(150, seed=5050)
    f1 = _masked_f1(provider, params, held_out)
    assert f1 >= 0.95

    rng = np.random.default_rng(0)
    permuted = []
    for s in trained_switch["train_streams"]:
        labels = s.labels.copy()
        idx = np.nonzero(s.mask)[0]
        labels[idx] = rng.permutation(labels[idx])
        permuted.append(SwitchLabeledStream(s.text, labels, s.mask, s.n_marked, s.seed))
    config = TrainConfig(learning_rate=6e-4, weight_decay=0.01, effective_batch=8,
                         samples_per_token=1, max_steps=1000, seed=1)
    control, _ = train_switch(config, provider, permuted)
    control_f1 = _masked_f1(provider, control, held_out)
    pos_rate = (
        sum(int((s.labels * s.mask).sum()) for s in held_out)
        / sum(int(s.mask.sum()) for s in held_out)
    )
    chance = 2 * pos_rate / (1 + pos_rate)  # F1 of an uninformed all-positive guesser
    assert control_f1 <= chance + 0.05
    elapsed = time.time() - t0 + trained_switch["seconds"]
    assert elapsed < 300
    _report(6, elapsed, f"F1 {f1:.4f}, permuted control {control_f1:.4f} "
                        f"(chance bound {chance:.3f})")


# -------------------------------------------------------------------------
# 7. answer-matching rule conformance
# -------------------------------------------------------------------------

def test_criterion_7_matching_rule():
    t0 = time.time()
    # integers require two places
    assert match_places("2401") == 2
    assert matches("2401", 2401.0)
    assert matches("216", 216.0)
    assert not matches("2401", 2401.02)
    # decimal-place clip into [2, 5]
    assert match_places("68.4") == 2
    assert match_places("1.234") == 3
    assert match_places("1.23456789") == 5
    # the published negative: one decimal place, clipped to 2, diff 0.02
    assert not matches("68.4", 68.42)
    # strictness at the boundary
    assert not matches("1.00", 1.01)
    # published positives score as responses
    assert score_response("2401. 7 ^ 4 = 7 x 7 x 7 x 7 = 2401", 2401.0)
    assert score_response("216. 6 ^ 3 = 6 x 6 x 6 = 216", 216.0)
    assert score_response("63.074. 63.0 + 0.074 = 63.074. So the answer is 63.074.", 63.074)
    assert score_response("-1. Six minus seven is equal to -1.", -1.0)
    assert matches("3.14159", math.pi)
    elapsed = time.time() - t0
    assert elapsed < 1
    _report(7, elapsed, "integer d=2, clip [2,5], strict inequality, published cases")


# -------------------------------------------------------------------------
# 8. harness ceiling: perfect-calculator baseline
# -------------------------------------------------------------------------

def test_criterion_8_harness_ceiling(tmp_path):
    t0 = time.time()
    config = BenchConfig(
        tasks=("add", "sub", "mul", "div", "sqrt", "exp", "log", "sin", "cos"),
        digits=7, n_items=1000, seed=0, answerer="perfect",
    )
    report = run_benchmark(config, out_dir=tmp_path / "first")
    for task in config.tasks:
        row = report.per_task[task]
        assert row["accuracy_pct"] == 100.0, task
        assert row["sem_pct"] == 0.0, task
        assert row["mean_relative_error"] <= 1e-10, task
        assert row["n"] == 1000
    run_benchmark(config, out_dir=tmp_path / "second")
    for name in ("report.txt", "records.jsonl", "config.json"):
        assert (tmp_path / "first" / name).read_bytes() == \
               (tmp_path / "second" / name).read_bytes(), name
    elapsed = time.time() - t0
    assert elapsed < 120
    _report(8, elapsed, "9 tasks x 1000 items at 100.0 +/- 0.0, reruns byte-identical")
