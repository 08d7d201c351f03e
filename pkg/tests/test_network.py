import numpy as np
import pytest

from symcalc.errors import ConfigError, FormatError, StructuralError
from symcalc.network import (
    LayerWeights,
    NetSpec,
    SampledDag,
    argmax_function,
    build_complete,
    canonical_encoding,
    dag_expression,
    dag_operator,
    evaluate,
    init_equal_probability,
    load_network,
    primitive,
    probability,
    probability_lower_bound,
    sample,
    save_network,
)
from oracles import (
    assignment_to_dag,
    enumerate_assignments,
    is_tree,
    oracle_lower_bound,
    oracle_probability,
)

SIN = primitive("sin")
COS = primitive("cos")
ADD = primitive("add")
ARITH4 = [primitive(n) for n in ("add", "sub", "mul", "div")]


def plain_net(prims, n_inputs, n_layers):
    """Standard (non-complete) construction: one copy of each primitive per layer."""
    return NetSpec(
        n_inputs=n_inputs,
        layers=tuple(tuple(prims) for _ in range(n_layers)),
        complete=False,
        base_primitives=tuple(prims),
    )


def random_weights(spec, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return LayerWeights(mats=tuple(rng.normal(0, scale, size=s) for s in spec.weight_shapes()))


# ---------------------------------------------------------------- construction

def test_complete_two_layer_unary_represents_seven_functions():
    spec = build_complete([SIN, COS], n_inputs=1, n_layers=2)
    exprs = {
        dag_expression(spec, assignment_to_dag(spec, a))
        for a in enumerate_assignments(spec)
    }
    assert exprs == {
        "x0", "sin(x0)", "cos(x0)",
        "sin(sin(x0))", "sin(cos(x0))", "cos(sin(x0))", "cos(cos(x0))",
    }


def test_single_layer_binary_has_two_argument_rows_and_no_repetition():
    spec = build_complete([ADD], n_inputs=2, n_layers=1)
    assert spec.m_rows[0] == 2
    assert len(spec.layers[0]) == 1  # A**0 copies


def test_repetition_counts_follow_max_arity():
    spec = build_complete([ADD, SIN], n_inputs=1, n_layers=2)
    # max arity 2: first layer doubled, last layer single copies
    assert [p.name for p in spec.layers[0]] == ["add", "add", "sin", "sin"]
    assert [p.name for p in spec.layers[1]] == ["add", "sin"]
    assert spec.m_rows == (6, 3, 1)


def test_skip_connections_widen_source_pools():
    spec = build_complete([ADD, SIN], n_inputs=1, n_layers=2)
    assert spec.pool_size(1) == 1          # inputs only
    assert spec.pool_size(2) == 1 + 4      # inputs + image layer 1
    assert spec.pool_size(3) == 1 + 4 + 2  # + image layer 2


def test_build_complete_rejects_bad_config():
    with pytest.raises(ConfigError):
        build_complete([], n_inputs=1, n_layers=1)
    with pytest.raises(ConfigError):
        build_complete([SIN], n_inputs=1, n_layers=0)


# ---------------------------------------------------------------- sampling

def test_uniform_plain_net_samples_sin_half_the_time():
    spec = plain_net([SIN, COS], n_inputs=1, n_layers=1)
    weights = LayerWeights(mats=tuple(np.zeros(s) for s in spec.weight_shapes()))
    draws = sample(spec, weights, rng_seed=7, count=100_000)
    freq = np.mean([dag_operator(spec, s.dag) == "sin" for s in draws])
    sigma = np.sqrt(0.5 * 0.5 / 100_000)
    assert abs(freq - 0.5) < 3 * sigma


def test_saturated_row_is_chosen_essentially_always():
    spec = build_complete([ADD], n_inputs=2, n_layers=1)
    mats = [np.zeros(s) for s in spec.weight_shapes()]
    mats[-1][0, 2] = 40.0  # output row: boost the add node over both inputs
    weights = LayerWeights(mats=tuple(mats))
    draws = sample(spec, weights, rng_seed=3, count=20_000)
    freq = np.mean([s.dag.choices[-1][0] == 2 for s in draws])
    assert freq > 0.999


def test_three_layer_dag_probability_is_edge_product():
    # wiring that computes sin(sin(x1) * exp(x0)) on a depth-3 net
    prims = [primitive(n) for n in ("sin", "exp", "mul")]
    spec = build_complete(prims, n_inputs=2, n_layers=3)
    weights = random_weights(spec, seed=11)
    # layer 1: use the first sin copy on x1 and the first exp copy on x0
    names1 = [p.name for p in spec.layers[1 - 1]]
    sin1, exp1 = names1.index("sin"), names1.index("exp")
    # layer 2: one mul taking (sin1, exp1); layer 3: sin of that mul
    names2 = [p.name for p in spec.layers[2 - 1]]
    mul2 = names2.index("mul")
    names3 = [p.name for p in spec.layers[3 - 1]]
    sin3 = names3.index("sin")

    def pool_col(s, key):
        return spec.source_pools[s - 1].index(key)

    assignment = {
        (1, spec.offsets[0][sin1]): pool_col(1, (0, 1)),   # sin <- x1
        (1, spec.offsets[0][exp1]): pool_col(1, (0, 0)),   # exp <- x0
        (2, spec.offsets[1][mul2]): pool_col(2, (1, sin1)),
        (2, spec.offsets[1][mul2] + 1): pool_col(2, (1, exp1)),
        (3, spec.offsets[2][sin3]): pool_col(3, (2, mul2)),
        (4, 0): pool_col(4, (3, sin3)),
    }
    dag = assignment_to_dag(spec, assignment)
    assert dag_expression(spec, dag) == "sin(mul(sin(x1), exp(x0)))"
    x = [0.37, -1.2]
    expected = np.sin(np.sin(x[1]) * np.exp(x[0]))
    assert evaluate(spec, dag, x) == pytest.approx(expected, rel=1e-12)
    assert probability(spec, weights, dag) == pytest.approx(
        oracle_probability(spec, weights, assignment), rel=1e-12
    )


def test_sample_rejects_mismatched_weights():
    spec = build_complete([ADD], n_inputs=2, n_layers=1)
    other = build_complete(ARITH4, n_inputs=2, n_layers=1)
    with pytest.raises(StructuralError):
        sample(spec, random_weights(other), rng_seed=0, count=1)


def test_same_seed_same_stream():
    spec = build_complete(ARITH4, n_inputs=2, n_layers=1)
    weights = random_weights(spec, seed=5)
    a = sample(spec, weights, rng_seed=123, count=500)
    b = sample(spec, weights, rng_seed=123, count=500)
    assert [s.dag for s in a] == [s.dag for s in b]
    assert [s.log_prob for s in a] == [s.log_prob for s in b]


# ---------------------------------------------------------------- evaluation

def test_identity_passthrough_returns_input():
    spec = build_complete([SIN], n_inputs=1, n_layers=1)
    passthrough = assignment_to_dag(spec, {(2, 0): 0})
    assert evaluate(spec, passthrough, [6.0]) == 6.0


def test_addition_dag_adds():
    spec = build_complete(ARITH4, n_inputs=2, n_layers=1)
    add_node = [p.name for p in spec.layers[0]].index("add")
    off = spec.offsets[0][add_node]
    dag = assignment_to_dag(spec, {
        (1, off): 0,
        (1, off + 1): 1,
        (2, 0): spec.source_pools[1].index((1, add_node)),
    })
    assert evaluate(spec, dag, [6.0, 7.0]) == 13.0


def test_division_by_zero_yields_invalid_marker():
    spec = build_complete(ARITH4, n_inputs=2, n_layers=1)
    div_node = [p.name for p in spec.layers[0]].index("div")
    off = spec.offsets[0][div_node]
    dag = assignment_to_dag(spec, {
        (1, off): 0,
        (1, off + 1): 1,
        (2, 0): spec.source_pools[1].index((1, div_node)),
    })
    assert evaluate(spec, dag, [1.0, 0.0]) is None


def test_invalid_dangling_edges_do_not_invalidate_output():
    # dag passes x0 straight through while a dangling sqrt row points at a
    # negative input; the represented function must still evaluate
    spec = build_complete([primitive("sqrt")], n_inputs=1, n_layers=1)
    dag = SampledDag(choices=((0,), (0,)))  # sqrt arg <- x0, output <- x0
    assert evaluate(spec, dag, [-4.0]) == -4.0


# ---------------------------------------------------------------- probabilities

def test_uniform_plain_net_probability_half():
    spec = plain_net([SIN, COS], n_inputs=1, n_layers=1)
    weights = LayerWeights(mats=tuple(np.zeros(s) for s in spec.weight_shapes()))
    sin_dag = assignment_to_dag(spec, {(1, 0): 0, (2, 0): 0})
    assert probability(spec, weights, sin_dag) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_enumerated_probabilities_sum_to_one(seed):
    spec = build_complete(ARITH4, n_inputs=2, n_layers=1)
    weights = random_weights(spec, seed=seed)
    assignments = enumerate_assignments(spec)
    total = sum(probability(spec, weights, assignment_to_dag(spec, a)) for a in assignments)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_probability_matches_oracle_on_two_layer_net():
    spec = build_complete([SIN, ADD], n_inputs=1, n_layers=2)
    weights = random_weights(spec, seed=9)
    for a in enumerate_assignments(spec):
        dag = assignment_to_dag(spec, a)
        assert probability(spec, weights, dag) == pytest.approx(
            oracle_probability(spec, weights, a), rel=1e-10
        )


def test_lower_bound_never_exceeds_probability_and_matches_oracle():
    spec = build_complete([SIN, ADD], n_inputs=1, n_layers=2)
    weights = random_weights(spec, seed=21)
    for a in enumerate_assignments(spec):
        dag = assignment_to_dag(spec, a)
        p = probability(spec, weights, dag)
        q = probability_lower_bound(spec, weights, dag)
        assert q <= p + 1e-12
        assert q == pytest.approx(oracle_lower_bound(spec, weights, a), rel=1e-10)
        if is_tree(spec, a):
            assert q == pytest.approx(p, abs=1e-12)


def test_shared_subgraph_suppresses_bound_by_shared_path_probability():
    # output <- add(sin_0, sin_0): the sin node feeds both argument rows,
    # so the bound double-counts sin's own incoming edge
    spec = build_complete([SIN, ADD], n_inputs=1, n_layers=2)
    weights = random_weights(spec, seed=2)
    add2 = [p.name for p in spec.layers[1]].index("add")
    sin1 = [p.name for p in spec.layers[0]].index("sin")
    off = spec.offsets[1][add2]
    col = spec.source_pools[1].index((1, sin1))
    assignment = {
        (1, spec.offsets[0][sin1]): 0,
        (2, off): col,
        (2, off + 1): col,
        (3, 0): spec.source_pools[2].index((2, add2)),
    }
    dag = assignment_to_dag(spec, assignment)
    p = probability(spec, weights, dag)
    q = probability_lower_bound(spec, weights, dag)
    sin_row = spec.offsets[0][sin1]
    e = np.exp(weights.mats[0][sin_row] - weights.mats[0][sin_row].max())
    shared_path = (e / e.sum())[0]
    assert q == pytest.approx(p * shared_path, rel=1e-10)


def test_passthrough_bound_equals_probability():
    spec = build_complete([SIN], n_inputs=1, n_layers=1)
    weights = random_weights(spec, seed=4)
    dag = assignment_to_dag(spec, {(2, 0): 0})
    assert probability_lower_bound(spec, weights, dag) == pytest.approx(
        probability(spec, weights, dag), abs=1e-15
    )


# ---------------------------------------------------------------- initialization

def test_first_layer_init_is_all_zero():
    spec = build_complete(ARITH4, n_inputs=2, n_layers=1)
    weights = init_equal_probability(spec)
    assert np.all(weights.mats[0] == 0.0)


@pytest.mark.parametrize("prims,n_inputs,n_layers", [
    (ARITH4, 2, 1),
    ([SIN, ADD], 1, 2),
    ([SIN, COS], 1, 2),
])
def test_equal_probability_init_makes_bound_uniform(prims, n_inputs, n_layers):
    spec = build_complete(prims, n_inputs, n_layers)
    weights = init_equal_probability(spec)
    qs = [
        probability_lower_bound(spec, weights, assignment_to_dag(spec, a))
        for a in enumerate_assignments(spec)
    ]
    assert max(qs) / min(qs) == pytest.approx(1.0, abs=1e-9)


def test_equal_probability_init_sums_to_one():
    spec = build_complete([SIN, ADD], n_inputs=1, n_layers=2)
    weights = init_equal_probability(spec)
    total = sum(
        probability(spec, weights, assignment_to_dag(spec, a))
        for a in enumerate_assignments(spec)
    )
    assert total == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- argmax

def test_argmax_returns_saturated_dag():
    spec = build_complete([ADD], n_inputs=2, n_layers=1)
    mats = [np.zeros(s) for s in spec.weight_shapes()]
    mats[0][0, 0] = 40.0
    mats[0][1, 1] = 40.0
    mats[-1][0, 2] = 40.0
    weights = LayerWeights(mats=tuple(mats))
    best = argmax_function(spec, weights, n_samples=50, rng_seed=0)
    assert dag_expression(spec, best.dag) == "add(x0, x1)"
    assert evaluate(spec, best.dag, [6.0, 7.0]) == 13.0


def test_argmax_is_deterministic_and_in_enumerated_set():
    spec = build_complete(ARITH4, n_inputs=2, n_layers=1)
    weights = init_equal_probability(spec)
    first = argmax_function(spec, weights, n_samples=100, rng_seed=42)
    second = argmax_function(spec, weights, n_samples=100, rng_seed=42)
    assert canonical_encoding(spec, first.dag) == canonical_encoding(spec, second.dag)
    all_encodings = {
        canonical_encoding(spec, assignment_to_dag(spec, a))
        for a in enumerate_assignments(spec)
    }
    assert canonical_encoding(spec, first.dag) in all_encodings


def test_function_sample_log_prob_matches_exact_probability():
    spec = build_complete([SIN, ADD], n_inputs=1, n_layers=2)
    weights = random_weights(spec, seed=13)
    for s in sample(spec, weights, rng_seed=1, count=200):
        assert np.exp(s.log_prob) == pytest.approx(
            probability(spec, weights, s.dag), rel=1e-10
        )
        assert 0.0 < np.exp(s.log_prob) <= 1.0


# ---------------------------------------------------------------- checkpoint io

def test_network_checkpoint_roundtrip_is_byte_identical(tmp_path):
    spec = build_complete(ARITH4, n_inputs=2, n_layers=1)
    weights = random_weights(spec, seed=17)
    p1, p2 = tmp_path / "a.ocnw", tmp_path / "b.ocnw"
    save_network(p1, spec, weights)
    spec2, weights2 = load_network(p1)
    assert spec2 == spec
    for m1, m2 in zip(weights.mats, weights2.mats):
        assert np.array_equal(m1, m2)
    save_network(p2, spec2, weights2)
    assert p1.read_bytes() == p2.read_bytes()


def test_network_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ocnw"
    path.write_bytes(b"WXYZ" + b"\x00" * 64)
    with pytest.raises(FormatError):
        load_network(path)


def test_network_checkpoint_rejects_truncation(tmp_path):
    spec = build_complete([ADD], n_inputs=2, n_layers=1)
    path = tmp_path / "t.ocnw"
    save_network(path, spec, init_equal_probability(spec))
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 7])
    with pytest.raises(FormatError):
        load_network(path)


def test_init_per_edge_products_are_constant_within_each_layer():
    # the sweep's working invariant: after assignment, q_source * softmax(w)
    # is the same number for every candidate source of a softmax layer
    spec = build_complete([SIN, ADD], n_inputs=1, n_layers=2)
    weights = init_equal_probability(spec)
    q_img = [np.ones(spec.n_inputs)]
    for s in range(1, spec.n_softmax_layers + 1):
        pool_q = np.array([q_img[k][i] for k, i in spec.source_pools[s - 1]])
        mat = weights.mats[s - 1]
        sm = np.exp(mat - mat.max(axis=1, keepdims=True))
        sm /= sm.sum(axis=1, keepdims=True)
        products = sm * pool_q  # [rows, sources]
        assert np.allclose(products, products[0, 0], rtol=1e-12)
        q_tilde = products[0, 0]
        if s <= spec.n_layers:
            q_img.append(np.array([q_tilde ** a for a in spec.arities[s - 1]]))
