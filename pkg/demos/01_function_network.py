"""Tour of the symbolic function network: construction, sampling, evaluation,
exact probabilities, the propagated lower bound, and the equal-probability
initialization."""

import numpy as np

from symcalc import (
    LayerWeights,
    build_complete,
    evaluate,
    init_equal_probability,
    primitive,
    probability,
    probability_lower_bound,
    sample,
)
from symcalc.network import argmax_function, dag_expression

# a one-layer network over the four basic operations with two inputs;
# "complete" adds skip connections so the output can also pass an input through
spec = build_complete([primitive(n) for n in ("add", "sub", "mul", "div")],
                      n_inputs=2, n_layers=1)
print("softmax layer shapes:", spec.weight_shapes())

# with all-zero weights every row is a uniform softmax
uniform = LayerWeights(mats=tuple(np.zeros(s) for s in spec.weight_shapes()))
draws = sample(spec, uniform, rng_seed=0, count=5)
for s in draws:
    expr = dag_expression(spec, s.dag)
    value = evaluate(spec, s.dag, [6.0, 7.0])
    print(f"  sampled {expr:<22} p={np.exp(s.log_prob):.4f}  f(6,7)={value}")

# probabilities are exact: the product of the chosen edges' softmax weights
best = argmax_function(spec, uniform, n_samples=100, rng_seed=1)
print("argmax over 100 draws:", dag_expression(spec, best.dag))

# the equal-probability initialization makes the propagated bound identical
# for every sampleable wiring, so training starts unbiased
init = init_equal_probability(spec)
for s in sample(spec, init, rng_seed=3, count=4):
    p = probability(spec, init, s.dag)
    q = probability_lower_bound(spec, init, s.dag)
    print(f"  after init: {dag_expression(spec, s.dag):<22} p={p:.5f} q={q:.5f}")

# invalid domains never raise; they produce an explicit None
div_sample = next(
    s for s in sample(spec, uniform, rng_seed=9, count=200)
    if dag_expression(spec, s.dag) == "div(x0, x1)"
)
print("div(x0, x1) on (1, 0):", evaluate(spec, div_sample.dag, [1.0, 0.0]))
