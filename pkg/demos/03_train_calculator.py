"""Train the weight decoder end to end on generated prompts, then inspect
what it picks for fresh questions.

This is a shortened run (a few hundred steps, reduced sample count); the
acceptance suite trains the full recipe.  Expect a minute of compute.
"""

from symcalc import PRIMITIVES, TrainConfig, build_complete, train_decoder
from symcalc.controller import ToyEncoder, decode_weights
from symcalc.datagen import sample_decoder_dataset
from symcalc.network import argmax_function, dag_expression, evaluate
from symcalc.textio import extract_numbers, select_operands

spec = build_complete(list(PRIMITIVES.values()), n_inputs=2, n_layers=1)
provider = ToyEncoder()

# stage 1 uses the answer-cue prefix, stage 2 drops it
stage1 = sample_decoder_dataset(800, seed=100, answer_prefix=True)
stage2 = sample_decoder_dataset(1600, seed=200, answer_prefix=False)

config = TrainConfig(learning_rate=6e-4, weight_decay=0.01, effective_batch=8,
                     samples_per_token=300, max_steps=10 ** 9, seed=0)
params, log = train_decoder(config, provider, spec, [(stage1, 100), (stage2, 700)])
print(f"trained {log.records[-1]['step']} steps, "
      f"final reward rate {log.records[-1]['reward_rate']:.2f}")

for prompt in ("6 + 7 = ", "sqrt(144) = ", "24 * 85.53 = ", "log(20.09) = "):
    text = f"<|user|>\n{prompt}\n<|assistant|>\n"
    states = provider.encode(text)
    weights = decode_weights(params, states.at(states.n_tokens - 1))
    best = argmax_function(spec, weights, n_samples=100, rng_seed=7)
    x, _ = select_operands(extract_numbers(text), spec.n_inputs)
    value = evaluate(spec, best.dag, x)
    print(f"  {prompt:<16} -> {dag_expression(spec, best.dag):<14} = {value}")
