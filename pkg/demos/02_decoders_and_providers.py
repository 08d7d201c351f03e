"""Hidden states in, network weights and routing scores out.

The toy provider turns text into deterministic per-token layer stacks; the
decoder heads map one token's stack to softmax weights (on top of the fixed
equal-probability offset) and to a routing score.
"""

import tempfile
from pathlib import Path

import numpy as np

from symcalc import (
    ToyEncoder,
    build_complete,
    decode_switch,
    decode_weights,
    init_decoder_params,
    init_switch_params,
    load_hidden_states,
    primitive,
    write_hidden_states,
)

provider = ToyEncoder()
states = provider.encode("3 + 85 = ")
print("tokens:", states.tokens)
print("state tensor:", states.states.shape, "(tokens, layers, dim)")

# deterministic: the same text always encodes identically
again = provider.encode("3 + 85 = ")
print("deterministic:", np.array_equal(states.states, again.states))

# an untrained decoder reproduces the equal-probability weights exactly,
# because its final perceptron layers start at zero
spec = build_complete([primitive(n) for n in ("add", "sub", "mul", "div")], 2, 1)
decoder = init_decoder_params(spec, provider.n_layers, provider.hidden_dim)
weights = decode_weights(decoder, states.at(states.n_tokens - 1))
print("decoded first-layer weights (all zero at init):")
print(weights.mats[0])

# the switch squashes its head output through a sigmoid; above 0.5 routes to
# the calculator
switch = init_switch_params(provider.n_layers, provider.hidden_dim)
score = decode_switch(switch, states.at(states.n_tokens - 1))
print(f"untrained switch score: {score:.3f} (decides: "
      f"{'calculator' if score > 0.5 else 'text model'})")

# hidden states round-trip through the binary file format bit-for-bit
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "prompt.ochs"
    write_hidden_states(path, states.states.astype(np.float32),
                        {"tokenizer": provider.tokenizer_name, "prompt_hash": "demo"})
    loaded = load_hidden_states(path)
    print("file round-trip identical:",
          np.array_equal(loaded.states, states.states.astype(np.float32)))
    print("metadata:", loaded.meta)
