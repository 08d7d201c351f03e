"""Per-token symbolic calculator controlled by language-model hidden states.

A layered softmax network defines a distribution over arithmetic function
DAGs; small perceptron decoders read per-token hidden states to set the
network's weights and to decide, token by token, whether the next emission
comes from the text model or from a symbolic evaluation.
"""

from .controller import (
    DecoderParams,
    HiddenStates,
    SwitchParams,
    ToyEncoder,
    ToyEncoderConfig,
    decode_switch,
    decode_weights,
    init_decoder_params,
    init_switch_params,
    load_hidden_states,
    write_hidden_states,
)
from .errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    NoOperandsError,
    StructuralError,
    SymcalcError,
)
from .harness import (
    BenchConfig,
    generate_with_switch,
    load_checkpoint,
    run_benchmark,
    save_checkpoint,
)
from .network import (
    FunctionSample,
    LayerWeights,
    NetSpec,
    Primitive,
    PRIMITIVES,
    SampledDag,
    argmax_function,
    build_complete,
    evaluate,
    init_equal_probability,
    primitive,
    probability,
    probability_lower_bound,
    sample,
)
from .textio import extract_numbers, format_output, matches, score_response, select_operands
from .training import (
    TrainConfig,
    decoder_loss_and_grad,
    switch_loss_and_grad,
    train_decoder,
    train_switch,
)

__version__ = "0.1.0"
