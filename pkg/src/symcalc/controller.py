"""Per-token controllers: map hidden states to network weights and to a
routing score, plus the hidden-state providers.

Two providers satisfy the same contract (deterministic per-token stacks of
layer vectors): a toy text encoder used throughout the desk-scale pipeline,
and a reader for hidden-state files exported from a real language model.

The toy encoder is a stand-in, not a model: it tokenizes text, accumulates
causal expression-structure features (operator slots, number counts,
answer-cue flags, hashed token context), and projects them through fixed
seeded random matrices into a configurable number of pseudo-layers.  Operator
identity and "an answer is expected now" are linearly recoverable from the
features on purpose, so small perceptron decoders can learn the control task.
"""

import hashlib
import json
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError
from .network import LayerWeights, NetSpec, init_equal_probability, spec_hash
from .textio import WORD_NUMBERS, _NUMERIC_RE

__all__ = [
    "HiddenStates",
    "MlpHead",
    "DecoderParams",
    "SwitchParams",
    "ToyEncoder",
    "ToyEncoderConfig",
    "tokenize",
    "tokenize_spans",
    "decode_weights",
    "decode_switch",
    "head_forward",
    "init_decoder_params",
    "init_switch_params",
    "write_hidden_states",
    "load_hidden_states",
    "save_controller",
    "load_controller",
]


# --------------------------------------------------------------------------
# tokenization (shared by the toy encoder and the labeled-stream builder)
# --------------------------------------------------------------------------

ROLE_USER = "<|user|>"
ROLE_ASSISTANT = "<|assistant|>"

_WORD_OR_SYM_RE = re.compile(r"<\|[a-z]+\|>|[A-Za-z]+(?:'[a-z]+)?|\*\*|\n|[^\sA-Za-z0-9]")

OPS = ("add", "sub", "mul", "div", "power", "sqrt", "log", "exp", "sin", "cos")

_OP_SYNONYMS = {
    "+": "add", "-": "sub", "−": "sub", "*": "mul", "×": "mul",
    "·": "mul", "x": "mul", "/": "div", "÷": "div", "^": "power",
    "**": "power", "sqrt": "sqrt", "√": "sqrt", "log": "log", "ln": "log",
    "exp": "exp", "sin": "sin", "cos": "cos",
}

_KEYWORD_OPS = {
    "add": {"plus", "sum", "total", "altogether", "more", "gain", "gains", "gained",
            "combined", "together", "add", "adds", "added", "buys", "bought", "buy",
            "receives", "received", "earns", "earn", "finds", "collects", "scores"},
    "sub": {"minus", "less", "left", "remain", "remains", "remaining", "lost", "loses",
            "lose", "gave", "gives", "away", "fewer", "spent", "spends", "removed",
            "ate", "eats", "sold", "sells", "difference", "subtract", "broke", "used"},
    "mul": {"times", "each", "per", "every", "product", "multiply", "multiplied",
            "twice", "double", "rows", "sessions", "packs", "boxes", "crates",
            "shelves", "pages", "worth"},
    "div": {"divided", "divide", "split", "share", "shared", "equally", "among",
            "evenly", "half", "quotient", "groups", "teams"},
    "sqrt": {"square", "root"},
    "power": {"power", "raised", "squared", "cubed"},
    "log": {"logarithm"},
    "exp": {"exponential"},
    "sin": {"sine"},
    "cos": {"cosine"},
}

_BOUNDARIES = {".", "?", "!", ";", "\n", ROLE_USER, ROLE_ASSISTANT}
_EQ_CUES = {"=", "is", "equals", "gives"}


def tokenize_spans(text: str) -> list[tuple[str, int, int]]:
    """(token, start, end) triples: number literals (sign attached per the
    extraction rules), words, role tags, operators, punctuation."""
    tokens = []
    cursor = 0
    for m in _NUMERIC_RE.finditer(text):
        for w in _WORD_OR_SYM_RE.finditer(text, cursor, m.start()):
            tokens.append((w.group(0), w.start(), w.end()))
        tokens.append((m.group(0), m.start(), m.end()))
        cursor = m.end()
    for w in _WORD_OR_SYM_RE.finditer(text, cursor):
        tokens.append((w.group(0), w.start(), w.end()))
    return tokens


def tokenize(text: str) -> list[str]:
    return [t for t, _, _ in tokenize_spans(text)]


# --------------------------------------------------------------------------
# hidden states
# --------------------------------------------------------------------------

@dataclass
class HiddenStates:
    """Per-token stacks of layer vectors, shape [n_tokens, n_layers, hidden_dim]."""

    states: np.ndarray
    tokens: list[str] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.asarray(self.states)
        if self.states.ndim != 3:
            raise ConfigError("hidden states must have shape [tokens, layers, dim]")
        if not np.all(np.isfinite(self.states)):
            raise ConfigError("hidden states contain non-finite values")

    @property
    def n_tokens(self) -> int:
        return self.states.shape[0]

    @property
    def n_layers(self) -> int:
        return self.states.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.states.shape[2]

    def at(self, t: int) -> np.ndarray:
        return self.states[t]


# --------------------------------------------------------------------------
# toy encoder
# --------------------------------------------------------------------------

_HASH_BUCKETS = 64
_N_FLAGS = 5
_N_COMPOSITE = 12
_FEATURE_DIM = (
    _HASH_BUCKETS + _HASH_BUCKETS + _N_FLAGS + len(OPS)
    + 3 * len(OPS) + len(OPS) + 4 + 5 + _N_COMPOSITE
    + 3 * len(OPS) + 5 + len(OPS) + len(OPS) + 1 + 1
)


def _bucket(token: str) -> int:
    digest = hashlib.blake2b(token.lower().encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little") % _HASH_BUCKETS


def _one_hot(n: int, idx: int | None) -> np.ndarray:
    v = np.zeros(n)
    if idx is not None and 0 <= idx < n:
        v[idx] = 1.0
    return v


@dataclass(frozen=True)
class ToyEncoderConfig:
    seed: int = 0
    n_layers: int = 4
    hidden_dim: int = 64
    version: int = 1


class ToyEncoder:
    """Deterministic featurizer emitting pseudo-layer hidden states.

    The feature vector for token t summarizes the token stream up to and
    including t: hashed token identity and its decayed history, the operator
    slots and number counts of the current expression segment (segments reset
    at sentence boundaries and after '='-style cues), the same for the
    previous segment, clause-level operator keyword cues, and answer-cue
    flags.  Each pseudo-layer is a fixed random projection of that vector.
    """

    tokenizer_name = "symcalc-toy-v1"

    def __init__(self, config: ToyEncoderConfig = ToyEncoderConfig()):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self._proj = [
            rng.normal(0.0, 1.0 / np.sqrt(_FEATURE_DIM), size=(config.hidden_dim, _FEATURE_DIM))
            for _ in range(config.n_layers)
        ]

    @property
    def n_layers(self) -> int:
        return self.config.n_layers

    @property
    def hidden_dim(self) -> int:
        return self.config.hidden_dim

    def encode(self, text: str) -> HiddenStates:
        tokens = tokenize(text)
        feats = self.features(tokens)
        states = np.stack([feats @ p.T for p in self._proj], axis=1)
        return HiddenStates(states=states, tokens=tokens,
                            meta={"tokenizer": self.tokenizer_name})

    def features(self, tokens: list[str]) -> np.ndarray:
        out = np.zeros((len(tokens), _FEATURE_DIM))
        ema = np.zeros(_HASH_BUCKETS)

        seg_ops: list[str] = []
        seg_nums = 0
        seg_has_percent = False
        # the last non-empty closed segment; survives chat-role and sentence
        # boundaries so the answer-start token still sees the question's shape
        prev_ops: list[str] = []
        prev_nums = 0
        prev_percent = False
        # slowly decaying keyword cues: word problems span several sentences
        # and their operator signal must survive sentence and role boundaries
        # up to the answer cue, while cues from earlier queries fade away
        question_kw = np.zeros(len(OPS))
        clause_kw = np.zeros(len(OPS))
        clause_recent: list[str] = []  # normalized kinds for fraction-of detection
        fraction_of = False
        paren_depth = 0
        stream_nums = 0
        last_was_number = False
        prev_raw = ""
        tail: list[str] = []  # kinds of recent segment tokens, parens skipped

        for t, raw in enumerate(tokens):
            token = raw.lower()
            is_num = _NUMERIC_RE.fullmatch(raw) is not None
            is_word_num = token in WORD_NUMBERS
            op = _OP_SYNONYMS.get(token)
            if token == "x" and not last_was_number:
                op = None  # the letter x, not a multiplication sign
            is_boundary = raw in _BOUNDARIES
            is_eq = token in _EQ_CUES

            number_like = is_num or is_word_num
            kind = "num" if number_like else ("op" if op else token)

            # ---- features describe the state up to this token
            tail_pat = len(tail) >= 3 and tail[-3:] == ["num", "op", "num"]
            unary_tail = len(seg_ops) == 1 and seg_ops[0] in ("sqrt", "log", "exp", "sin", "cos")
            computable = (
                len(seg_ops) == 1
                and (tail_pat or (unary_tail and seg_nums >= 1))
                and not seg_has_percent
            )
            prev_computable = (
                len(prev_ops) == 1 and 1 <= prev_nums <= 2 and not prev_percent
            )
            at_response_start = raw == "\n" and prev_raw == ROLE_ASSISTANT
            # scaled up: these few structural bits must not drown in the wide
            # hashed-context blocks
            composite = 2.0 * np.array([
                float(computable),
                float(tail_pat),
                float(last_was_number),
                float(is_eq and (tail_pat or (unary_tail and seg_nums >= 1))),
                float(seg_has_percent),
                float(fraction_of),
                float(len(seg_ops) >= 2),
                float(paren_depth > 0),
                float(prev_computable),
                float(prev_computable and len(seg_ops) == 0),
                float(at_response_start),
                float(at_response_start and prev_computable),
            ])

            blocks = [
                _one_hot(_HASH_BUCKETS, _bucket(raw)),
                ema.copy(),
                np.array([
                    float(number_like), float(is_word_num),
                    float(op is not None), float(is_boundary), float(is_eq),
                ]),
                _one_hot(len(OPS), OPS.index(op) if op else None),
                np.concatenate([
                    _one_hot(len(OPS), OPS.index(seg_ops[k]) if k < len(seg_ops) else None)
                    for k in range(3)
                ]),
                _one_hot(len(OPS), OPS.index(seg_ops[-1]) if seg_ops else None),
                _one_hot(4, min(len(seg_ops), 3)),
                _one_hot(5, min(seg_nums, 4)),
                composite,
                np.concatenate([
                    _one_hot(len(OPS), OPS.index(prev_ops[k]) if k < len(prev_ops) else None)
                    for k in range(3)
                ]),
                _one_hot(5, min(prev_nums, 4)),
                np.clip(clause_kw, 0, 2) / 2.0,
                np.clip(question_kw, 0, 3) / 3.0,
                np.array([min(stream_nums, 10) / 10.0]),
                np.array([1.0]),
            ]
            out[t] = np.concatenate(blocks)

            # ---- fold this token into the running state
            ema = 0.7 * ema + 0.3 * _one_hot(_HASH_BUCKETS, _bucket(raw))
            question_kw *= 0.9
            if number_like:
                seg_nums += 1
                stream_nums += 1
            if op:
                seg_ops.append(op)
            if token == "%":
                seg_has_percent = True
            if raw == "(":
                paren_depth += 1
            elif raw == ")":
                paren_depth = max(0, paren_depth - 1)
            if kind == "num" or op or token == "of":
                clause_recent.append("num" if kind == "num" else (op or "of"))
                clause_recent = clause_recent[-4:]
                if clause_recent == ["num", "div", "num", "of"]:
                    fraction_of = True
            for k, words in _KEYWORD_OPS.items():
                if token in words:
                    clause_kw[OPS.index(k)] += 1.0
                    question_kw[OPS.index(k)] += 1.0
            if raw not in ("(", ")"):
                tail.append(kind if kind in ("num", "op") else "other")
                tail = tail[-4:]
            last_was_number = number_like
            prev_raw = raw

            if is_eq or is_boundary:
                if seg_ops or seg_nums:
                    prev_ops, prev_nums, prev_percent = seg_ops, seg_nums, seg_has_percent
                seg_ops, seg_nums, seg_has_percent = [], 0, False
                tail = []
            if is_boundary:
                clause_kw = np.zeros(len(OPS))
                clause_recent = []
                fraction_of = False
        return out


# --------------------------------------------------------------------------
# decoder and switch parameters
# --------------------------------------------------------------------------

@dataclass
class MlpHead:
    """Layer-mixing weights plus a two-layer perceptron."""

    mix: np.ndarray  # [provider layers]
    w1: np.ndarray   # [intermediate, hidden_dim]
    b1: np.ndarray   # [intermediate]
    w2: np.ndarray   # [out_dim, intermediate]
    b2: np.ndarray   # [out_dim]

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [("mix", self.mix), ("w1", self.w1), ("b1", self.b1),
                ("w2", self.w2), ("b2", self.b2)]


@dataclass
class DecoderParams:
    """One head per softmax layer of the network, plus the fixed equal
    probability offset the heads are added onto.  The offset is never trained."""

    heads: list[MlpHead]
    init_offset: LayerWeights
    n_provider_layers: int
    hidden_dim: int

    def arrays(self):
        for i, head in enumerate(self.heads):
            for name, arr in head.arrays():
                yield f"head{i}.{name}", arr


@dataclass
class SwitchParams:
    head: MlpHead
    n_provider_layers: int
    hidden_dim: int

    def arrays(self):
        for name, arr in self.head.arrays():
            yield f"switch.{name}", arr


def _new_head(rng, n_provider_layers, hidden_dim, intermediate, out_dim) -> MlpHead:
    # zero final layer: the head contributes nothing until trained, so the
    # decoder starts exactly at the equal-probability offset
    return MlpHead(
        mix=np.full(n_provider_layers, 1.0 / n_provider_layers),
        w1=rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(intermediate, hidden_dim)),
        b1=np.zeros(intermediate),
        w2=np.zeros((out_dim, intermediate)),
        b2=np.zeros(out_dim),
    )


def init_decoder_params(spec: NetSpec, n_provider_layers: int, hidden_dim: int,
                        intermediate: int = 64, seed: int = 0) -> DecoderParams:
    rng = np.random.default_rng(seed)
    offset = init_equal_probability(spec)
    heads = [
        _new_head(rng, n_provider_layers, hidden_dim, intermediate, rows * cols)
        for rows, cols in spec.weight_shapes()
    ]
    return DecoderParams(heads=heads, init_offset=offset,
                         n_provider_layers=n_provider_layers, hidden_dim=hidden_dim)


def init_switch_params(n_provider_layers: int, hidden_dim: int,
                       intermediate: int = 64, seed: int = 0) -> SwitchParams:
    rng = np.random.default_rng(seed)
    return SwitchParams(head=_new_head(rng, n_provider_layers, hidden_dim, intermediate, 1),
                        n_provider_layers=n_provider_layers, hidden_dim=hidden_dim)


def head_forward(head: MlpHead, h_token: np.ndarray):
    """Forward pass of one head on a [layers, hidden_dim] state stack.
    Returns (output, cache) where the cache feeds the training backward pass."""
    z = head.mix @ h_token
    pre = head.w1 @ z + head.b1
    mid = np.tanh(pre)
    out = head.w2 @ mid + head.b2
    return out, (h_token, z, mid)


def _check_h(h_token: np.ndarray, n_layers: int, hidden_dim: int):
    h_token = np.asarray(h_token, dtype=float)
    if h_token.shape != (n_layers, hidden_dim):
        raise ConfigError(
            f"hidden state stack has shape {h_token.shape}, controller expects "
            f"({n_layers}, {hidden_dim}); provider and params must agree"
        )
    return h_token


def decode_weights(params: DecoderParams, h_token: np.ndarray) -> LayerWeights:
    """Network weights for one token: per layer, head output reshaped onto the
    equal-probability offset."""
    h_token = _check_h(h_token, params.n_provider_layers, params.hidden_dim)
    mats = []
    for head, offset in zip(params.heads, params.init_offset.mats):
        out, _ = head_forward(head, h_token)
        mats.append(out.reshape(offset.shape) + offset)
    return LayerWeights(mats=tuple(mats))


def decode_switch(params: SwitchParams, h_token: np.ndarray) -> float:
    """Routing score in (0, 1); above 0.5 means evaluate symbolically,
    at or below 0.5 means keep the text model's token."""
    h_token = _check_h(h_token, params.n_provider_layers, params.hidden_dim)
    out, _ = head_forward(params.head, h_token)
    score = 1.0 / (1.0 + np.exp(-out[0]))
    return float(np.clip(score, 1e-12, 1.0 - 1e-12))


# --------------------------------------------------------------------------
# hidden-state file format: magic "OCHS"
# --------------------------------------------------------------------------

OCHS_MAGIC = b"OCHS"
OCHS_VERSION = 1


def write_hidden_states(path, states: np.ndarray, meta: dict):
    states = np.ascontiguousarray(states, dtype="<f4")
    if states.ndim != 3:
        raise ConfigError("hidden states must have shape [tokens, layers, dim]")
    meta_blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(OCHS_MAGIC)
        fh.write(struct.pack("<IIII", OCHS_VERSION, *states.shape))
        fh.write(states.tobytes())
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)


def load_hidden_states(path) -> HiddenStates:
    with open(path, "rb") as fh:
        data = fh.read()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"truncated hidden-state file while reading {what}", offset=off)
        chunk = data[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != OCHS_MAGIC:
        raise FormatError("bad magic, not a hidden-state file", offset=0)
    version, n_tokens, n_layers, hidden_dim = struct.unpack("<IIII", take(16, "header"))
    if version != OCHS_VERSION:
        raise FormatError(f"unsupported hidden-state format version {version}", offset=4)
    count = n_tokens * n_layers * hidden_dim
    raw = take(count * 4, "state tensor")
    states = np.frombuffer(raw, dtype="<f4").reshape(n_tokens, n_layers, hidden_dim).copy()
    (meta_len,) = struct.unpack("<I", take(4, "metadata length"))
    meta = json.loads(take(meta_len, "metadata").decode("utf-8"))
    if off != len(data):
        raise FormatError("trailing bytes after metadata block", offset=off)
    if not np.all(np.isfinite(states)):
        raise FormatError("state tensor contains non-finite values")
    return HiddenStates(states=states, meta=meta)


# --------------------------------------------------------------------------
# controller checkpoint format: magic "OCCT"
# --------------------------------------------------------------------------

OCCT_MAGIC = b"OCCT"
OCCT_VERSION = 1


def _write_array(fh, arr: np.ndarray):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(arr.tobytes())


def _read_array(take) -> np.ndarray:
    (ndim,) = struct.unpack("<B", take(1, "array ndim"))
    shape = tuple(struct.unpack("<I", take(4, "array dim"))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    raw = take(count * 8, "array data")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


def _head_arrays(head: MlpHead):
    return [head.mix, head.w1, head.b1, head.w2, head.b2]


def save_controller(path, decoder: DecoderParams | None = None,
                    switch: SwitchParams | None = None, spec: NetSpec | None = None):
    if decoder is not None and spec is None:
        raise ConfigError("saving decoder params requires the network spec for its hash")
    flags = (1 if decoder is not None else 0) | (2 if switch is not None else 0)
    some = decoder or switch
    if some is None:
        raise ConfigError("nothing to save")
    with open(path, "wb") as fh:
        fh.write(OCCT_MAGIC)
        fh.write(struct.pack("<IB", OCCT_VERSION, flags))
        fh.write(struct.pack("<II", some.n_provider_layers, some.hidden_dim))
        fh.write(spec_hash(spec) if spec is not None else b"\x00" * 32)
        if decoder is not None:
            fh.write(struct.pack("<I", len(decoder.heads)))
            for head in decoder.heads:
                for arr in _head_arrays(head):
                    _write_array(fh, arr)
            for mat in decoder.init_offset.mats:
                _write_array(fh, mat)
        if switch is not None:
            for arr in _head_arrays(switch.head):
                _write_array(fh, arr)


def load_controller(path, spec: NetSpec | None = None):
    """Returns (decoder, switch); entries are None when absent from the file."""
    with open(path, "rb") as fh:
        data = fh.read()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"truncated controller file while reading {what}", offset=off)
        chunk = data[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != OCCT_MAGIC:
        raise FormatError("bad magic, not a controller checkpoint", offset=0)
    version, flags = struct.unpack("<IB", take(5, "header"))
    if version != OCCT_VERSION:
        raise FormatError(f"unsupported controller format version {version}", offset=4)
    n_provider_layers, hidden_dim = struct.unpack("<II", take(8, "dims"))
    stored_hash = take(32, "spec hash")
    if spec is not None and flags & 1 and stored_hash != spec_hash(spec):
        raise FormatError("controller checkpoint was trained for a different network spec")
    decoder = switch = None
    if flags & 1:
        (n_heads,) = struct.unpack("<I", take(4, "head count"))
        heads = []
        for _ in range(n_heads):
            mix, w1, b1, w2, b2 = (_read_array(take) for _ in range(5))
            heads.append(MlpHead(mix=mix, w1=w1, b1=b1, w2=w2, b2=b2))
        offset = LayerWeights(mats=tuple(_read_array(take) for _ in range(n_heads)))
        decoder = DecoderParams(heads=heads, init_offset=offset,
                                n_provider_layers=n_provider_layers, hidden_dim=hidden_dim)
    if flags & 2:
        mix, w1, b1, w2, b2 = (_read_array(take) for _ in range(5))
        switch = SwitchParams(head=MlpHead(mix=mix, w1=w1, b1=b1, w2=w2, b2=b2),
                              n_provider_layers=n_provider_layers, hidden_dim=hidden_dim)
    if off != len(data):
        raise FormatError("trailing bytes after controller payload", offset=off)
    return decoder, switch
