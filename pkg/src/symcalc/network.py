"""Layered softmax network defining a probability distribution over function DAGs.

The network is organized as alternating *arguments* and *image* sublayers.
Image layer 0 holds the inputs; image layer l (1..L) holds the primitive
activations of that layer.  Softmax layer s (1..L+1) connects a pool of
source nodes to the argument slots of image layer s; softmax layer L+1
selects the single output node.  In the "complete" construction the source
pool of softmax layer s is the concatenation [inputs, image 1, ..., image
s-1] (skip connections) and the primitives of image layer l are repeated
A**(L-l) times, A being the maximum arity, so every composition of the base
primitives up to depth L is representable.

Sampling one source per argument row yields a DAG; its probability is the
product of the softmax probabilities of the edges that are ancestors of the
output node.  Rows are grouped into consecutive arity blocks per primitive:
the arguments of image node i of layer l are rows [offset_i, offset_i +
arity_i) where offset_i is the sum of the arities of the earlier primitives
in that layer.
"""

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, FormatError, StructuralError

__all__ = [
    "Primitive",
    "NetSpec",
    "LayerWeights",
    "SampledDag",
    "FunctionSample",
    "PRIMITIVES",
    "primitive",
    "build_complete",
    "sample",
    "sample_arrays",
    "evaluate",
    "evaluate_batch",
    "probability",
    "probability_lower_bound",
    "init_equal_probability",
    "argmax_function",
    "canonical_encoding",
    "dag_operator",
    "dag_expression",
    "save_network",
    "load_network",
    "spec_hash",
]


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Primitive:
    """A base operation placed in an activation layer.

    ``fn`` consumes ``arity`` numpy arrays (or scalars) and returns one array;
    ``guard`` returns a boolean mask of argument tuples on which ``fn`` is
    defined over the reals.  ``fn`` is only trusted on arguments passing the
    guard; elsewhere evaluation reports an invalid marker instead of raising.
    """

    name: str
    arity: int
    fn: Callable[..., np.ndarray]
    guard: Callable[..., np.ndarray] | None = None

    def __post_init__(self):
        if self.arity < 1:
            raise ConfigError(f"primitive {self.name!r} must have arity >= 1")

    def __repr__(self):
        return f"Primitive({self.name}/{self.arity})"


def _power_guard(base, expo):
    base = np.asarray(base, dtype=float)
    expo = np.asarray(expo, dtype=float)
    integral = np.abs(expo - np.round(expo)) < 1e-9
    return (base > 0) | ((base == 0) & (expo > 0)) | ((base < 0) & integral)


def _power_fn(base, expo):
    # negative bases are only valid for (near-)integer exponents; round so the
    # float power does not return nan for e.g. (-8.0) ** 3.0000000001
    base = np.asarray(base, dtype=float)
    expo = np.asarray(expo, dtype=float)
    expo = np.where(base < 0, np.round(expo), expo)
    return np.power(base, expo)


PRIMITIVES: dict[str, Primitive] = {
    p.name: p
    for p in [
        Primitive("add", 2, np.add),
        Primitive("sub", 2, np.subtract),
        Primitive("mul", 2, np.multiply),
        Primitive("div", 2, np.divide, guard=lambda a, b: np.asarray(b) != 0),
        Primitive("sqrt", 1, np.sqrt, guard=lambda a: np.asarray(a) >= 0),
        Primitive("power", 2, _power_fn, guard=_power_guard),
        Primitive("log", 1, np.log, guard=lambda a: np.asarray(a) > 0),
        Primitive("exp", 1, np.exp),
        Primitive("sin", 1, np.sin),
        Primitive("cos", 1, np.cos),
    ]
}


def primitive(name: str) -> Primitive:
    try:
        return PRIMITIVES[name]
    except KeyError:
        raise ConfigError(f"unknown primitive {name!r}") from None


# --------------------------------------------------------------------------
# architecture
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NetSpec:
    """Architecture definition: inputs, per-layer primitive lists, wiring layout.

    ``layers[l-1]`` holds the primitives of image layer l after any repetition.
    All derived layout tables are precomputed and immutable.
    """

    n_inputs: int
    layers: tuple[tuple[Primitive, ...], ...]
    complete: bool
    base_primitives: tuple[Primitive, ...]

    # derived, filled in __post_init__
    max_arity: int = field(init=False)
    image_sizes: tuple[int, ...] = field(init=False)     # index = image layer 0..L
    arities: tuple[tuple[int, ...], ...] = field(init=False)
    offsets: tuple[tuple[int, ...], ...] = field(init=False)
    m_rows: tuple[int, ...] = field(init=False)          # per softmax layer 1..L+1
    source_pools: tuple[tuple[tuple[int, int], ...], ...] = field(init=False)

    def __post_init__(self):
        if self.n_inputs < 1:
            raise ConfigError("n_inputs must be >= 1")
        if not self.layers or any(len(layer) == 0 for layer in self.layers):
            raise ConfigError("every layer needs at least one primitive")
        object.__setattr__(self, "max_arity", max(p.arity for p in self.base_primitives))
        image_sizes = [self.n_inputs] + [len(layer) for layer in self.layers]
        arities = tuple(tuple(p.arity for p in layer) for layer in self.layers)
        offsets = []
        for layer_ar in arities:
            off, acc = [], 0
            for a in layer_ar:
                off.append(acc)
                acc += a
            offsets.append(tuple(off))
        m_rows = [sum(layer_ar) for layer_ar in arities] + [1]  # output selector row
        pools = []
        for s in range(1, self.n_layers + 2):
            if self.complete:
                lo = 0  # skip connections: everything before image layer s
            else:
                lo = s - 1
            pool = []
            for k in range(lo, s):
                pool.extend((k, i) for i in range(image_sizes[k]))
            pools.append(tuple(pool))
        object.__setattr__(self, "image_sizes", tuple(image_sizes))
        object.__setattr__(self, "arities", arities)
        object.__setattr__(self, "offsets", tuple(offsets))
        object.__setattr__(self, "m_rows", tuple(m_rows))
        object.__setattr__(self, "source_pools", tuple(pools))

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_softmax_layers(self) -> int:
        return self.n_layers + 1

    def pool_size(self, s: int) -> int:
        """Number of candidate sources for softmax layer s (1-based)."""
        return len(self.source_pools[s - 1])

    def weight_shapes(self) -> list[tuple[int, int]]:
        return [(self.m_rows[s - 1], self.pool_size(s)) for s in range(1, self.n_layers + 2)]


@dataclass(frozen=True)
class LayerWeights:
    """One real matrix per softmax layer, rows = argument slots, cols = sources."""

    mats: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "mats", tuple(np.asarray(m, dtype=float) for m in self.mats))

    def validate(self, spec: NetSpec):
        shapes = [m.shape for m in self.mats]
        expected = spec.weight_shapes()
        if shapes != expected:
            raise StructuralError(f"weight shapes {shapes} do not match spec {expected}")
        for m in self.mats:
            if not np.all(np.isfinite(m)):
                raise StructuralError("weights contain non-finite entries")


@dataclass(frozen=True)
class SampledDag:
    """One source choice per argument row of every softmax layer.

    Rows not ancestral to the output node do not affect the represented
    function; ``edge_log_probs`` caches the log softmax probability of each
    chosen edge when the dag came from a sampler.
    """

    choices: tuple[tuple[int, ...], ...]
    edge_log_probs: tuple[tuple[float, ...], ...] | None = None

    def validate(self, spec: NetSpec):
        if len(self.choices) != spec.n_softmax_layers:
            raise StructuralError("dag has the wrong number of softmax layers")
        for s, row_choices in enumerate(self.choices, start=1):
            if len(row_choices) != spec.m_rows[s - 1]:
                raise StructuralError(f"softmax layer {s}: expected {spec.m_rows[s-1]} rows")
            size = spec.pool_size(s)
            if any(not (0 <= c < size) for c in row_choices):
                raise StructuralError(f"softmax layer {s}: source index out of range")


@dataclass(frozen=True)
class FunctionSample:
    dag: SampledDag
    log_prob: float


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def build_complete(base_primitives: Sequence[Primitive], n_inputs: int, n_layers: int) -> NetSpec:
    """Build the complete architecture: repetition + skip connections.

    Image layer l carries each base primitive A**(L-l) times, so deeper layers
    always find enough copies of every primitive below them, and each softmax
    layer sees all earlier image layers plus the inputs.
    """
    if n_layers < 1:
        raise ConfigError("n_layers must be >= 1")
    prims = list(base_primitives)
    if not prims:
        raise ConfigError("base_primitives must be nonempty")
    a = max(p.arity for p in prims)
    layers = []
    for l in range(1, n_layers + 1):
        reps = a ** (n_layers - l)
        layers.append(tuple(p for p in prims for _ in range(reps)))
    return NetSpec(
        n_inputs=n_inputs,
        layers=tuple(layers),
        complete=True,
        base_primitives=tuple(prims),
    )


# --------------------------------------------------------------------------
# softmax helpers
# --------------------------------------------------------------------------

def _log_softmax(mat: np.ndarray) -> np.ndarray:
    shifted = mat - mat.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _softmax(mat: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(mat))


# --------------------------------------------------------------------------
# vectorized sampling
# --------------------------------------------------------------------------

@dataclass
class SampleBatch:
    """Vectorized draw of ``count`` dags: per softmax layer an int array
    [count, rows] of chosen sources, plus needed-row masks and total log
    probability restricted to output-connected edges."""

    choices: list[np.ndarray]
    needed: list[np.ndarray]
    log_probs: np.ndarray

    @property
    def count(self) -> int:
        return self.log_probs.shape[0]


def _needed_masks(spec: NetSpec, choices: list[np.ndarray]) -> list[np.ndarray]:
    """Boolean [count, rows] per softmax layer: argument rows ancestral to the output."""
    count = choices[0].shape[0]
    needed_img = [np.zeros((count, n), dtype=bool) for n in spec.image_sizes]
    needed_arg: list[np.ndarray | None] = [None] * spec.n_softmax_layers
    for s in range(spec.n_softmax_layers, 0, -1):
        if s == spec.n_softmax_layers:
            na = np.ones((count, 1), dtype=bool)
        else:
            # expand image-node masks to their argument rows
            img_mask = needed_img[s]
            cols = [img_mask[:, i] for i, a in enumerate(spec.arities[s - 1]) for _ in range(a)]
            na = np.stack(cols, axis=1)
        needed_arg[s - 1] = na
        ch = choices[s - 1]
        for g, (k, i) in enumerate(spec.source_pools[s - 1]):
            if k == 0:
                continue
            hit = ((ch == g) & na).any(axis=1)
            needed_img[k][:, i] |= hit
    return [m for m in needed_arg]  # type: ignore[misc]


def sample_arrays(spec: NetSpec, weights: LayerWeights, rng: np.random.Generator,
                  count: int) -> SampleBatch:
    """Draw ``count`` dags at once.  Inverse-CDF per argument row keeps the
    stream deterministic for a fixed generator state."""
    weights.validate(spec)
    choices = []
    gathered_logp = []
    for s in range(1, spec.n_softmax_layers + 1):
        mat = weights.mats[s - 1]
        logp = _log_softmax(mat)
        cdf = np.cumsum(np.exp(logp), axis=1)
        rows = mat.shape[0]
        ch = np.empty((count, rows), dtype=np.int64)
        for r in range(rows):
            u = rng.random(count)
            ch[:, r] = np.minimum(np.searchsorted(cdf[r], u, side="right"), mat.shape[1] - 1)
        choices.append(ch)
        gathered_logp.append(np.take_along_axis(logp, ch.T, axis=1).T)  # [count, rows]
    needed = _needed_masks(spec, choices)
    total = np.zeros(count)
    for g, na in zip(gathered_logp, needed):
        total += (g * na).sum(axis=1)
    return SampleBatch(choices=choices, needed=needed, log_probs=total)


def evaluate_batch(spec: NetSpec, choices: list[np.ndarray],
                   inputs: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Forward pass for a whole batch of dags on one input vector.

    Returns (values, valid).  A sample is valid iff every primitive on the
    output-connected path passes its domain guard and all intermediate values
    are finite; non-ancestral nodes cannot invalidate a sample.
    """
    x = np.asarray(inputs, dtype=float)
    if x.shape != (spec.n_inputs,):
        raise StructuralError(f"expected {spec.n_inputs} inputs, got {x.shape}")
    count = choices[0].shape[0]
    values = [np.tile(x, (count, 1))]
    valid = [np.ones((count, spec.n_inputs), dtype=bool)]
    with np.errstate(all="ignore"):
        for l in range(1, spec.n_layers + 1):
            pool = spec.source_pools[l - 1]
            src_vals = np.concatenate([values[k] for k in sorted({k for k, _ in pool})], axis=1)
            src_valid = np.concatenate([valid[k] for k in sorted({k for k, _ in pool})], axis=1)
            ch = choices[l - 1]
            arg_vals = np.take_along_axis(src_vals, ch, axis=1)
            arg_valid = np.take_along_axis(src_valid, ch, axis=1)
            layer_vals = np.empty((count, spec.image_sizes[l]))
            layer_valid = np.empty((count, spec.image_sizes[l]), dtype=bool)
            for i, prim in enumerate(spec.layers[l - 1]):
                off = spec.offsets[l - 1][i]
                args = [arg_vals[:, off + j] for j in range(prim.arity)]
                ok = arg_valid[:, off:off + prim.arity].all(axis=1)
                if prim.guard is not None:
                    ok = ok & np.asarray(prim.guard(*args), dtype=bool)
                out = np.where(ok, prim.fn(*[np.where(ok, a, 1.0) for a in args]), np.nan)
                ok = ok & np.isfinite(out)
                layer_vals[:, i] = np.where(ok, out, np.nan)
                layer_valid[:, i] = ok
            values.append(layer_vals)
            valid.append(layer_valid)
        out_pool = spec.source_pools[spec.n_softmax_layers - 1]
        src_vals = np.concatenate([values[k] for k in sorted({k for k, _ in out_pool})], axis=1)
        src_valid = np.concatenate([valid[k] for k in sorted({k for k, _ in out_pool})], axis=1)
        out_choice = choices[spec.n_softmax_layers - 1][:, 0]
        out = src_vals[np.arange(count), out_choice]
        ok = src_valid[np.arange(count), out_choice] & np.isfinite(out)
    return np.where(ok, out, np.nan), ok


def _batch_dag(batch: SampleBatch, idx: int) -> SampledDag:
    return SampledDag(
        choices=tuple(tuple(int(c) for c in ch[idx]) for ch in batch.choices),
    )


def sample(spec: NetSpec, weights: LayerWeights, rng_seed: int, count: int) -> list[FunctionSample]:
    """Draw ``count`` independent function dags with their exact log probabilities."""
    rng = np.random.default_rng(rng_seed)
    batch = sample_arrays(spec, weights, rng, count)
    return [
        FunctionSample(dag=_batch_dag(batch, i), log_prob=float(batch.log_probs[i]))
        for i in range(count)
    ]


# --------------------------------------------------------------------------
# single-dag operations
# --------------------------------------------------------------------------

def _needed_rows(spec: NetSpec, dag: SampledDag) -> list[set[int]]:
    """Set of output-connected argument rows per softmax layer.

    Image nodes are visited once, so an image node feeding several argument
    rows contributes its own incoming edges a single time.
    """
    needed: list[set[int]] = [set() for _ in range(spec.n_softmax_layers)]
    seen_img: set[tuple[int, int]] = set()

    def visit_image(k: int, i: int):
        if k == 0 or (k, i) in seen_img:
            return
        seen_img.add((k, i))
        off = spec.offsets[k - 1][i]
        for j in range(spec.arities[k - 1][i]):
            visit_row(k, off + j)

    def visit_row(s: int, row: int):
        needed[s - 1].add(row)
        src_k, src_i = spec.source_pools[s - 1][dag.choices[s - 1][row]]
        visit_image(src_k, src_i)

    visit_row(spec.n_softmax_layers, 0)
    return needed


def evaluate(spec: NetSpec, dag: SampledDag, inputs: Sequence[float]) -> float | None:
    """Evaluate the function a dag represents; None marks an invalid domain.

    Only nodes ancestral to the output are computed, so domain violations on
    dangling edges never contaminate the result.  Never raises on numeric
    trouble: non-finite intermediates also yield None.
    """
    x = np.asarray(inputs, dtype=float)
    if x.shape != (spec.n_inputs,):
        raise StructuralError(f"expected {spec.n_inputs} inputs, got {x.shape}")
    dag.validate(spec)
    memo: dict[tuple[int, int], float | None] = {}

    def image_value(k: int, i: int) -> float | None:
        if k == 0:
            return float(x[i])
        if (k, i) in memo:
            return memo[(k, i)]
        prim = spec.layers[k - 1][i]
        off = spec.offsets[k - 1][i]
        args = []
        for j in range(prim.arity):
            v = row_value(k, off + j)
            if v is None:
                memo[(k, i)] = None
                return None
            args.append(v)
        result: float | None
        if prim.guard is not None and not bool(np.asarray(prim.guard(*args)).all()):
            result = None
        else:
            with np.errstate(all="ignore"):
                val = float(prim.fn(*args))
            result = val if np.isfinite(val) else None
        memo[(k, i)] = result
        return result

    def row_value(s: int, row: int) -> float | None:
        src_k, src_i = spec.source_pools[s - 1][dag.choices[s - 1][row]]
        return image_value(src_k, src_i)

    return row_value(spec.n_softmax_layers, 0)


def probability(spec: NetSpec, weights: LayerWeights, dag: SampledDag) -> float:
    """Exact probability of sampling this dag: product of the softmax
    probabilities of its output-connected edges, each edge counted once."""
    weights.validate(spec)
    dag.validate(spec)
    needed = _needed_rows(spec, dag)
    logp = 0.0
    for s in range(1, spec.n_softmax_layers + 1):
        if not needed[s - 1]:
            continue
        lsm = _log_softmax(weights.mats[s - 1])
        for row in needed[s - 1]:
            logp += lsm[row, dag.choices[s - 1][row]]
    return float(np.exp(logp))


def probability_lower_bound(spec: NetSpec, weights: LayerWeights, dag: SampledDag) -> float:
    """Propagated lower bound on the dag probability.

    Each argument row multiplies its edge probability with its source's bound;
    each image node multiplies its argument bounds.  A subgraph feeding two
    argument rows is therefore counted twice, which makes the result a lower
    bound with equality exactly on tree-shaped dags.
    """
    weights.validate(spec)
    dag.validate(spec)
    sm = [_softmax(m) for m in weights.mats]
    memo: dict[tuple[int, int], float] = {}

    def q_image(k: int, i: int) -> float:
        if k == 0:
            return 1.0
        if (k, i) in memo:
            return memo[(k, i)]
        off = spec.offsets[k - 1][i]
        q = 1.0
        for j in range(spec.arities[k - 1][i]):
            q *= q_row(k, off + j)
        memo[(k, i)] = q
        return q

    def q_row(s: int, row: int) -> float:
        choice = dag.choices[s - 1][row]
        src_k, src_i = spec.source_pools[s - 1][choice]
        return float(sm[s - 1][row, choice]) * q_image(src_k, src_i)

    return q_row(spec.n_softmax_layers, 0)


def init_equal_probability(spec: NetSpec) -> LayerWeights:
    """Weights making the propagated probability bound identical for every
    sampleable dag.

    Sweeps the layers once.  Given per-source bounds q_j, every row of the
    next softmax layer gets weights log(min_k q_k / q_j); the resulting
    per-edge product q_j * softmax(w)_j is then constant over sources, which
    keeps the per-row bound constant and lets the sweep continue upward.
    """
    q_img: list[np.ndarray] = [np.ones(spec.n_inputs)]
    mats = []
    for s in range(1, spec.n_softmax_layers + 1):
        pool_q = np.array([q_img[k][i] for k, i in spec.source_pools[s - 1]])
        row = np.log(pool_q.min() / pool_q)
        mats.append(np.tile(row, (spec.m_rows[s - 1], 1)))
        q_tilde = 1.0 / np.sum(1.0 / pool_q)
        if s <= spec.n_layers:
            q_img.append(np.array([q_tilde ** a for a in spec.arities[s - 1]]))
    return LayerWeights(mats=tuple(mats))


def canonical_encoding(spec: NetSpec, dag: SampledDag) -> tuple:
    """Lexicographic dag identity: chosen source per argument row, with rows
    not connected to the output normalized to -1."""
    needed = _needed_rows(spec, dag)
    return tuple(
        tuple(
            dag.choices[s - 1][row] if row in needed[s - 1] else -1
            for row in range(spec.m_rows[s - 1])
        )
        for s in range(1, spec.n_softmax_layers + 1)
    )


def argmax_function(spec: NetSpec, weights: LayerWeights, n_samples: int = 100,
                    rng_seed: int = 0) -> FunctionSample:
    """Approximate mode of the dag distribution: best of ``n_samples`` draws.

    Probability ties break toward the smallest canonical encoding so repeated
    calls with one seed are reproducible down to the returned wiring.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    batch = sample_arrays(spec, weights, rng, n_samples)
    best = np.max(batch.log_probs)
    tied = np.nonzero(batch.log_probs >= best - 1e-12)[0]
    dags = [_batch_dag(batch, i) for i in tied]
    encodings = [canonical_encoding(spec, d) for d in dags]
    k = min(range(len(tied)), key=lambda j: encodings[j])
    return FunctionSample(dag=dags[k], log_prob=float(batch.log_probs[tied[k]]))


def dag_operator(spec: NetSpec, dag: SampledDag) -> str:
    """Name of the primitive the output node selects, or 'input'."""
    k, i = spec.source_pools[spec.n_softmax_layers - 1][dag.choices[-1][0]]
    return "input" if k == 0 else spec.layers[k - 1][i].name


def dag_expression(spec: NetSpec, dag: SampledDag) -> str:
    """Readable expression for the output-connected subgraph, e.g. add(x0, x1)."""

    def render_image(k: int, i: int) -> str:
        if k == 0:
            return f"x{i}"
        prim = spec.layers[k - 1][i]
        off = spec.offsets[k - 1][i]
        args = ", ".join(render_row(k, off + j) for j in range(prim.arity))
        return f"{prim.name}({args})"

    def render_row(s: int, row: int) -> str:
        src_k, src_i = spec.source_pools[s - 1][dag.choices[s - 1][row]]
        return render_image(src_k, src_i)

    return render_row(spec.n_softmax_layers, 0)


# --------------------------------------------------------------------------
# checkpoint format: magic "OCNW"
# --------------------------------------------------------------------------

OCNW_MAGIC = b"OCNW"
OCNW_VERSION = 1


def _spec_descriptor(spec: NetSpec) -> bytes:
    parts = [struct.pack("<IIB", spec.n_inputs, spec.n_layers, int(spec.complete))]
    parts.append(struct.pack("<I", len(spec.base_primitives)))
    for p in spec.base_primitives:
        name = p.name.encode("utf-8")
        parts.append(struct.pack("<I", len(name)) + name)
    return b"".join(parts)


def spec_hash(spec: NetSpec) -> bytes:
    return hashlib.sha256(_spec_descriptor(spec)).digest()


def _reconstructible(spec: NetSpec) -> bool:
    if spec.complete:
        rebuilt = build_complete(spec.base_primitives, spec.n_inputs, spec.n_layers)
    else:
        rebuilt = NetSpec(spec.n_inputs, tuple(tuple(spec.base_primitives),) * spec.n_layers,
                          False, spec.base_primitives)
    return rebuilt.layers == spec.layers


def save_network(path, spec: NetSpec, weights: LayerWeights):
    weights.validate(spec)
    if not _reconstructible(spec):
        raise ConfigError("spec layer lists cannot be rebuilt from counts + base primitives")
    with open(path, "wb") as fh:
        fh.write(OCNW_MAGIC)
        fh.write(struct.pack("<I", OCNW_VERSION))
        fh.write(_spec_descriptor(spec))
        for mat in weights.mats:
            fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def load_network(path, registry: dict[str, Primitive] | None = None) -> tuple[NetSpec, LayerWeights]:
    registry = registry or PRIMITIVES
    with open(path, "rb") as fh:
        data = fh.read()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"truncated network file while reading {what}", offset=off)
        chunk = data[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != OCNW_MAGIC:
        raise FormatError("bad magic, not a network checkpoint", offset=0)
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != OCNW_VERSION:
        raise FormatError(f"unsupported network format version {version}", offset=4)
    n_inputs, n_layers, complete = struct.unpack("<IIB", take(9, "header"))
    (n_base,) = struct.unpack("<I", take(4, "primitive count"))
    names = []
    for _ in range(n_base):
        (ln,) = struct.unpack("<I", take(4, "name length"))
        names.append(take(ln, "primitive name").decode("utf-8"))
    missing = [n for n in names if n not in registry]
    if missing:
        raise FormatError(f"unknown primitives in checkpoint: {missing}")
    base = [registry[n] for n in names]
    if complete:
        spec = build_complete(base, n_inputs, n_layers)
    else:
        spec = NetSpec(
            n_inputs=n_inputs,
            layers=tuple(tuple(base) for _ in range(n_layers)),
            complete=False,
            base_primitives=tuple(base),
        )
    mats = []
    for s, (rows, cols) in enumerate(spec.weight_shapes(), start=1):
        frows, fcols = struct.unpack("<II", take(8, f"layer {s} shape"))
        if (frows, fcols) != (rows, cols):
            raise FormatError(
                f"layer {s} shape {(frows, fcols)} does not match spec {(rows, cols)}",
                offset=off - 8,
            )
        raw = take(rows * cols * 8, f"layer {s} weights")
        mats.append(np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy())
    if off != len(data):
        raise FormatError("trailing bytes after weight matrices", offset=off)
    weights = LayerWeights(mats=tuple(mats))
    weights.validate(spec)
    return spec, weights
