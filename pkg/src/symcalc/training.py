"""Training for the weight decoder and the routing switch.

The decoder loss is a reward-rescaled policy-gradient objective: draw dags
from the decoded distribution, reward each by whether it reproduces the
target value, and average the negative log probabilities of the rewarded
dags:

    loss = - sum_i R_i * log p[dag_i] / sum_i R_i

The normalizer is treated as a constant of the draw, so for a fixed sample
set the gradient is the reward-weighted sum of per-edge log-softmax
gradients, propagated by hand through the decoder perceptrons and the
layer-mixing weights.  A batch whose rewards are all zero contributes a zero
gradient and is counted, not resampled.

The switch trains with plain token-wise binary cross-entropy on labeled
streams while the decoder stays frozen.
"""

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .controller import (
    DecoderParams,
    MlpHead,
    SwitchParams,
    head_forward,
)
from .errors import ConfigError, DivergenceError
from .network import (
    LayerWeights,
    NetSpec,
    SampleBatch,
    _log_softmax,
    evaluate_batch,
    sample_arrays,
)
from .textio import extract_numbers, select_operands

__all__ = [
    "TrainConfig",
    "LossGrad",
    "delta_reward",
    "reward_vector",
    "decoder_loss_and_grad",
    "loss_for_dags",
    "switch_loss_and_grad",
    "AdamW",
    "train_decoder",
    "train_switch",
    "MetricsLog",
]


# --------------------------------------------------------------------------
# rewards
# --------------------------------------------------------------------------

def _tolerance(y: float) -> float:
    return max(1e-12, 1e-10 * abs(y))


def delta_reward(fx: float | None, y: float) -> float:
    """1 when the evaluation reproduces the target within float tolerance,
    0 otherwise; invalid evaluations earn nothing."""
    if fx is None or not math.isfinite(fx):
        return 0.0
    return 1.0 if abs(fx - y) < _tolerance(y) else 0.0


def reward_vector(values: np.ndarray, valid: np.ndarray, y: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        hit = np.abs(values - y) < _tolerance(y)
    return (hit & valid).astype(float)


# --------------------------------------------------------------------------
# configs and results
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 6e-4
    weight_decay: float = 0.01
    effective_batch: int = 8
    samples_per_token: int = 1000
    max_steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if (self.learning_rate < 0 or self.weight_decay < 0 or self.effective_batch < 1
                or self.samples_per_token < 1 or self.max_steps < 0):
            raise ConfigError("training hyperparameters must be positive")


@dataclass
class LossGrad:
    loss: float
    grads: list[MlpHead] | MlpHead
    stats: dict
    sample_log_probs: np.ndarray | None = None
    rewards: np.ndarray | None = None


# --------------------------------------------------------------------------
# decoder loss
# --------------------------------------------------------------------------

def _decode_with_caches(spec: NetSpec, params: DecoderParams, h_token: np.ndarray):
    mats, caches = [], []
    for head, offset in zip(params.heads, params.init_offset.mats):
        out, cache = head_forward(head, h_token)
        mats.append(out.reshape(offset.shape) + offset)
        caches.append(cache)
    return LayerWeights(mats=tuple(mats)), caches


def _zero_like_heads(heads: list[MlpHead]) -> list[MlpHead]:
    return [
        MlpHead(*(np.zeros_like(a) for _, a in head.arrays()))
        for head in heads
    ]


def head_backward(head: MlpHead, cache, dout: np.ndarray) -> MlpHead:
    """Gradients of one head given d(loss)/d(head output)."""
    h_token, z, mid = cache
    db2 = dout
    dw2 = np.outer(dout, mid)
    dmid = head.w2.T @ dout
    dpre = dmid * (1.0 - mid ** 2)
    dw1 = np.outer(dpre, z)
    db1 = dpre
    dz = head.w1.T @ dpre
    dmix = h_token @ dz
    return MlpHead(mix=dmix, w1=dw1, b1=db1, w2=dw2, b2=db2)


def decoder_loss_and_grad(spec: NetSpec, params: DecoderParams, h_token: np.ndarray,
                          x_inputs, y: float, n_samples: int, seed: int) -> LossGrad:
    """Sample dags from the decoded weights, reward exact reproductions of y,
    and return the rescaled loss with gradients over all decoder parameters."""
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    weights, caches = _decode_with_caches(spec, params, h_token)
    rng = np.random.default_rng(seed)
    batch = sample_arrays(spec, weights, rng, n_samples)
    values, valid = evaluate_batch(spec, batch.choices, x_inputs)
    rewards = reward_vector(values, valid, y)
    total_r = rewards.sum()
    stats = {
        "n_samples": n_samples,
        "n_rewarded": int(total_r),
        "reward_rate": float(total_r / n_samples),
    }
    if total_r == 0:
        return LossGrad(0.0, _zero_like_heads(params.heads), stats,
                        batch.log_probs, rewards)
    loss = -float(rewards @ batch.log_probs) / total_r
    grads = []
    for s in range(1, spec.n_softmax_layers + 1):
        mat = weights.mats[s - 1]
        probs = np.exp(_log_softmax(mat))
        wmask = rewards[:, None] * batch.needed[s - 1]       # [count, rows]
        dmat = np.empty_like(mat)
        for r in range(mat.shape[0]):
            chosen = np.bincount(batch.choices[s - 1][:, r], weights=wmask[:, r],
                                 minlength=mat.shape[1])
            dmat[r] = -(chosen - wmask[:, r].sum() * probs[r]) / total_r
        grads.append(head_backward(params.heads[s - 1], caches[s - 1], dmat.ravel()))
    return LossGrad(loss, grads, stats, batch.log_probs, rewards)


def loss_for_dags(spec: NetSpec, params: DecoderParams, h_token: np.ndarray,
                  batch: SampleBatch, rewards: np.ndarray) -> float:
    """The loss as a function of the parameters for a frozen dag sample.

    This is the exact scalar function whose gradient decoder_loss_and_grad
    reports, so central finite differences of it are the gradient oracle.
    """
    total_r = rewards.sum()
    if total_r == 0:
        return 0.0
    weights, _ = _decode_with_caches(spec, params, h_token)
    total = np.zeros(batch.count)
    for s in range(1, spec.n_softmax_layers + 1):
        logp = _log_softmax(weights.mats[s - 1])
        gathered = np.take_along_axis(logp, batch.choices[s - 1].T, axis=1).T
        total += (gathered * batch.needed[s - 1]).sum(axis=1)
    return -float(rewards @ total) / total_r


# --------------------------------------------------------------------------
# switch loss
# --------------------------------------------------------------------------

def _switch_forward(params: SwitchParams, h_stream: np.ndarray):
    z = np.einsum("l,tld->td", params.head.mix, h_stream)
    pre = z @ params.head.w1.T + params.head.b1
    mid = np.tanh(pre)
    logits = (mid @ params.head.w2.T + params.head.b2)[:, 0]
    return logits, (z, mid)


def switch_scores(params: SwitchParams, h_stream: np.ndarray) -> np.ndarray:
    logits, _ = _switch_forward(params, np.asarray(h_stream, dtype=float))
    return 1.0 / (1.0 + np.exp(-logits))


def switch_loss_and_grad(params: SwitchParams, h_stream: np.ndarray,
                         labels: np.ndarray, mask: np.ndarray | None = None) -> LossGrad:
    """Mean token-wise binary cross-entropy over one labeled stream.

    ``mask`` restricts the mean to actual decision points (response-region
    tokens); without one, every token counts.
    """
    h_stream = np.asarray(h_stream, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if h_stream.shape[0] != labels.shape[0]:
        raise ConfigError("labels and hidden states disagree on stream length")
    if mask is None:
        mask = np.ones_like(labels)
    else:
        mask = np.asarray(mask, dtype=float)
        if mask.shape != labels.shape:
            raise ConfigError("mask and labels disagree on stream length")
    n = max(mask.sum(), 1.0)
    logits, (z, mid) = _switch_forward(params, h_stream)
    # stable BCE on logits: max(o,0) - o*y + log(1 + exp(-|o|))
    bce = np.maximum(logits, 0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
    loss = float((bce * mask).sum() / n)
    sig = 1.0 / (1.0 + np.exp(-logits))
    dlogit = ((sig - labels) * mask)[:, None] / n
    db2 = dlogit.sum(axis=0)
    dw2 = dlogit.T @ mid
    dmid = dlogit @ params.head.w2
    dpre = dmid * (1.0 - mid ** 2)
    dw1 = dpre.T @ z
    db1 = dpre.sum(axis=0)
    dz = dpre @ params.head.w1
    dmix = np.einsum("tld,td->l", h_stream, dz)
    grads = MlpHead(mix=dmix, w1=dw1, b1=db1, w2=dw2, b2=db2)
    stats = {"n_tokens": int(n), "positives": int((labels * mask).sum())}
    return LossGrad(loss, grads, stats)


# --------------------------------------------------------------------------
# optimizer: adaptive moments with decoupled weight decay, constant schedule
# --------------------------------------------------------------------------

class AdamW:
    def __init__(self, arrays: list[np.ndarray], lr: float, weight_decay: float = 0.01,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.arrays = arrays
        self.lr = lr
        self.wd = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        for p, g, m, v in zip(self.arrays, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1 ** self.t)
            vhat = v / (1 - self.b2 ** self.t)
            p -= self.lr * (mhat / (np.sqrt(vhat) + self.eps) + self.wd * p)


def _head_list_arrays(heads: list[MlpHead]) -> list[np.ndarray]:
    return [arr for head in heads for _, arr in head.arrays()]


def _accumulate(acc: list[np.ndarray], grads: list[np.ndarray], scale: float):
    for a, g in zip(acc, grads):
        a += scale * g


# --------------------------------------------------------------------------
# metrics log
# --------------------------------------------------------------------------

class MetricsLog:
    """Append-only line-delimited training records."""

    def __init__(self, path=None):
        self.path = path
        self.records: list[dict] = []
        if path is not None:
            self._fh = open(path, "a")
        else:
            self._fh = None

    def append(self, record: dict):
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


# --------------------------------------------------------------------------
# training loops
# --------------------------------------------------------------------------

def _operand_vector(text: str, n_inputs: int) -> list[float]:
    values, _ = select_operands(extract_numbers(text), n_inputs)
    return values


def train_decoder(config: TrainConfig, provider, spec: NetSpec,
                  stages: list[tuple[list, int]], params: DecoderParams | None = None,
                  intermediate: int = 64, log_path=None,
                  probe=None, probe_every: int = 0) -> tuple[DecoderParams, MetricsLog]:
    """Gradient-accumulated training over one or more stages.

    Each stage is (examples, n_steps); examples carry .text (ending at the
    token whose states drive the decoder), .answer, and optionally
    .target_token.  Hidden states are encoded once per example and cached.
    ``probe``, when given, is called with the params every ``probe_every``
    steps and its result is logged (accuracy probes etc.).
    """
    from .controller import init_decoder_params  # local to avoid cycle at import time

    if params is None:
        params = init_decoder_params(spec, provider.n_layers, provider.hidden_dim,
                                     intermediate=intermediate, seed=config.seed)
    opt = AdamW(_head_list_arrays(params.heads), lr=config.learning_rate,
                weight_decay=config.weight_decay)
    log = MetricsLog(log_path)
    seeds = np.random.SeedSequence(config.seed)
    step_rng = np.random.default_rng(seeds.spawn(1)[0])
    h_cache: dict[int, np.ndarray] = {}
    x_cache: dict[int, list[float]] = {}
    global_step = 0
    t0 = time.time()
    for stage_idx, (examples, n_steps) in enumerate(stages):
        if not examples:
            raise ConfigError(f"stage {stage_idx} has no examples")
        for _ in range(n_steps):
            if global_step >= config.max_steps:
                break
            acc = [np.zeros_like(a) for a in _head_list_arrays(params.heads)]
            losses, reward_rates, skipped = [], [], 0
            for _ in range(config.effective_batch):
                idx = int(step_rng.integers(len(examples)))
                ex = examples[idx]
                key = (stage_idx << 32) | idx
                if key not in h_cache:
                    states = provider.encode(ex.text)
                    target = getattr(ex, "target_token", states.n_tokens - 1)
                    h_cache[key] = states.at(target)
                    x_cache[key] = _operand_vector(ex.text, spec.n_inputs)
                result = decoder_loss_and_grad(
                    spec, params, h_cache[key], x_cache[key], ex.answer,
                    config.samples_per_token, seed=int(step_rng.integers(2 ** 63)),
                )
                if not math.isfinite(result.loss):
                    raise DivergenceError(
                        f"non-finite loss at step {global_step} on example {idx}"
                    )
                if result.stats["n_rewarded"] == 0:
                    skipped += 1
                else:
                    losses.append(result.loss)
                _accumulate(acc, [a for g in result.grads for _, a in g.arrays()],
                            1.0 / config.effective_batch)
                reward_rates.append(result.stats["reward_rate"])
            opt.step(acc)
            global_step += 1
            record = {
                "step": global_step,
                "stage": stage_idx,
                "loss": float(np.mean(losses)) if losses else 0.0,
                "reward_rate": float(np.mean(reward_rates)),
                "skipped": skipped,
                "wall_time": round(time.time() - t0, 3),
            }
            if probe is not None and probe_every and global_step % probe_every == 0:
                record["probe"] = probe(params)
            log.append(record)
    log.close()
    return params, log


def train_switch(config: TrainConfig, provider, streams: list,
                 params: SwitchParams | None = None, intermediate: int = 64,
                 log_path=None) -> tuple[SwitchParams, MetricsLog]:
    """BCE training on labeled token streams; decoder parameters are not
    touched here by construction (the switch owns its own head)."""
    from .controller import init_switch_params

    if params is None:
        params = init_switch_params(provider.n_layers, provider.hidden_dim,
                                    intermediate=intermediate, seed=config.seed)
    opt = AdamW([a for _, a in params.arrays()], lr=config.learning_rate,
                weight_decay=config.weight_decay)
    log = MetricsLog(log_path)
    step_rng = np.random.default_rng(config.seed)
    cache: dict[int, np.ndarray] = {}
    t0 = time.time()
    for step in range(config.max_steps):
        acc = [np.zeros_like(a) for _, a in params.arrays()]
        losses = []
        for _ in range(config.effective_batch):
            idx = int(step_rng.integers(len(streams)))
            stream = streams[idx]
            if idx not in cache:
                states = provider.encode(stream.text)
                if states.n_tokens != len(stream.labels):
                    raise ConfigError(
                        f"stream {idx}: {states.n_tokens} tokens vs "
                        f"{len(stream.labels)} labels"
                    )
                cache[idx] = states.states
            result = switch_loss_and_grad(params, cache[idx], stream.labels,
                                          mask=getattr(stream, "mask", None))
            if not math.isfinite(result.loss):
                raise DivergenceError(f"non-finite switch loss at step {step}")
            losses.append(result.loss)
            _accumulate(acc, [a for _, a in result.grads.arrays()],
                        1.0 / config.effective_batch)
        opt.step(acc)
        log.append({
            "step": step + 1,
            "loss": float(np.mean(losses)),
            "wall_time": round(time.time() - t0, 3),
        })
    log.close()
    return params, log
