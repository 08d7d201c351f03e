"""Orchestration: the switched generation loop, benchmark scoring, and
checkpoint bundles.

Generation interleaves a scripted text stream (standing in for a language
model's continuation) with symbolic evaluations: at every emission step the
switch reads the hidden states of the latest token and either splices in a
freshly computed number or lets the script continue.  Every firing is traced
with its wiring, operands, and output so responses are fully auditable.

Benchmark reports are byte-reproducible: given the same config and seed the
table and the record file come out identical, so reruns can be diffed.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import (
    ROLE_ASSISTANT,
    ROLE_USER,
    DecoderParams,
    SwitchParams,
    ToyEncoder,
    ToyEncoderConfig,
    decode_switch,
    decode_weights,
    load_controller,
    save_controller,
    tokenize,
    tokenize_spans,
)
from .datagen import BENCH_KINDS, BenchItem, build_benchmark
from .errors import ConfigError, NoOperandsError
from .network import (
    LayerWeights,
    NetSpec,
    argmax_function,
    dag_expression,
    dag_operator,
    evaluate,
    init_equal_probability,
    load_network,
    save_network,
)
from .textio import extract_numbers, format_output, score_response, select_operands

__all__ = [
    "GenerationTrace",
    "TraceStep",
    "EvalRecord",
    "BenchConfig",
    "BenchReport",
    "generate_with_switch",
    "run_benchmark",
    "perfect_response",
    "save_checkpoint",
    "load_checkpoint",
    "sem",
]


# --------------------------------------------------------------------------
# switched generation
# --------------------------------------------------------------------------

@dataclass
class TraceStep:
    step: int
    switch_score: float
    fired: bool
    emitted: str
    operator: str | None = None
    expression: str | None = None
    operands: list | None = None
    padded: bool = False
    value: float | None = None
    fallback: str | None = None


@dataclass
class GenerationTrace:
    steps: list[TraceStep] = field(default_factory=list)

    def fired_steps(self) -> list[TraceStep]:
        return [s for s in self.steps if s.fired]


def _script_pieces(script: list[str]) -> list[str]:
    """Token-grained emission pieces preserving original whitespace."""
    pieces = []
    for segment in script:
        spans = tokenize_spans(segment)
        for i, (_, start, _) in enumerate(spans):
            stop = spans[i + 1][1] if i + 1 < len(spans) else len(segment)
            pieces.append(segment[start:stop])
    return pieces


def generate_with_switch(provider, decoder_params: DecoderParams,
                         switch_params: SwitchParams, spec: NetSpec, prompt: str,
                         max_tokens: int = 64, script: list[str] | None = None,
                         argmax_samples: int = 100, rng_seed: int = 0) -> tuple[str, GenerationTrace]:
    """Generate a continuation of ``prompt``, splicing in computed numbers
    whenever the switch fires.

    ``script`` supplies the non-computed continuation text (the language
    model's role); when the switch keeps quiet the next scripted token is
    emitted.  Firing with no numbers in context, or an invalid evaluation,
    falls back to the scripted stream and is recorded in the trace.
    """
    text = prompt
    trace = GenerationTrace()
    pieces = _script_pieces(script or [])
    cursor = 0
    seed_rng = np.random.default_rng(rng_seed)
    for step in range(max_tokens):
        states = provider.encode(text)
        if states.n_tokens == 0:
            raise ConfigError("cannot generate from empty prompt")
        score = decode_switch(switch_params, states.at(states.n_tokens - 1))
        entry = TraceStep(step=step, switch_score=score, fired=False, emitted="")
        if score > 0.5:
            try:
                operands, padded = select_operands(extract_numbers(text), spec.n_inputs)
                weights = decode_weights(decoder_params, states.at(states.n_tokens - 1))
                best = argmax_function(spec, weights, n_samples=argmax_samples,
                                       rng_seed=int(seed_rng.integers(2 ** 63)))
                value = evaluate(spec, best.dag, operands)
                entry.operator = dag_operator(spec, best.dag)
                entry.expression = dag_expression(spec, best.dag)
                entry.operands = list(operands)
                entry.padded = padded
                if value is None:
                    entry.fallback = "invalid-evaluation"
                else:
                    entry.fired = True
                    entry.value = value
                    entry.emitted = format_output(value)
            except NoOperandsError:
                entry.fallback = "no-operands"
        if not entry.fired:
            if cursor >= len(pieces):
                trace.steps.append(entry)
                break
            entry.emitted = pieces[cursor]
            cursor += 1
        text += entry.emitted
        trace.steps.append(entry)
    return text[len(prompt):], trace


# --------------------------------------------------------------------------
# benchmark running
# --------------------------------------------------------------------------

@dataclass
class EvalRecord:
    prompt: str
    response: str
    truth: float
    correct: bool
    relative_error: float | None
    prompt_tokens: int
    response_tokens: int

    def record(self) -> dict:
        return {
            "prompt": self.prompt,
            "response": self.response,
            "truth": self.truth,
            "correct": self.correct,
            "relative_error": self.relative_error,
            "prompt_tokens": self.prompt_tokens,
            "response_tokens": self.response_tokens,
        }


def sem(flags: np.ndarray) -> float:
    """Standard error of the mean of binary outcomes: sqrt(p(1-p)/n)."""
    p = float(np.mean(flags))
    return math.sqrt(p * (1.0 - p) / len(flags))


def relative_error(response: str, truth: float) -> float | None:
    spans = extract_numbers(response)
    if not spans:
        return None
    pred = min((s.value for s in spans), key=lambda v: abs(v - truth))
    if truth == 0:
        return abs(pred - truth)
    return abs(pred - truth) / abs(truth)


def perfect_response(item: BenchItem) -> str:
    """Oracle answerer: evaluate the item's expression exactly and print it
    at full float precision (round-trippable)."""
    v = item.answer
    return str(int(v)) if float(v).is_integer() else repr(v)


@dataclass(frozen=True)
class BenchConfig:
    tasks: tuple = ("add", "sub", "mul", "div", "sqrt", "exp", "log", "sin", "cos")
    digits: int = 7
    n_items: int = 1000
    seed: int = 0
    answerer: str = "perfect"
    checkpoint_dir: str | None = None
    argmax_samples: int = 100
    max_tokens: int = 8

    def to_json(self) -> str:
        return json.dumps(self.__dict__ | {"tasks": list(self.tasks)}, sort_keys=True)


@dataclass
class BenchReport:
    config: BenchConfig
    per_task: dict
    records: dict

    def table(self) -> str:
        lines = [
            f"{'task':<20}{'accuracy %':>14}{'sem %':>8}{'rel err':>12}{'n':>7}",
            "-" * 61,
        ]
        for task in self.config.tasks:
            row = self.per_task[task]
            lines.append(
                f"{task:<20}{row['accuracy_pct']:>14.1f}{row['sem_pct']:>8.1f}"
                f"{row['mean_relative_error']:>12.3e}{row['n']:>7d}"
            )
        return "\n".join(lines) + "\n"


def _controller_answerer(config: BenchConfig):
    if config.checkpoint_dir is None:
        raise ConfigError("answerer 'controller' requires checkpoint_dir")
    spec, _, decoder, switch, run_cfg = load_checkpoint(config.checkpoint_dir)
    if decoder is None or switch is None:
        raise ConfigError("controller benchmark needs both decoder and switch params")
    provider = ToyEncoder(ToyEncoderConfig(**run_cfg.get("provider", {})))

    def answer(item: BenchItem) -> str:
        # single queries are evaluated chat-formatted, exactly like training
        prompt = f"{ROLE_USER}\n{item.prompt.rstrip()}\n{ROLE_ASSISTANT}\n"
        response, _ = generate_with_switch(
            provider, decoder, switch, spec, prompt,
            max_tokens=config.max_tokens, script=[""],
            argmax_samples=config.argmax_samples, rng_seed=config.seed,
        )
        return response

    return answer


def run_benchmark(config: BenchConfig, out_dir=None, answer_fn=None) -> BenchReport:
    """Score one answerer over the configured tasks.

    Accuracy is the fraction of items whose response contains a matching
    number; the standard error is sqrt(p(1-p)/n).  Relative error compares
    the closest number in the response against the truth (absolute error when
    the truth is zero); responses with no number at all are excluded from the
    error mean and counted separately.  ``answer_fn`` overrides the configured
    answerer with an arbitrary item -> response callable.
    """
    for task in config.tasks:
        if task not in BENCH_KINDS:
            raise ConfigError(f"unknown benchmark task {task!r}")
    if answer_fn is not None:
        answer = answer_fn
    elif config.answerer == "perfect":
        answer = perfect_response
    elif config.answerer == "controller":
        answer = _controller_answerer(config)
    else:
        raise ConfigError(f"unknown answerer {config.answerer!r}")
    per_task = {}
    records = {}
    seed_root = np.random.SeedSequence(config.seed)
    task_seeds = {t: int(s.generate_state(1, np.uint64)[0] >> 2)
                  for t, s in zip(config.tasks, seed_root.spawn(len(config.tasks)))}
    for task in config.tasks:
        digits = config.digits if task in ("add", "sub", "mul", "div", "sqrt") else None
        items = build_benchmark(task, digits, config.n_items, task_seeds[task])
        task_records = []
        for item in items:
            response = answer(item)
            rec = EvalRecord(
                prompt=item.prompt,
                response=response,
                truth=item.answer,
                correct=score_response(response, item.answer),
                relative_error=relative_error(response, item.answer),
                prompt_tokens=len(tokenize(item.prompt)),
                response_tokens=len(tokenize(response)),
            )
            task_records.append(rec)
        flags = np.array([r.correct for r in task_records], dtype=float)
        errors = [r.relative_error for r in task_records if r.relative_error is not None]
        per_task[task] = {
            "accuracy_pct": 100.0 * float(np.mean(flags)),
            "sem_pct": 100.0 * sem(flags),
            "mean_relative_error": float(np.mean(errors)) if errors else math.inf,
            "n": len(task_records),
            "n_unanswered": sum(1 for r in task_records if r.relative_error is None),
        }
        records[task] = task_records
    report = BenchReport(config=config, per_task=per_task, records=records)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(report.table())
        (out_dir / "config.json").write_text(config.to_json() + "\n")
        with open(out_dir / "records.jsonl", "w") as fh:
            for task in config.tasks:
                for rec in records[task]:
                    fh.write(json.dumps({"task": task, **rec.record()}, sort_keys=True) + "\n")
    return report


# --------------------------------------------------------------------------
# checkpoint bundle: network + controller + run config in one directory
# --------------------------------------------------------------------------

def save_checkpoint(directory, spec: NetSpec, decoder: DecoderParams | None = None,
                    switch: SwitchParams | None = None, config: dict | None = None,
                    weights: LayerWeights | None = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_network(directory / "network.ocnw", spec,
                 weights if weights is not None else init_equal_probability(spec))
    if decoder is not None or switch is not None:
        save_controller(directory / "controller.occt", decoder=decoder, switch=switch,
                        spec=spec if decoder is not None else None)
    (directory / "config.json").write_text(
        json.dumps(config or {}, sort_keys=True, indent=2) + "\n"
    )


def load_checkpoint(directory):
    directory = Path(directory)
    spec, weights = load_network(directory / "network.ocnw")
    decoder = switch = None
    controller_path = directory / "controller.occt"
    if controller_path.exists():
        decoder, switch = load_controller(controller_path, spec=spec)
    config_path = directory / "config.json"
    config = json.loads(config_path.read_text()) if config_path.exists() else {}
    return spec, weights, decoder, switch, config
