"""Synthetic prompt/answer data: arithmetic questions with sampled operands,
word problems, labeled token streams for routing supervision, and the
benchmark datasets.

Every generated record carries the expression it was built from plus the
sampled values, so tests can re-derive the recorded answer through an
independent evaluator.  All sampling is seed-driven and byte-reproducible.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .controller import ROLE_ASSISTANT, ROLE_USER, tokenize, tokenize_spans
from .errors import ConfigError
from .textio import render_number

__all__ = [
    "GeneratedExample",
    "SwitchLabeledStream",
    "BenchItem",
    "CATEGORY_MIX",
    "BENCH_KINDS",
    "sample_decoder_example",
    "sample_decoder_dataset",
    "sample_expression_example",
    "sample_switch_stream",
    "sample_switch_dataset",
    "build_benchmark",
    "write_records",
    "read_records",
]

CATEGORY_MIX = {"simple-arith": 0.4, "complex-arith": 0.4, "word": 0.2}
MULTI_STEP_SHARE = 0.3  # share of word-problem draws that are multi-step

NAMES = ("Alex", "Sam", "Maya", "Liam", "Noah", "Emma", "Olivia", "Ethan", "Ava", "Lucas")


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratedExample:
    text: str
    inputs: tuple
    answer: float
    target_token: int
    category: str
    operator: str | None
    expr: str
    values: dict
    seed: int
    unit_categories: tuple = ()

    def record(self) -> dict:
        return {
            "text": self.text,
            "inputs": list(self.inputs),
            "answer": self.answer,
            "category": self.category,
            "operator": self.operator,
            "expr": self.expr,
            "values": self.values,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SwitchLabeledStream:
    """Token labels for routing supervision.

    ``labels[i]`` marks that the emission after token i should come from the
    calculator.  ``mask[i]`` marks the decision points that exist during
    generation: the emissions of assistant responses (including the one right
    after the prompt).  Tokens inside user prompts never drive an emission,
    so they carry mask 0 and take no part in the loss or in scoring.
    """

    text: str
    labels: np.ndarray
    mask: np.ndarray
    n_marked: int
    seed: int

    def record(self) -> dict:
        return {
            "text": self.text,
            "labels": [int(v) for v in self.labels],
            "mask": [int(v) for v in self.mask],
            "seed": self.seed,
        }


@dataclass(frozen=True)
class BenchItem:
    prompt: str
    inputs: tuple
    answer: float
    kind: str
    expr: str

    def record(self) -> dict:
        return {
            "text": self.prompt,
            "inputs": list(self.inputs),
            "answer": self.answer,
            "category": self.kind,
            "expr": self.expr,
        }


# --------------------------------------------------------------------------
# value formatting
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float) and not v.is_integer():
        return repr(v)
    return str(int(v))


def _operand(v, after_op: bool) -> str:
    """Negative values directly after an operator get parentheses."""
    s = _fmt(v)
    if after_op and (isinstance(v, (int, float)) and v < 0):
        return f"({s})"
    return s


def _round2(x: float) -> float:
    return float(round(x, 2))


# --------------------------------------------------------------------------
# question units: (question text, values dict, answer, expr, operator, category)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Unit:
    question: str
    values: dict
    answer: float
    expr: str
    operator: str | None
    category: str


_SIMPLE_RANGES = [
    ("int", -10, 10), ("int", -100, 100), ("int", -1000, 1000),
    ("int", -20000, 20000), ("float", -1.0, 1.0), ("float", -1000.0, 1000.0),
]

_SIMPLE_OPS = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_PY_OPS = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def _draw_simple_value(rng, kind, lo, hi):
    if kind == "int":
        return int(rng.integers(lo, hi + 1))
    return _round2(float(rng.uniform(lo, hi)))


def _simple_unit(rng) -> _Unit:
    op = str(rng.choice(list(_SIMPLE_OPS)))
    kind, lo, hi = _SIMPLE_RANGES[int(rng.integers(len(_SIMPLE_RANGES)))]
    a = _draw_simple_value(rng, kind, lo, hi)
    b = _draw_simple_value(rng, kind, lo, hi)
    while op == "div" and b == 0:
        b = _draw_simple_value(rng, kind, lo, hi)
    sym = _SIMPLE_OPS[op]
    question = f"{_operand(a, False)} {sym} {_operand(b, True)} = "
    answer = {"add": a + b, "sub": a - b, "mul": a * b,
              "div": a / b if b != 0 else 0.0}[op]
    return _Unit(question, {"a": a, "b": b}, float(answer),
                 f"a {_PY_OPS[op]} b", op, "simple-arith")


def _complex_unit(rng) -> _Unit:
    op = str(rng.choice(["sqrt", "log", "exp", "power", "sin", "cos"]))
    if op in ("sqrt", "log"):
        style = int(rng.integers(4))
        if style == 0:
            a = int(rng.integers(1, 101))
        elif style == 1:
            a = int(rng.integers(1, 20001))
        elif style == 2:
            a = _round2(float(rng.uniform(0.01, 100.0)))
        else:
            a = _round2(float(rng.uniform(0.01, 20000.0)))
        a = max(a, 0.01)
        question = f"{op}({_fmt(a)}) = "
        answer = math.sqrt(a) if op == "sqrt" else math.log(a)
        return _Unit(question, {"a": a}, float(answer),
                     f"math.{op}(a)", op, "complex-arith")
    if op == "exp":
        a = (int(rng.integers(-10, 11)) if rng.random() < 0.5
             else _round2(float(rng.uniform(-10.0, 10.0))))
        return _Unit(f"exp({_fmt(a)}) = ", {"a": a}, float(math.exp(a)),
                     "math.exp(a)", "exp", "complex-arith")
    if op == "power":
        base = (int(rng.integers(1, 26)) if rng.random() < 0.5
                else _round2(float(rng.uniform(0.1, 25.0))))
        base = max(base, 0.1)
        expo = int(rng.integers(-6, 7))
        question = f"{_fmt(base)} ^ {_operand(expo, True)} = "
        return _Unit(question, {"a": base, "b": expo}, float(base ** expo),
                     "a ** b", "power", "complex-arith")
    # trig inputs mirror the evaluation range
    a = _round2(float(rng.uniform(-2 * math.pi, 2 * math.pi)))
    fn = math.sin if op == "sin" else math.cos
    return _Unit(f"{op}({_fmt(a)}) = ", {"a": a}, float(fn(a)),
                 f"math.{op}(a)", op, "complex-arith")


# word problems; single-step templates keep exactly the two operands in
# operand order so the most-recent-numbers rule feeds the right values

def _money(rng, lo, hi):
    return _round2(float(rng.uniform(lo, hi)))


def _int(rng, lo, hi):
    return int(rng.integers(lo, hi + 1))


def _single_word_unit(rng) -> _Unit:
    n = str(rng.choice(NAMES))
    kind = int(rng.integers(31))
    if kind < 6:  # addition
        a, b = _int(rng, 3, 900), _int(rng, 3, 900)
        if rng.random() < 0.3:
            a, b = _money(rng, 1, 400), _money(rng, 1, 400)
        text = [
            f"{n} has {_fmt(a)} apples and buys {_fmt(b)} more. How many apples does {n} have now?",
            f"There are {_fmt(a)} red marbles and {_fmt(b)} blue marbles in a jar. How many marbles are there altogether?",
            f"{n} scored {_fmt(a)} points in the first game and {_fmt(b)} points in the second. What is the total score?",
            f"A tank holds {_fmt(a)} liters and another tank holds {_fmt(b)} liters. How many liters do they hold together?",
            f"{n} walked {_fmt(a)} km in the morning and {_fmt(b)} km in the evening. How far did {n} walk in total?",
            f"{n} earned {_fmt(a)} dollars on Monday and {_fmt(b)} dollars on Tuesday. How much did {n} earn altogether?",
        ][kind]
        return _Unit(text, {"a": a, "b": b}, float(a + b), "a + b", "add", "single-step-word")
    if kind < 12:  # subtraction, minuend first
        b = _int(rng, 2, 400)
        a = b + _int(rng, 1, 500)
        if rng.random() < 0.3:
            b = _money(rng, 1, 200)
            a = _round2(b + _money(rng, 1, 300))
        text = [
            f"{n} had {_fmt(a)} stickers and gave {_fmt(b)} away. How many stickers are left?",
            f"A shop had {_fmt(a)} loaves of bread and sold {_fmt(b)}. How many loaves remain?",
            f"{n} had {_fmt(a)} dollars and spent {_fmt(b)}. How much money is left?",
            f"There were {_fmt(a)} birds on a wire and {_fmt(b)} flew away. How many birds are left?",
            f"A rope is {_fmt(a)} meters long and {_fmt(b)} meters are cut off. How long is the rope now?",
            f"{n} collected {_fmt(a)} shells but lost {_fmt(b)}. How many shells does {n} have now?",
        ][kind - 6]
        return _Unit(text, {"a": a, "b": b}, float(a - b), "a - b", "sub", "single-step-word")
    if kind < 18:  # multiplication
        a = _int(rng, 2, 99)
        if rng.random() < 0.4:
            a = _money(rng, 1, 99)
        b = _int(rng, 2, 30)
        text = [
            f"Each box holds {_fmt(a)} pencils. How many pencils are in {_fmt(b)} boxes?",
            f"A ticket costs {_fmt(a)} dollars. How much do {_fmt(b)} tickets cost?",
            f"{n} reads {_fmt(a)} pages per day. How many pages does {n} read in {_fmt(b)} days?",
            f"Each crate has {_fmt(a)} bottles. How many bottles are in {_fmt(b)} crates?",
            f"A worker earns {_fmt(a)} dollars per hour. How much does the worker earn in {_fmt(b)} hours?",
            f"{n} writes {_fmt(a)} pages per session. How many pages after {_fmt(b)} sessions?",
        ][kind - 12]
        return _Unit(text, {"a": a, "b": b}, float(a * b), "a * b", "mul", "single-step-word")
    if kind < 24:  # division, divisible by construction
        b = _int(rng, 2, 12)
        q = _int(rng, 2, 80)
        a = b * q
        text = [
            f"{_fmt(a)} cookies are shared equally among {_fmt(b)} friends. How many cookies does each friend get?",
            f"A {_fmt(a)} km trip is split into {_fmt(b)} equal parts. How long is each part?",
            f"{n} splits {_fmt(a)} dollars evenly between {_fmt(b)} people. How much does each person get?",
            f"{_fmt(a)} apples are packed {_fmt(b)} to a bag. How many bags are filled?",
            f"A factory makes {_fmt(a)} toys in {_fmt(b)} hours. How many toys does it make per hour?",
            f"{_fmt(a)} students sit in {_fmt(b)} equal rows. How many students are in each row?",
        ][kind - 18]
        return _Unit(text, {"a": a, "b": b}, float(a / b), "a / b", "div", "single-step-word")
    if kind < 26:  # square root
        root = _int(rng, 2, 140)
        a = root * root
        text = [
            f"A square garden covers {_fmt(a)} square meters. How long is one side?",
            f"What is the square root of {_fmt(a)}?",
        ][kind - 24]
        return _Unit(text, {"a": a}, float(root), "math.sqrt(a)", "sqrt", "single-step-word")
    if kind == 26:
        base, expo = _int(rng, 2, 12), _int(rng, 2, 4)
        text = f"What is {_fmt(base)} raised to the power of {_fmt(expo)}?"
        return _Unit(text, {"a": base, "b": expo}, float(base ** expo),
                     "a ** b", "power", "single-step-word")
    if kind == 27:
        a = _round2(float(rng.uniform(0.5, 500.0)))
        return _Unit(f"What is the natural logarithm of {_fmt(a)}?", {"a": a},
                     float(math.log(a)), "math.log(a)", "log", "single-step-word")
    if kind == 28:
        a = _round2(float(rng.uniform(-6.0, 6.0)))
        return _Unit(f"What is the exponential of {_fmt(a)}?", {"a": a},
                     float(math.exp(a)), "math.exp(a)", "exp", "single-step-word")
    if kind == 29:
        a = _round2(float(rng.uniform(-6.0, 6.0)))
        return _Unit(f"What is the sine of {_fmt(a)} radians?", {"a": a},
                     float(math.sin(a)), "math.sin(a)", "sin", "single-step-word")
    a = _round2(float(rng.uniform(-6.0, 6.0)))
    return _Unit(f"What is the cosine of {_fmt(a)} radians?", {"a": a},
                 float(math.cos(a)), "math.cos(a)", "cos", "single-step-word")


def _multi_word_unit(rng) -> _Unit:
    n = str(rng.choice(NAMES))
    kind = int(rng.integers(10))
    if kind == 0:
        a, b = _int(rng, 10, 40), _int(rng, 2, 9)
        c = _money(rng, 5, 99)
        text = (f"{n} had {_fmt(a)} video games but {_fmt(b)} of them were broken. "
                f"Selling the working games for {_fmt(c)} dollars each, how much can {n} earn?")
        return _Unit(text, {"a": a, "b": b, "c": c}, float((a - b) * c),
                     "(a - b) * c", None, "multi-step-word")
    if kind == 1:
        a, b = _int(rng, 2, 9), _int(rng, 2, 9)
        c = _money(rng, 10, 99)
        text = (f"{n} answered {_fmt(a)} questions in the first half and {_fmt(b)} in the "
                f"second half, each worth {_fmt(c)} points. What was the final score?")
        return _Unit(text, {"a": a, "b": b, "c": c}, float((a + b) * c),
                     "(a + b) * c", None, "multi-step-word")
    if kind == 2:
        a = _money(rng, 20, 200)
        b, c = _int(rng, 2, 6), _int(rng, 1, 5)
        text = (f"Tickets cost {_fmt(a)} dollars each. {n} bought {_fmt(b)} tickets and "
                f"{_fmt(c)} extra ones. How much did {n} spend?")
        return _Unit(text, {"a": a, "b": b, "c": c}, float(a * (b + c)),
                     "a * (b + c)", None, "multi-step-word")
    if kind == 3:
        a = _int(rng, 20, 90)
        b = _int(rng, 5, 19)
        c = _int(rng, 5, 30)
        text = (f"A baker made {_fmt(a)} muffins, sold {_fmt(b)}, and then baked "
                f"{_fmt(c)} more. How many muffins are there now?")
        return _Unit(text, {"a": a, "b": b, "c": c}, float(a - b + c),
                     "a - b + c", None, "multi-step-word")
    if kind == 4:
        a, b = _int(rng, 2, 9), _int(rng, 5, 15)
        c = _int(rng, 1, a * b - 1)
        text = (f"{n} bought {_fmt(a)} packs of {_fmt(b)} cards and gave away "
                f"{_fmt(c)} cards. How many cards does {n} have left?")
        return _Unit(text, {"a": a, "b": b, "c": c}, float(a * b - c),
                     "a * b - c", None, "multi-step-word")
    if kind == 5:
        b, c = _int(rng, 2, 5), _int(rng, 2, 9)
        a = b * c + _int(rng, 3, 30)
        text = (f"There were {_fmt(a)} cats on a rock. {_fmt(b)} boats came and carried "
                f"away {_fmt(c)} cats each. How many cats were left?")
        return _Unit(text, {"a": a, "b": b, "c": c}, float(a - b * c),
                     "a - b * c", None, "multi-step-word")
    if kind == 6:
        a = _money(rng, 5, 60)
        b = _int(rng, 3, 12)
        c = _money(rng, 5, 99)
        text = (f"{n} saved {_fmt(a)} dollars per week for {_fmt(b)} weeks and then "
                f"spent {_fmt(c)} dollars. How much money remains?")
        return _Unit(text, {"a": a, "b": b, "c": c}, float(a * b - c),
                     "a * b - c", None, "multi-step-word")
    if kind == 7:
        a, b = _int(rng, 2, 12), _int(rng, 2, 20)
        c = _int(rng, 1, 40)
        text = (f"A garden has {_fmt(a)} rows of {_fmt(b)} plants and {_fmt(c)} more "
                f"plants in pots. How many plants are there in all?")
        return _Unit(text, {"a": a, "b": b, "c": c}, float(a * b + c),
                     "a * b + c", None, "multi-step-word")
    if kind == 8:
        c = _int(rng, 2, 8)
        total = c * _int(rng, 2, 50)
        a = _int(rng, 1, total - 1)
        b = total - a
        text = (f"{n} had {_fmt(a)} dollars and earned {_fmt(b)} more, then split the "
                f"total equally among {_fmt(c)} jars. How much goes in each jar?")
        return _Unit(text, {"a": a, "b": b, "c": c}, float((a + b) / c),
                     "(a + b) / c", None, "multi-step-word")
    c = _int(rng, 2, 9)
    b = _int(rng, 2, 50)
    a = b + c * _int(rng, 2, 40)
    text = (f"A tank had {_fmt(a)} liters of water. {_fmt(b)} liters leaked out and the "
            f"rest was poured into {_fmt(c)} equal barrels. How much water is in each barrel?")
    return _Unit(text, {"a": a, "b": b, "c": c}, float((a - b) / c),
                 "(a - b) / c", None, "multi-step-word")


def _draw_unit(rng, allow_multistep: bool) -> _Unit:
    u = rng.random()
    if u < CATEGORY_MIX["simple-arith"]:
        return _simple_unit(rng)
    if u < CATEGORY_MIX["simple-arith"] + CATEGORY_MIX["complex-arith"]:
        return _complex_unit(rng)
    if allow_multistep and rng.random() < MULTI_STEP_SHARE:
        return _multi_word_unit(rng)
    return _single_word_unit(rng)


# --------------------------------------------------------------------------
# decoder examples
# --------------------------------------------------------------------------

def _unit_question_with_cue(unit: _Unit) -> str:
    """Word problems end with a question mark; give them an explicit answer cue."""
    if unit.category.endswith("word"):
        return f"{unit.question} The answer is "
    return unit.question


def sample_decoder_example(seed: int, answer_prefix: bool = False) -> GeneratedExample:
    """One training example: a single chat-formatted query or a plain
    concatenation of query/answer pairs ending at the final query's cue."""
    rng = np.random.default_rng(seed)
    concatenated = rng.random() < 0.5
    if not concatenated:
        unit = _draw_unit(rng, allow_multistep=False)
        if answer_prefix:
            cue = "Answer = "
        elif unit.category.endswith("word"):
            cue = "The answer is "
        else:
            cue = ""
        text = f"{ROLE_USER}\n{unit.question.rstrip()}\n{ROLE_ASSISTANT}\n{cue}"
        cats = (unit.category,)
    else:
        k = int(rng.integers(2, 5))
        parts = []
        cats = []
        for j in range(k):
            last = j == k - 1
            unit = _draw_unit(rng, allow_multistep=not last)
            cats.append(unit.category)
            if last:
                parts.append(_unit_question_with_cue(unit))
            else:
                parts.append(f"{_unit_question_with_cue(unit)}{render_number(unit.answer)}\n")
        text = "".join(parts)
        cats = tuple(cats)
    return GeneratedExample(
        text=text,
        inputs=tuple(unit.values[k] for k in sorted(unit.values)),
        answer=unit.answer,
        target_token=len(tokenize(text)) - 1,
        category=unit.category,
        operator=unit.operator,
        expr=unit.expr,
        values=unit.values,
        seed=seed,
        unit_categories=cats,
    )


def sample_decoder_dataset(n: int, seed: int, answer_prefix: bool = False) -> list[GeneratedExample]:
    root = np.random.SeedSequence(seed)
    return [
        sample_decoder_example(int(s.generate_state(1, np.uint64)[0] >> 2), answer_prefix)
        for s in root.spawn(n)
    ]


# --------------------------------------------------------------------------
# expression prompts (multi-operation mode)
# --------------------------------------------------------------------------

_EXPR_OPS = ("+", "-", "*", "/")


def _precedence_eval(vals, ops) -> float:
    vals, ops = list(vals), list(ops)
    i = 0
    while i < len(ops):
        if ops[i] in ("*", "/"):
            left, right = vals[i], vals[i + 1]
            vals[i:i + 2] = [left * right if ops[i] == "*" else left / right]
            ops.pop(i)
        else:
            i += 1
    acc = vals[0]
    for op, v in zip(ops, vals[1:]):
        acc = acc + v if op == "+" else acc - v
    return float(acc)


def _expression(rng, n_ops: int):
    vals = []
    for _ in range(n_ops + 1):
        mag = int(rng.integers(2, 100))
        vals.append(-mag if rng.random() < 0.3 else mag)
    ops = [str(rng.choice(_EXPR_OPS)) for _ in range(n_ops)]
    text = _operand(vals[0], False)
    expr = _fmt(vals[0])
    for op, v in zip(ops, vals[1:]):
        text += f" {op} {_operand(v, True)}"
        expr += f" {op} {_fmt(v)}"
    answer = _precedence_eval(vals, ops)
    return text, expr, vals, ops, answer


def sample_expression_example(seed: int, max_ops: int = 2,
                              answer_prefix: bool = False) -> GeneratedExample:
    """Chat-formatted bare expression prompt with 1..max_ops operations,
    ground truth following operator precedence."""
    rng = np.random.default_rng(seed)
    n_ops = int(rng.integers(1, max_ops + 1))
    core, expr, vals, ops, answer = _expression(rng, n_ops)
    prefix = "Answer = " if answer_prefix else ""
    text = f"{ROLE_USER}\n{core} = \n{ROLE_ASSISTANT}\n{prefix}"
    return GeneratedExample(
        text=text,
        inputs=tuple(vals),
        answer=answer,
        target_token=len(tokenize(text)) - 1,
        category=f"expression-{n_ops}op",
        operator=None,
        expr=expr,
        values={f"v{i}": v for i, v in enumerate(vals)},
        seed=seed,
    )


# --------------------------------------------------------------------------
# switch streams
# --------------------------------------------------------------------------

def _chat_unit(user: str, response_pieces: list) -> list:
    """Tag pieces: user turns are prompt context, everything after the
    assistant header is response (numbers to be computed stay bare floats)."""
    tagged = [(f"{ROLE_USER}\n{user}\n{ROLE_ASSISTANT}\n", "prompt")]
    for piece in response_pieces:
        if isinstance(piece, str):
            tagged.append((piece, "response"))
        else:
            tagged.append((float(piece), "computed"))
    tagged.append(("\n", "response"))
    return tagged


def _simple_qa_pieces(rng) -> list:
    # direct answers dominate: at response start the features cannot reveal
    # whether a scripted preamble is coming, and the deployed behavior is to
    # answer arithmetic queries immediately; preamble variants stay in the mix
    # to teach mid-response firing
    unit = _simple_unit(rng)
    core = unit.question[:-3]  # strip trailing " = "
    u = rng.random()
    if u < 0.7:
        resp = [unit.answer]
    elif u < 0.85:
        resp = ["Answer = ", unit.answer]
    else:
        resp = [f"{core} = ", unit.answer]
    return _chat_unit(unit.question.rstrip(), resp)


def _writer_pieces(rng) -> list:
    r = round(float(rng.uniform(1.5, 9.9)), 1)
    s = _int(rng, 2, 12)
    v = r * s
    user = (f"An author writes {_fmt(r)} pages per session. After {_fmt(s)} sessions, "
            f"the total pages written are")
    resp = [
        f"The author writes {_fmt(r)} pages per session. After {_fmt(s)} sessions, "
        f"the author will have written {_fmt(r)} x {_fmt(s)} = ",
        v,
        f" pages. The answer is {_fmt(round(v))}.",
    ]
    return _chat_unit(user, resp)


def _fruit_pieces(rng) -> list:
    a, b, c = _int(rng, 5, 20), _int(rng, 2, 9), _int(rng, 2, 9)
    bc, total = b * c, a + b * c
    user = (f"I have {_fmt(a)} oranges and {_fmt(b)} apple trees, each of them with "
            f"{_fmt(c)} apples. How much fruit do I have?")
    resp = [
        f"The total number of pieces of fruit is {_fmt(a)} oranges + {_fmt(b)} trees "
        f"times {_fmt(c)} apples = {_fmt(a)} + ({_fmt(b)} x {_fmt(c)}) = "
        f"{_fmt(a)} + {_fmt(bc)} = ",
        float(total),
        f". The answer is {_fmt(total)}.",
    ]
    return _chat_unit(user, resp)


def _nickels_pieces(rng) -> list:
    p, k = _int(rng, 3, 9), _int(rng, 2, 9)
    nick, total = 5 * k, 5 * k + p
    user = (f"Sally has {_fmt(p)} pennies and {_fmt(k)} nickels. "
            f"How many pennies does she have in total?")
    resp = [
        f"1. Convert the number of nickels to pennies: {_fmt(k)} nickels is "
        f"{_fmt(nick)} pennies.\n2. Add total number of pennies {_fmt(nick)} + {_fmt(p)} = ",
        float(total),
        f".\nThe answer is {_fmt(total)}.",
    ]
    return _chat_unit(user, resp)


def _percent_pieces(rng) -> list:
    pct = _int(rng, 5, 95)
    x = _money(rng, 10, 400)
    frac = pct / 100
    ans = frac * x
    user = f"What is {_fmt(pct)} percent of {_fmt(x)}?"
    resp = [
        f"{_fmt(pct)}% of {_fmt(x)} = {render_number(ans)}\nExplanation:\n"
        f"{_fmt(pct)} / 100 = ",
        float(frac),
        f"\n{_fmt(frac)} x {_fmt(x)} = ",
        float(ans),
    ]
    return _chat_unit(user, resp)


def _cats_pieces(rng) -> list:
    b, c, m = _int(rng, 2, 5), _int(rng, 2, 9), _int(rng, 1, 5)
    left1 = 7 * m
    a = b * c + left1
    q = 3 * m
    left2 = left1 - q
    user = (f"There were {_fmt(a)} cats on a rock. {_fmt(b)} boats came and carried "
            f"away {_fmt(c)} cats each. How many cats were left?")
    resp = [
        f"There were originally {_fmt(a)} cats. {_fmt(b)} boats came and each took "
        f"away {_fmt(c)} cats. So {_fmt(b)} x {_fmt(c)} = ",
        float(b * c),
        f".\n{_fmt(a)} - {_fmt(b * c)} = ",
        float(left1),
        f".\nThen 3/7 of them ran away. 3/7 of {_fmt(left1)} is {_fmt(q)}.\n"
        f"{_fmt(left1)} - {_fmt(q)} = ",
        float(left2),
        f".\nSo there were {_fmt(left2)} cats left.",
    ]
    return _chat_unit(user, resp)


def _three_ary_pieces(rng) -> list:
    m = _int(rng, 3, 15)
    x, y, z = _int(rng, 1, 5), _int(rng, 1, 5), _int(rng, 1, 5)
    s = x + y + z
    total = s * m
    user = (f"{_fmt(m)} people have {_fmt(x)} apples, {_fmt(y)} oranges, and {_fmt(z)} "
            f"peaches each. How many pieces of fruit do they have?")
    resp = [
        f"Each person has {_fmt(x)} + {_fmt(y)} + {_fmt(z)} = {_fmt(s)} pieces of fruit.\n"
        f"In total, they have {_fmt(s)} x {_fmt(m)} = ",
        float(total),
        f".\nThe answer is {_fmt(total)}.",
    ]
    return _chat_unit(user, resp)


def _games_pieces(rng) -> list:
    a, b = _int(rng, 10, 40), _int(rng, 2, 9)
    p = _money(rng, 5, 99)
    sold = a - b
    earn = sold * p
    user = (f"Mike had {_fmt(a)} video games but {_fmt(b)} of them weren't working. "
            f"If he wanted to sell the working games for {_fmt(p)} each, "
            f"how much money could he earn?")
    resp = [
        f"Mike had {_fmt(a)} video games. {_fmt(b)} weren't working, so he had "
        f"{_fmt(a)} - {_fmt(b)} = ",
        float(sold),
        f". He can sell {_fmt(sold)} games for {_fmt(p)} each. "
        f"{_fmt(sold)} x {_fmt(p)} is ",
        float(earn),
        f". So Mike could earn {render_number(earn)} dollars.",
    ]
    return _chat_unit(user, resp)


def _rounding_pieces(rng) -> list:
    x = round(float(rng.uniform(10, 99)), 1)
    y = _int(rng, 2, 9)
    v = x * y
    user = f"A plank is {_fmt(x)} cm long. How long are {_fmt(y)} planks together?"
    resp = [
        f"{_fmt(x)} x {_fmt(y)} = ",
        float(v),
        f". Rounded to the nearest whole number, that is {_fmt(round(v))}.",
    ]
    return _chat_unit(user, resp)


_CURATED_BUILDERS = (
    _writer_pieces, _fruit_pieces, _nickels_pieces, _percent_pieces,
    _cats_pieces, _three_ary_pieces, _games_pieces, _rounding_pieces,
)


def _stub_pieces(rng) -> list:
    unit = _multi_word_unit(rng)
    return [
        (f"{ROLE_USER}\n{unit.question}\n{ROLE_ASSISTANT}\n", "prompt"),
        ("The answer is ", "response"),
    ]


def sample_switch_stream(seed: int) -> SwitchLabeledStream:
    """A labeled stream: the 1s sit on the tokens immediately preceding
    values the calculator should emit.

    Half the streams are single arithmetic prompts answered directly (so the
    trained system answers simple queries in one step); the other half are
    conversational concatenations mixing direct Q/A units, the curated
    positive/negative scenarios, and multi-step stubs that must not fire.
    """
    rng = np.random.default_rng(seed)
    if rng.random() < 0.5:
        unit = _simple_unit(rng)
        pieces = _chat_unit(unit.question.rstrip(), [unit.answer])
    else:
        n_units = int(rng.integers(1, 5))
        pieces = []
        for _ in range(n_units):
            u = rng.random()
            if u < 0.25:
                pieces.extend(_simple_qa_pieces(rng))
            elif u < 0.95:
                builder = _CURATED_BUILDERS[int(rng.integers(len(_CURATED_BUILDERS)))]
                pieces.extend(builder(rng))
            else:
                pieces.extend(_stub_pieces(rng))
    parts = []
    marks = []
    response_ranges = []
    length = 0
    for content, tag in pieces:
        if tag == "computed":
            marks.append(length)
            parts.append(render_number(float(content)))
        else:
            parts.append(content)
        if tag != "prompt":
            if response_ranges and response_ranges[-1][1] == length:
                response_ranges[-1][1] = length + len(parts[-1])
            else:
                response_ranges.append([length, length + len(parts[-1])])
        length += len(parts[-1])
    text = "".join(parts)
    spans = tokenize_spans(text)
    labels = np.zeros(len(spans), dtype=np.int8)
    ends = [e for _, _, e in spans]
    for pos in marks:
        idx = None
        for i, e in enumerate(ends):
            if e <= pos:
                idx = i
            else:
                break
        if idx is None:
            raise ConfigError("computed value with no preceding token")
        labels[idx] = 1
    # a token is a decision point when the emission following it lands inside
    # a response range; the prompt's final token decides the first emission
    mask = np.zeros(len(spans), dtype=np.int8)
    for i in range(len(spans)):
        nxt = spans[i + 1][1] if i + 1 < len(spans) else len(text)
        if any(lo <= nxt < hi for lo, hi in response_ranges):
            mask[i] = 1
    return SwitchLabeledStream(text=text, labels=labels, mask=mask,
                               n_marked=len(marks), seed=seed)


def sample_switch_dataset(n: int, seed: int) -> list[SwitchLabeledStream]:
    root = np.random.SeedSequence(seed)
    return [
        sample_switch_stream(int(s.generate_state(1, np.uint64)[0] >> 2))
        for s in root.spawn(n)
    ]


# --------------------------------------------------------------------------
# benchmarks
# --------------------------------------------------------------------------

BENCH_KINDS = ("add", "sub", "mul", "div", "sqrt", "exp", "log", "sin", "cos",
               "multistep-2layer")


def _digit_int(rng, digits: int, signed: bool = True) -> int:
    mag = int(rng.integers(10 ** (digits - 1), 10 ** digits))
    if signed and rng.random() < 0.5:
        return -mag
    return mag


def _sig6(x: float) -> float:
    return float(f"{x:.6g}")


def build_benchmark(kind: str, digits_or_range, n: int, seed: int) -> list[BenchItem]:
    """Evaluation items for one task; prompts follow the published formats
    (decimals suffix for division, explicit radians for trig)."""
    if kind not in BENCH_KINDS:
        raise ConfigError(f"unknown benchmark kind {kind!r}")
    rng = np.random.default_rng(seed)
    items = []
    if kind in ("add", "sub", "mul", "div", "sqrt"):
        digits = int(digits_or_range or 7)
        if digits not in (3, 5, 7):
            raise ConfigError("digit count must be 3, 5, or 7")
    for _ in range(n):
        if kind in ("add", "sub", "mul", "div"):
            a = _digit_int(rng, digits)
            b = _digit_int(rng, digits)
            sym = _SIMPLE_OPS[kind]
            prompt = f"{_operand(a, False)} {sym} {_operand(b, True)} = "
            if kind == "div":
                prompt += "Give the answer in decimals. "
            answer = {"add": a + b, "sub": a - b, "mul": a * b, "div": a / b}[kind]
            expr = f"{a} {sym} {b}"
            inputs = (a, b)
        elif kind == "sqrt":
            a = _digit_int(rng, digits, signed=False)
            prompt = f"sqrt({a}) = "
            answer, expr, inputs = math.sqrt(a), f"math.sqrt({a})", (a,)
        elif kind == "log":
            x = _sig6(float(np.exp(rng.uniform(np.log(1e-10), np.log(1e10)))))
            prompt = f"log({_fmt(x)}) = "
            answer, expr, inputs = math.log(x), f"math.log({_fmt(x)})", (x,)
        elif kind == "exp":
            x = _sig6(float(rng.uniform(-10, 10)))
            prompt = f"exp({_fmt(x)}) = "
            answer, expr, inputs = math.exp(x), f"math.exp({_fmt(x)})", (x,)
        elif kind in ("sin", "cos"):
            x = _sig6(float(rng.uniform(-2 * math.pi, 2 * math.pi)))
            prompt = f"{kind}({_fmt(x)} rad) = "
            fn = math.sin if kind == "sin" else math.cos
            answer, expr, inputs = fn(x), f"math.{kind}({_fmt(x)})", (x,)
        else:  # multistep-2layer
            lo, hi = digits_or_range if digits_or_range else (1, 3)
            n_ops = int(rng.integers(lo, hi + 1))
            core, expr, vals, _, answer = _expression(rng, n_ops)
            prompt = f"{core} = "
            inputs = tuple(vals)
        items.append(BenchItem(prompt=prompt, inputs=inputs, answer=float(answer),
                               kind=kind, expr=expr))
    return items


# --------------------------------------------------------------------------
# record files: one JSON header line, then one JSON record per line
# --------------------------------------------------------------------------

DATASET_FORMAT = "symcalc-records"
DATASET_VERSION = 1


def write_records(path, records: list[dict], meta: dict):
    header = {"format": DATASET_FORMAT, "version": DATASET_VERSION, **meta}
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_records(path) -> tuple[dict, list[dict]]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty record file")
    header = json.loads(lines[0])
    if header.get("format") != DATASET_FORMAT:
        raise ConfigError(f"{path}: not a {DATASET_FORMAT} file")
    if header.get("version") != DATASET_VERSION:
        raise ConfigError(f"{path}: unsupported record version {header.get('version')}")
    return header, [json.loads(line) for line in lines[1:]]


def examples_from_records(records: list[dict]) -> list[GeneratedExample]:
    """Rebuild decoder training examples from a record file."""
    out = []
    for rec in records:
        try:
            out.append(GeneratedExample(
                text=rec["text"],
                inputs=tuple(rec["inputs"]),
                answer=float(rec["answer"]),
                target_token=len(tokenize(rec["text"])) - 1,
                category=rec["category"],
                operator=rec.get("operator"),
                expr=rec.get("expr", ""),
                values=rec.get("values", {}),
                seed=int(rec.get("seed", 0)),
            ))
        except KeyError as e:
            raise ConfigError(f"decoder record is missing field {e}") from e
    return out
