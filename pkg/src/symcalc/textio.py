"""Text-side mechanics: number extraction, operand selection, output formatting,
and the answer-matching rule used by the benchmark scorer.

Parsing is deliberately narrow.  Decimal literals (optional adjacent sign,
optional fractional part, basic exponent like 1e5) and a small vocabulary of
word numbers are recognized; fractions such as "3/4" and percentages are left
as separate tokens on purpose, because the routing switch is trained to treat
compound expressions as not directly computable.
"""

import math
import re
from dataclasses import dataclass

from .errors import NoOperandsError

__all__ = [
    "NumberSpan",
    "extract_numbers",
    "select_operands",
    "render_number",
    "format_output",
    "decimal_places",
    "match_places",
    "matches",
    "score_response",
    "ANSWER_SUFFIX",
]

ANSWER_SUFFIX = "\n\n"

WORD_NUMBERS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
    "eleven": 11, "twelve": 12, "thirteen": 13, "fourteen": 14, "fifteen": 15,
    "sixteen": 16, "seventeen": 17, "eighteen": 18, "nineteen": 19, "twenty": 20,
    "thirty": 30, "forty": 40, "fifty": 50, "sixty": 60, "seventy": 70,
    "eighty": 80, "ninety": 90,
}

# a sign is part of the literal only when nothing word-like precedes it, so
# "13-2" parses as 13 and 2 while "(-4)" parses as -4
_NUMERIC_RE = re.compile(
    r"(?<![\w.])[+-]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][+-]?\d+)?"
)
_WORD_RE = re.compile(
    r"\b(" + "|".join(sorted(WORD_NUMBERS, key=len, reverse=True)) + r")\b",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class NumberSpan:
    value: float
    text: str
    start: int
    end: int
    is_integer: bool
    position: int


def extract_numbers(text: str) -> list[NumberSpan]:
    """All numbers in order of occurrence, numerals and small word numbers."""
    found = []
    for m in _NUMERIC_RE.finditer(text):
        span = m.group(0)
        found.append((m.start(), m.end(), span, float(span),
                      re.fullmatch(r"[+-]?\d+", span) is not None))
    taken = [(s, e) for s, e, *_ in found]
    for m in _WORD_RE.finditer(text):
        if any(s <= m.start() < e for s, e in taken):
            continue
        found.append((m.start(), m.end(), m.group(0),
                      float(WORD_NUMBERS[m.group(0).lower()]), True))
    found.sort(key=lambda t: t[0])
    return [
        NumberSpan(value=v, text=t, start=s, end=e, is_integer=isint, position=i)
        for i, (s, e, t, v, isint) in enumerate(found)
    ]


def select_operands(spans: list[NumberSpan], n_inputs: int) -> tuple[list[float], bool]:
    """Most recent ``n_inputs`` values, oldest first.

    With fewer numbers than inputs, the earliest available value is repeated
    at the front and the event is flagged so callers can log it.
    """
    if not spans:
        raise NoOperandsError("no numbers available to feed the calculator")
    values = [s.value for s in spans[-n_inputs:]]
    padded = len(values) < n_inputs
    while len(values) < n_inputs:
        values.insert(0, values[0])
    return values, padded


def render_number(value: float) -> str:
    """Integer-valued results print without a decimal point, everything else
    with three fixed decimals."""
    if not math.isfinite(value):
        raise ValueError(f"cannot render non-finite value {value!r}")
    if abs(value - round(value)) < 1e-9:
        return str(int(round(value)))
    return f"{value:.3f}"


def format_output(value: float, suffix: str = ANSWER_SUFFIX) -> str:
    """Rendered number plus the emission suffix (two newlines by default,
    which stops the text model from appending further digits)."""
    return render_number(value) + suffix


def decimal_places(number_text: str) -> int | None:
    """Places after the decimal point in a literal's decimal expansion.

    None for plain integers.  For exponent forms the exponent shifts the
    count: 4.1e-9 has 10 places, 1.5e3 has 0.
    """
    number_text = number_text.strip()
    if re.fullmatch(r"[+-]?\d+", number_text):
        return None
    m = re.fullmatch(r"[+-]?(?:\d+(?:\.(\d+))?|\.(\d+))(?:[eE]([+-]?\d+))?", number_text)
    if m is None:
        return None
    frac = m.group(1) or m.group(2) or ""
    exponent = int(m.group(3) or 0)
    return max(0, len(frac) - exponent)


def match_places(number_text: str) -> int:
    """Required decimal agreement for a model-output literal: 2 for integers,
    otherwise its decimal places clipped into [2, 5]."""
    places = decimal_places(number_text)
    if places is None:
        return 2
    return min(5, max(2, places))


def matches(model_output_number: str, truth: float) -> bool:
    """True when the literal agrees with the truth to its required places."""
    spans = extract_numbers(model_output_number)
    if len(spans) != 1 or spans[0].text.strip() != model_output_number.strip():
        return False
    d = match_places(spans[0].text)
    return abs(spans[0].value - truth) < 10.0 ** (-d)


def score_response(full_response: str, truth: float) -> bool:
    """A response is correct when any number in it matches the truth."""
    return any(matches(span.text, truth) for span in extract_numbers(full_response))
