import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symcalc.errors import NoOperandsError
from symcalc.textio import (
    extract_numbers,
    format_output,
    match_places,
    matches,
    render_number,
    score_response,
    select_operands,
)


def values(text):
    return [s.value for s in extract_numbers(text)]


# ---------------------------------------------------------------- extraction

def test_extracts_numerals_in_order():
    assert values("I have 10 oranges and 6 trees with 3 apples") == [10, 6, 3]


def test_extracts_word_numbers():
    assert values("Six minus seven =?") == [6, 7]


def test_no_numbers_gives_empty_list():
    assert values("no numerals here") == []


def test_operator_minus_is_not_a_sign():
    assert values("13 - 2") == [13, 2]
    assert values("13-2") == [13, 2]


def test_parenthesized_negative_is_signed():
    assert values("3 + (-4) = ") == [3, -4]
    assert values("-1") == [-1]


def test_fraction_splits_into_two_spans():
    assert values("3/4 of them") == [3, 4]


def test_basic_exponent_form():
    assert values("the answer is 1e5") == [100000.0]
    assert values("log(2.5e-07) = ") == [2.5e-07]


def test_spans_reparse_to_their_values():
    text = "7.6 x 9 = 68.4 and sqrt(49) gives 7"
    for span in extract_numbers(text):
        assert float(span.text) == span.value


def test_sentence_period_not_part_of_number():
    spans = extract_numbers("returning 13. Then more text")
    assert [s.text for s in spans] == ["13"]
    assert spans[0].is_integer


@given(st.text(alphabet=st.characters(exclude_characters="0123456789"), max_size=20))
@settings(max_examples=50, deadline=None)
def test_inserting_nonnumeric_text_preserves_values(filler):
    base = f"40 plus {filler} 2 = "
    got = values(base)
    # word numbers may appear in the filler; the two numerals must survive in order
    assert [v for v in got if v in (40.0, 2.0)] == [40.0, 2.0]


# ---------------------------------------------------------------- operand selection

def test_select_takes_most_recent_in_order():
    spans = extract_numbers("I have 10 oranges and 6 trees with 3 apples")
    vals, padded = select_operands(spans, 2)
    assert vals == [6, 3]
    assert not padded


def test_select_mid_generation_subtraction():
    vals, _ = select_operands(extract_numbers("she now has 13 - 2"), 2)
    assert vals == [13, 2]


def test_select_pads_by_repeating_earliest():
    vals, padded = select_operands(extract_numbers("sqrt(49) = "), 2)
    assert vals == [49, 49]
    assert padded


def test_select_with_no_numbers_raises():
    with pytest.raises(NoOperandsError):
        select_operands([], 2)


# ---------------------------------------------------------------- formatting

def test_float_renders_with_three_decimals():
    assert render_number(2052.72) == "2052.720"


def test_integer_renders_without_decimal_point():
    assert render_number(13.0) == "13"


def test_negative_integer():
    assert render_number(-1.0) == "-1"


def test_format_output_appends_double_newline():
    assert format_output(13.0) == "13\n\n"
    assert format_output(531.72) == "531.720\n\n"


def test_format_output_rejects_non_finite():
    with pytest.raises(ValueError):
        format_output(math.nan)


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_format_then_extract_recovers_to_formatted_precision(value):
    spans = extract_numbers(format_output(value))
    assert len(spans) == 1
    assert abs(spans[0].value - value) <= 5e-4 + 1e-9 * abs(value)


# ---------------------------------------------------------------- matching rule

def test_integer_output_matches_at_two_places():
    assert matches("2401", 2401.0)


def test_one_decimal_clips_up_to_two_places():
    assert match_places("68.4") == 2
    assert not matches("68.4", 68.42)


def test_five_decimals_cap():
    assert match_places("3.14159") == 5
    assert matches("3.14159", math.pi)
    assert match_places("3.141592653") == 5


def test_match_is_strict_inequality():
    assert not matches("1.00", 1.01)  # difference exactly 10**-2


@given(st.floats(min_value=-1e5, max_value=1e5, allow_nan=False),
       st.floats(min_value=-1e5, max_value=1e5, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_matching_monotone_in_places(value, truth):
    # agreement at d places implies agreement at every smaller d
    text = f"{value:.5f}"
    diff = abs(float(text) - truth)
    for d in (5, 4, 3, 2):
        if diff < 10.0 ** (-d):
            assert all(diff < 10.0 ** (-smaller) for smaller in range(2, d))


def test_unparseable_text_never_matches():
    assert not matches("NaN-ish", 3.0)
    assert not matches("", 3.0)


# ---------------------------------------------------------------- response scoring

def test_response_with_any_matching_number_scores_true():
    assert score_response("63.074. 63.0 + 0.074 = 63.074.", 63.074)


def test_empty_response_scores_false():
    assert not score_response("", 63.074)


def test_only_wrong_intermediates_scores_false():
    assert not score_response("first 63.0 then 0.074 gives nothing", 63.074)
