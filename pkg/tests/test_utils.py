import math

import numpy as np
import pytest

from errors import ConfigurationError
from utils import format_table, format_value, parse_expression, parse_vector, tokenize

PTS = np.array([[0.0, 1.0], [0.5, 0.25], [1.0, 0.0]])


def test_tokenize():
    kinds = [k for k, _, _ in tokenize("2.5e-1*x**2 <= 1 and not y")]
    assert kinds == ["num", "op", "name", "op", "num", "op", "num", "op", "op", "name"]
    with pytest.raises(ConfigurationError, match=r"unexpected character '\$' at column 2"):
        tokenize("x $ 1")


@pytest.mark.parametrize("text, expected", [
    ("-3*(x - 0.5)**2", [-0.75, 0.0, -0.75]),
    ("2^3 - x", [8.0, 7.5, 7.0]),
    ("-2**2", [-4.0, -4.0, -4.0]),
    ("2**3**2", [512.0, 512.0, 512.0]),
    ("sin(pi*x) + cos(0)", [1.0, 2.0, 1.0]),
    ("max(x, y)", [1.0, 0.5, 1.0]),
    ("where(x > 0.5, 1, -1)", [-1.0, -1.0, 1.0]),
    ("X + Y", [1.0, 0.75, 1.0]),
])
def test_arithmetic(text, expected):
    np.testing.assert_allclose(parse_expression(text)(PTS), expected, atol=1e-15)


def test_comparisons_use_a_tolerance():
    assert list(parse_expression("y == 1")(PTS + 1e-12)) == [True, False, False]
    assert list(parse_expression("x >= 0.5 and y < 0.5")(PTS)) == [False, True, True]
    assert list(parse_expression("not (x == 0) or y == 1")(PTS)) == [True, True, True]
    assert list(parse_expression("x != 0.5")(PTS)) == [True, False, True]


def test_loading_fraction():
    expr = parse_expression("t*x")
    assert expr.uses_t
    np.testing.assert_allclose(expr(PTS, 0.5), [0.0, 0.25, 0.5])
    assert not parse_expression("x*pi").uses_t


def test_constants_broadcast():
    np.testing.assert_allclose(parse_expression(2)(PTS), [2.0, 2.0, 2.0])
    assert parse_expression("e")(PTS)[0] == pytest.approx(math.e)


@pytest.mark.parametrize("text, message", [
    ("", "empty"),
    ("x +", "end of expression"),
    ("(x + 1", "expected"),
    ("foo(x)", "unknown function"),
    ("q + 1", "unknown name"),
    ("atan2(x)", "takes 2"),
    ("x 1", "unexpected token"),
])
def test_parse_errors(text, message):
    with pytest.raises(ConfigurationError, match=message):
        parse_expression(text)


def test_missing_coordinate():
    with pytest.raises(ConfigurationError, match="coordinate z"):
        parse_expression("z")(PTS)


def test_vectors():
    vec = parse_vector(["x", "-0.1*t"])
    assert vec.uses_t
    assert vec.texts == ["x", "-0.1*t"]
    np.testing.assert_allclose(vec(PTS, 1.0), [[0.0, -0.1], [0.5, -0.1], [1.0, -0.1]])
    with pytest.raises(ConfigurationError, match="components"):
        vec(np.zeros((2, 3)))
    assert len(parse_vector("x").components) == 1


def test_format_value_and_table():
    assert format_value(None) == "-"
    assert format_value(float("nan")) == "undefined"
    assert format_value(2.457e-3) == "2.457e-03"
    assert format_value(1.5) == "1.5"
    table = format_table(["cards", "error"], [[64, 2.457e-3], [512, None]])
    lines = table.splitlines()
    assert lines[0] == "cards      error"
    assert lines[2].split() == ["64", "2.457e-03"]
    assert lines[3].split() == ["512", "-"]
