import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from sdde.expr import (
    ExprDomainError, ExprSyntaxError, UnknownIdentifierError, evaluate, parse, pretty,
)

TEST_DRIFT = "(1/8)*abs(y)^(5/4) - 5*x^3 + 2*(t*(1-t))^(3/4)*x"


@pytest.mark.parametrize("src,env,expected", [
    ("2*t + abs(x)^1.5", dict(t=1.0, x=-4.0), 10.0),
    ("3.5", dict(t=7.0, x=-2.0, y=9.0), 3.5),
    ("(t*(1-t))^(3/4)", dict(t=0.5), 0.25**0.75),
    ("abs(x)^(3/2)", dict(x=-4.0), 8.0),
    (TEST_DRIFT, dict(t=0.5, x=1.0, y=1.0), 0.125 - 5.0 + 2.0 * 2.0**-1.5),
])
def test_examples(src, env, expected):
    assert float(parse(src)(**env)) == pytest.approx(expected, abs=1e-12)


def test_superlinear_drift_value():
    assert float(parse(TEST_DRIFT)(0.5, 1.0, 1.0)) == pytest.approx(-4.167893, abs=1e-6)


@pytest.mark.parametrize("src,expected", [
    ("-2^2", -4.0),
    ("2^3^2", 512.0),
    ("2*3+4", 10.0),
    ("2+3*4", 14.0),
    ("8/4/2", 1.0),
    ("8-4-2", 2.0),
    ("2^-1", 0.5),
    ("-(2)^2", -4.0),
    ("(-2)^2", 4.0),
    ("2*-3", -6.0),
    ("min(3, 1, 2) + max(1, 5)", 6.0),
    ("pow(2, 10)", 1024.0),
    ("ln(exp(1.5))", 1.5),
    ("sqrt(16) + cos(0) - sin(0)", 5.0),
    ("  1e-2 *\t100 ", 1.0),
])
def test_precedence(src, expected):
    assert float(parse(src)()) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("src,offset", [
    ("x +", 3),
    ("(x", 2),
    ("x )", 2),
    ("2 ** 3", 3),
    ("", 0),
    ("abs()", 4),
])
def test_syntax_errors(src, offset):
    with pytest.raises(ExprSyntaxError) as e:
        parse(src)
    assert e.value.offset == offset


def test_offsets_are_bytes():
    # the two-byte character shifts the byte offset of the error by one
    with pytest.raises(ExprSyntaxError) as e:
        parse("x + é")
    assert e.value.offset == 4


@pytest.mark.parametrize("src", ["z + 1", "foo(x)", "abs(x, y)", "pow(x)", "max(x)"])
def test_unknown_or_arity(src):
    with pytest.raises(ExprSyntaxError):
        parse(src)


def test_unknown_identifier_class():
    with pytest.raises(UnknownIdentifierError):
        parse("2*q")


@pytest.mark.parametrize("src,env,span_text", [
    ("1 + ln(x)", dict(x=0.0), "ln(x)"),
    ("sqrt(x - 3)", dict(x=1.0), "sqrt(x - 3)"),
    ("x^(-1)", dict(x=0.0), "x^(-1)"),
    ("1/x", dict(x=0.0), "1/x"),
    ("x^0.5", dict(x=-1.0), "x^0.5"),
    ("exp(x)", dict(x=1000.0), "exp(x)"),
])
def test_domain_errors_carry_span(src, env, span_text):
    e = parse(src)
    with pytest.raises(ExprDomainError) as err:
        e(**env)
    a, b = err.value.span
    assert src[a:b] == span_text


def test_negative_base_integer_exponent_is_fine():
    assert float(parse("x^3")(x=-2.0)) == -8.0


def test_vectorised_matches_scalar():
    e = parse(TEST_DRIFT)
    xs = np.linspace(-3, 3, 13)
    vec = e(0.3, xs, xs[::-1])
    assert list(vec) == [float(e(0.3, a, b)) for a, b in zip(xs, xs[::-1])]


def test_variables():
    assert parse("t + sin(x)").variables == {"t", "x"}


# random well-formed sources
_leaf = st.one_of(
    st.sampled_from(["t", "x", "y"]),
    st.integers(0, 20).map(str),
    st.floats(0.01, 100, allow_nan=False).map(lambda v: repr(round(v, 3))),
)


def _combine(children):
    binop = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
        lambda p: f"({p[0]}) {p[1]} ({p[2]})" if p[1] == "^" else f"{p[0]} {p[1]} {p[2]}")
    neg = children.map(lambda c: f"-{c}")
    paren = children.map(lambda c: f"({c})")
    call = st.tuples(st.sampled_from(["abs", "sin", "cos", "exp", "sqrt"]), children).map(
        lambda p: f"{p[0]}({p[1]})")
    call2 = st.tuples(st.sampled_from(["min", "max", "pow"]), children, children).map(
        lambda p: f"{p[0]}({p[1]}, {p[2]})")
    return st.one_of(binop, neg, paren, call, call2)


sources = st.recursive(_leaf, _combine, max_leaves=12)


@given(sources)
def test_pretty_round_trip_fixed_point(src):
    once = pretty(parse(src).root)
    assert pretty(parse(once).root) == once
    assert parse(once).root == parse(src).root


@given(sources, st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_round_trip_preserves_value(src, t, x, y):
    e = parse(src)
    again = parse(str(e))
    try:
        with np.errstate(all="ignore"):
            a = float(evaluate(e, t, x, y))
    except ExprDomainError:
        with pytest.raises(ExprDomainError):
            evaluate(again, t, x, y)
        return
    assert float(evaluate(again, t, x, y)) == a


@given(sources, st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_evaluation_is_pure(src, t, x, y):
    e = parse(src)
    try:
        a = float(e(t, x, y))
    except ExprDomainError:
        return
    assert float(e(t, x, y)) == a
    assert math.isfinite(a)


@given(st.text(alphabet="txy0123456789.+-*/^() ,absqrtminxpw", max_size=25))
def test_fuzz_never_crashes(src):
    try:
        e = parse(src)
    except ExprSyntaxError as err:
        assert 0 <= err.offset <= len(src.encode())
        return
    try:
        e(0.3, -1.2, 2.5)
    except ExprDomainError:
        pass


@given(st.integers(-5, 5), st.integers(-5, 5), st.integers(-5, 5))
def test_left_assoc_and_right_assoc(a, b, c):
    assume(b != 0 and c != 0)
    assert float(parse(f"{a} - {b} - {c}")()) == (a - b) - c
    assert float(parse(f"{a} / {b} / {c}")()) == pytest.approx((a / b) / c)
