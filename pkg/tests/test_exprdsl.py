import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compstab.errors import DomainError, ParseError
from compstab.exprdsl import (
    FUNCTIONS, BinOp, Call, Neg, Num, Pow, Var, compile_many, differentiate, evaluate, parse, to_string, variables,
)
from compstab.model import corpus


def test_parse_sum_with_power():
    assert parse("x1 + u1^3") == BinOp("+", Var("x1"), Pow(Var("u1"), 3))


def test_parse_cbrt_of_negated_product():
    assert parse("cbrt(-2*x1)") == Call("cbrt", Neg(BinOp("*", Num(2.0), Var("x1"))))


def test_incomplete_input_offset():
    with pytest.raises(ParseError) as exc:
        parse("x1 + ")
    assert exc.value.offset == 5


@pytest.mark.parametrize("text", ["", "x1 +* u1", "x0", "y1", "foo(x1)", "x1^-1", "x1^1.5", "(x1", "x1)", "2x1", "x1 x2", "1.2.3"])
def test_rejects_malformed(text):
    with pytest.raises(ParseError):
        parse(text)


def test_precedence():
    # unary minus binds looser than ^, tighter than nothing else needed
    assert evaluate(parse("-x1^2"), [3.0]) == -9.0
    assert evaluate(parse("2*x1^2 + 1"), [3.0]) == 19.0
    assert evaluate(parse("x1 - x2 - x1"), [1.0, 5.0]) == -5.0
    assert evaluate(parse("x1 / x2 / 2"), [8.0, 2.0]) == 2.0


@pytest.mark.parametrize(
    "text,x,u,expected",
    [
        ("x1 + u1^3", [1.0], [2.0], 9.0),
        ("cbrt(-2*x1)", [0.5], [], -1.0),
        ("x1*u2 - x2*u1", [1.0, 2.0], [3.0, 4.0], -2.0),
    ],
)
def test_evaluate_examples(text, x, u, expected):
    assert evaluate(parse(text), x, u) == expected


def test_domain_errors():
    with pytest.raises(DomainError):
        evaluate(parse("1/x1"), [0.0])
    with pytest.raises(DomainError):
        evaluate(parse("sqrt(x1)"), [-1.0])
    with pytest.raises(DomainError):
        compile_many([parse("1/x1")])([0.0])


def test_compiled_matches_tree_walk():
    nodes = [parse(s) for s in ("x1^2 + sin(u1)", "exp(-x2)*abs(u1)", "cbrt(x1 - u1)/2")]
    fn = compile_many(nodes)
    rng = np.random.default_rng(3)
    for _ in range(50):
        x, u = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 1)
        got = fn(x, u)
        for node, g in zip(nodes, got):
            assert g == pytest.approx(evaluate(node, x, u), rel=1e-14, abs=1e-15)


@pytest.mark.parametrize(
    "text,var,expected",
    [("x1 + u1^3", "x1", "1"), ("u1^3", "u1", "3*u1^2"), ("x1*u2 - x2*u1", "x1", "u2")],
)
def test_differentiate_examples(text, var, expected):
    assert differentiate(parse(text), var) == parse(expected)


def test_variables():
    assert variables(parse("x1*u2 - x2*u1 + 3")) == {"x1", "x2", "u1", "u2"}


def _corpus_cases():
    for sys in corpus():
        for i, comp in enumerate(sys.components):
            yield pytest.param(sys, comp, id=f"{sys.name}-f{i + 1}")


def _fd(node, var, x, u, h=1e-6):
    x, u = list(x), list(u)
    vec, i = (x, int(var[1:]) - 1) if var[0] == "x" else (u, int(var[1:]) - 1)
    c = vec[i]
    step = h * max(1.0, abs(c))
    vec[i] = c + step
    hi = evaluate(node, x, u)
    vec[i] = c - step
    lo = evaluate(node, x, u)
    return (hi - lo) / (2 * step)


@pytest.mark.parametrize("sys,comp", list(_corpus_cases()))
def test_symbolic_matches_fd(sys, comp):
    rng = np.random.default_rng(2024)
    names = [f"x{i + 1}" for i in range(sys.n)] + [f"u{j + 1}" for j in range(sys.m)]
    worst = 0.0
    for _ in range(100):
        x, u = rng.uniform(-1, 1, sys.n), rng.uniform(-1, 1, sys.m)
        for v in names:
            try:
                sym = evaluate(differentiate(comp, v), x, u)
            except DomainError:
                continue
            fd = _fd(comp, v, x, u)
            worst = max(worst, abs(sym - fd) / (1 + abs(fd)))
    assert worst <= 1e-6


@pytest.mark.parametrize("sys,comp", list(_corpus_cases()))
def test_corpus_round_trip(sys, comp):
    assert parse(to_string(comp)) == comp


# random trees with non-negative literals: the parser never produces a negative Num
_leaf = st.one_of(
    st.floats(0, 1e6, allow_nan=False).map(Num),
    st.sampled_from(["x1", "x2", "u1", "u2"]).map(Var),
)
_tree = st.recursive(
    _leaf,
    lambda kids: st.one_of(
        kids.map(Neg),
        st.tuples(st.sampled_from("+-*/"), kids, kids).map(lambda t: BinOp(*t)),
        st.tuples(kids, st.integers(0, 5)).map(lambda t: Pow(*t)),
        st.tuples(st.sampled_from(FUNCTIONS), kids).map(lambda t: Call(*t)),
    ),
    max_leaves=12,
)


@settings(max_examples=300, deadline=None)
@given(_tree)
def test_print_parse_round_trip(tree):
    assert parse(to_string(tree)) == tree


@settings(max_examples=200, deadline=None)
@given(_tree, st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_printed_form_evaluates_identically(tree, vals):
    x, u = vals[:2], vals[2:]
    try:
        a = evaluate(tree, x, u)
    except DomainError:
        return
    b = evaluate(parse(to_string(tree)), x, u)
    assert a == b or (math.isnan(a) and math.isnan(b))
