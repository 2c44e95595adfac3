import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonholo.errors import DomainError, ExprSyntaxError, UnknownIdentifier
from nonholo.expr import (BinOp, Call, Dual3, Neg, Num, Pow, Var, compile_kernel, eval_grad, evaluate,
                          is_constant, parse, to_text)


def fd_grad(e, p, h=1e-5):
    out = []
    for i in range(3):
        a = list(p)
        b = list(p)
        a[i] += h
        b[i] -= h
        out.append((evaluate(e, a) - evaluate(e, b)) / (2 * h))
    return np.array(out)


def test_polynomial_value():
    assert evaluate(parse("x1^2 + x2^2 - 1"), (1, 2, 0)) == 4


def test_product_gradient():
    assert eval_grad(parse("x1*x2"), (2, 3, 5))[1] == (3, 2, 0)


def test_dangling_operator_reports_end_of_input():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x1 +")
    assert info.value.pos == 4
    assert info.value.expected


def test_unknown_name():
    with pytest.raises(UnknownIdentifier) as info:
        parse("x1 + y")
    assert info.value.name == "y" and info.value.pos == 5


@pytest.mark.parametrize("text", ["", "(x1", "x1 x2", "sin()", "atan2(x1)", "x1^x2", "3 ++"])
def test_malformed(text):
    with pytest.raises(ExprSyntaxError):
        parse(text)


def test_sin_zero():
    assert evaluate(parse("sin(x1)"), (0, 5, 7)) == 0


def test_exact_cancellation():
    e = parse("x3 + x1*x2 - x2*x1")
    for p in [(0.1, 0.7, -3.3), (1e8, 3e-5, 2.5), (-2.0, 9.0, 1 / 3)]:
        assert evaluate(e, p) == p[2]


@pytest.mark.parametrize("text,p", [("ln(x1)", (-1, 0, 0)), ("sqrt(x1)", (-1, 0, 0)),
                                    ("1/x1", (0, 0, 0)), ("x1^0.5", (-4, 0, 0))])
def test_domain_errors(text, p):
    with pytest.raises(DomainError):
        evaluate(parse(text), p)
    with pytest.raises(DomainError):
        eval_grad(parse(text), p)


def test_gradient_polynomial_and_coordinate():
    assert eval_grad(parse("x1^2+x2^2-1"), (1, 0, 0)) == (0, (2, 0, 0))
    assert eval_grad(parse("x3"), (4, 5, 6)) == (6, (0, 0, 1))


def test_transcendental_gradient_matches_differences():
    e = parse("exp(x1)*sin(x2)")
    p = (0.3, 0.7, 0.0)
    _, g = eval_grad(e, p)
    assert np.allclose(g, fd_grad(e, p), atol=1e-6, rtol=0)


def test_precedence():
    assert evaluate(parse("-2^2"), (0, 0, 0)) == -4
    assert evaluate(parse("2^3^2"), (0, 0, 0)) == 512
    assert evaluate(parse("1 - 2 - 3"), (0, 0, 0)) == -4
    assert evaluate(parse("8 / 4 / 2"), (0, 0, 0)) == 1
    assert evaluate(parse(" 2 *x1+  3"), (5, 0, 0)) == 13


def test_pi_and_atan2():
    assert evaluate(parse("pi"), (0, 0, 0)) == math.pi
    v, g = eval_grad(parse("atan2(x2, x1)"), (0, 2, 0))
    assert v == pytest.approx(math.pi / 2)
    assert g == pytest.approx((-0.5, 0, 0))


def test_bindings_substitute_subexpressions():
    f = parse("x1^2 - 1")
    e = parse("f^2 + 1", {"f": f})
    assert evaluate(e, (2, 0, 0)) == 10


def test_is_constant():
    assert is_constant(parse("2*pi + sin(1)"))
    assert not is_constant(parse("0*x1"))


def test_node_arity_checked():
    with pytest.raises(ValueError):
        Call("atan2", (Num(1.0),))
    with pytest.raises(ValueError):
        Var(3)


def test_dual_rules():
    x = Dual3.variable(0.5, 0)
    y = Dual3.variable(2.0, 1)
    z = (x * y).sin()
    assert z.value == pytest.approx(math.sin(1.0))
    assert z.partials[0] == pytest.approx(math.cos(1.0) * 2.0)
    assert z.partials[1] == pytest.approx(math.cos(1.0) * 0.5)
    w = x / y
    assert w.partials == pytest.approx((0.5, -0.125, 0.0))


def test_compiled_kernel_agrees_with_interpreter():
    exprs = [parse("x1*exp(x2) - x3^3"), parse("atan2(x2, x1) + sqrt(x3)")]
    k = compile_kernel(exprs, grads=True)
    p = (0.4, -0.3, 1.7)
    out = k(p)
    ref = []
    for e in exprs:
        v, g = eval_grad(e, p)
        ref += [v, *g]
    assert np.allclose(out, ref, rtol=1e-14, atol=1e-15)
    kv = compile_kernel(exprs, grads=True, vectorized=True)
    pts = np.array([p, (1.0, 2.0, 3.0)])
    vout = np.asarray(kv(pts.T))
    assert vout.shape == (len(ref), 2)
    assert np.allclose(vout[:, 0], ref, rtol=1e-14, atol=1e-15)


# --- properties -------------------------------------------------------------

coords = st.floats(-2.0, 2.0, allow_nan=False)
point = st.tuples(coords, coords, coords)


def polynomials(depth=3):
    leaf = st.one_of(st.sampled_from([Var(0), Var(1), Var(2)]),
                     st.floats(-3, 3, allow_nan=False).map(lambda v: Num(round(v, 3))))
    return st.recursive(
        leaf,
        lambda kids: st.one_of(
            st.tuples(st.sampled_from("+-*"), kids, kids).map(lambda t: BinOp(t[0], t[1], t[2])),
            kids.map(Neg),
            st.tuples(kids, st.integers(2, 3)).map(lambda t: Pow(t[0], float(t[1])))),
        max_leaves=8)


@settings(max_examples=1000, deadline=None)
@given(polynomials(), point)
def test_gradient_matches_differences(e, p):
    _, g = eval_grad(e, p)
    fd = fd_grad(e, p)
    assert np.max(np.abs(np.array(g) - fd)) <= 1e-5 * (1 + np.linalg.norm(g))


@settings(max_examples=300, deadline=None)
@given(polynomials())
def test_print_parse_roundtrip(e):
    once = parse(to_text(e))
    assert parse(to_text(once)) == once
    p = (0.3, -1.1, 0.7)
    assert evaluate(once, p) == pytest.approx(evaluate(e, p), rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(polynomials(), point)
def test_evaluation_deterministic(e, p):
    assert evaluate(e, p) == evaluate(e, p)
