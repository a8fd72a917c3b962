import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustdoa.expr import (
    ExprError,
    centered_boxes,
    eval_interval,
    eval_real,
    gradient_boxes,
    linearize,
    parse,
    substitute,
)
from robustdoa.interval import BoxVec

FHAT = "-sin(2*x1) - x1*u1 - 0.2*x1 - u1^2 + u1"
DELTA = "1 - exp(-0.5*(x1^2 + u1^2))"

EXPRS = [
    FHAT,
    DELTA,
    "x1^3 - 2*x1*x2 + cos(x2)",
    "abs(x1 - 0.3) * exp(x2/4)",
    "sqr(x1 + x2) - x1^4 + 1/(3 + x2^2)",
    "sin(3*x1)*cos(x2) - (x1 - x2)^2",
]


def test_parse_model_expressions():
    f = parse(FHAT, 1, 1)
    d = parse(DELTA, 1, 1)
    assert f.variables() == {("x", 0), ("u", 0)}
    assert d.variables() == {("x", 0), ("u", 0)}


def test_eval_real_examples():
    f = parse(FHAT, 1, 1)
    d = parse(DELTA, 1, 1)
    assert eval_real(f, [0], [0]) == 0.0
    assert eval_real(d, [0], [0]) == 0.0
    assert eval_real(f, [1], [0]) == pytest.approx(-math.sin(2) - 0.2, abs=1e-12)
    assert eval_real(f, [1], [0]) == pytest.approx(-1.10930, abs=5e-6)


def test_precedence():
    assert eval_real(parse("-x1^2", 1), [3]) == -9.0
    assert eval_real(parse("2^3^2", 0), []) == 64.0  # left-associative
    assert eval_real(parse("-2^2", 0), []) == -4.0
    assert eval_real(parse("8 - 3 - 2", 0), []) == 3.0
    assert eval_real(parse("8 / 4 / 2", 0), []) == 1.0
    assert eval_real(parse(" 1 +2* 3 ", 0), []) == 7.0
    assert eval_real(parse("(1 + 2) * 3", 0), []) == 9.0


def test_parse_errors():
    with pytest.raises(ExprError, match="u2 out of range"):
        parse("x1 + u2", 1, 1)
    with pytest.raises(ExprError, match="x3 out of range"):
        parse("x3", 2, 0)
    with pytest.raises(ExprError, match="unknown identifier"):
        parse("x1 + tan(x1)", 1)
    with pytest.raises(ExprError, match="empty expression"):
        parse("   ", 1)


def test_syntax_error_position():
    with pytest.raises(ExprError) as info:
        parse("x1 +\n  * 2", 1)
    assert info.value.line == 2 and info.value.column == 3
    assert str(info.value).startswith("line 2, column 3:")
    with pytest.raises(ExprError) as info:
        parse("(x1 + 1", 1)
    assert info.value.line == 1


def test_domain_error_in_real_evaluation():
    with pytest.raises((ExprError, ZeroDivisionError, ValueError)):
        eval_real(parse("x1^-1", 1), [0.0])


def test_interval_examples():
    assert eval_interval(parse("sqr(x1)", 1), BoxVec([-1], [2])).lo == 0.0
    assert eval_interval(parse("sqr(x1)", 1), BoxVec([-1], [2])).hi == 4.0
    s = eval_interval(parse("sin(x1)", 1), BoxVec([0], [math.pi]))
    assert s.lo <= 0 < 1 <= s.hi
    assert s.lo > -1e-12 and s.hi < 1 + 1e-12


def test_model_over_box_contains_dense_grid():
    f = parse(FHAT, 1, 1)
    r = eval_interval(f, BoxVec([0.4, 0.4], [0.6, 0.6]))
    g = np.linspace(0.4, 0.6, 50)
    X, U = np.meshgrid(g, g)
    vals = f.eval_points(np.column_stack([X.ravel(), U.ravel()]))
    assert vals.min() >= r.lo and vals.max() <= r.hi


def test_linearize_examples():
    gx, gu = linearize(parse(FHAT, 1, 1))
    assert gx == pytest.approx([-2.2]) and gu == pytest.approx([1.0])
    gx, gu = linearize(parse("x1", 1, 1))
    assert list(gx) == [1.0] and list(gu) == [0.0]
    gx, gu = linearize(parse("x1*u1", 1, 1))
    assert list(gx) == [0.0] and list(gu) == [0.0]


@pytest.mark.parametrize("src", EXPRS)
def test_linearize_matches_central_differences(src):
    n = 1 if src in (FHAT, DELTA) else 2
    m = 1 if n == 1 else 0
    e = parse(src, n, m)
    gx, gu = linearize(e)
    grad = np.concatenate([gx, gu])
    h = 1e-6
    for i in range(n + m):
        z = np.zeros(n + m)
        z[i] = h
        fd = (e.eval_points(z)[0] - e.eval_points(-z)[0]) / (2 * h)
        assert abs(fd - grad[i]) <= 1e-5 * max(1.0, abs(grad[i]))


@st.composite
def box_and_point(draw, dim):
    c = np.array(draw(st.lists(st.floats(-2, 2), min_size=dim, max_size=dim)))
    w = np.array(draw(st.lists(st.floats(0, 1.5), min_size=dim, max_size=dim)))
    t = np.array(draw(st.lists(st.floats(0, 1), min_size=dim, max_size=dim)))
    lo, hi = c - w / 2, c + w / 2
    return lo, hi, np.clip(lo + t * (hi - lo), lo, hi)


@settings(max_examples=1000, deadline=None)
@given(st.sampled_from(EXPRS[2:]), box_and_point(2))
def test_inclusion_property(src, bp):
    lo, hi, x = bp
    e = parse(src, 2)
    r = eval_interval(e, BoxVec(lo, hi))
    assert r.lo <= e.eval_real(x) <= r.hi


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(EXPRS[:2]), box_and_point(2))
def test_vectorized_matches_scalar_and_centered_contains(src, bp):
    lo, hi, x = bp
    e = parse(src, 1, 1)
    r = eval_interval(e, BoxVec(lo, hi))
    blo, bhi = e.eval_boxes(lo[None], hi[None])
    assert (blo[0], bhi[0]) == (r.lo, r.hi)
    clo, chi = centered_boxes(e, lo[None], hi[None])
    v = e.eval_real(x[:1], x[1:])
    assert clo[0] <= v <= chi[0]
    assert clo[0] >= r.lo and chi[0] <= r.hi


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(EXPRS), st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2))
def test_convergence_on_shrinking_boxes(src, pt):
    e = parse(src, 2) if src not in (FHAT, DELTA) else parse(src, 1, 1)
    x = np.array(pt)
    widths = [eval_interval(e, BoxVec(x - r, x + r)).width for r in 2.0 ** -np.arange(1, 30)]
    tail = widths[8:]
    assert all(b <= a for a, b in zip(tail, tail[1:]))
    assert widths[-1] < 1e-6


def test_degenerate_box_matches_real():
    e = parse(FHAT, 1, 1)
    r = eval_interval(e, BoxVec([0.3, -0.7], [0.3, -0.7]))
    v = eval_real(e, [0.3], [-0.7])
    assert r.lo <= v <= r.hi and r.width < 1e-14


def test_gradient_boxes_contain_pointwise_gradient(rng):
    e = parse(FHAT, 1, 1)
    lo = rng.uniform(-2, 1.8, size=(200, 2))
    hi = lo + rng.uniform(0, 0.2, size=(200, 2))
    _, grads = gradient_boxes(e, lo, hi)
    x = lo + rng.uniform(size=lo.shape) * (hi - lo)
    dx = -2 * np.cos(2 * x[:, 0]) - x[:, 1] - 0.2
    du = -x[:, 0] - 2 * x[:, 1] + 1
    assert np.all((grads[0][0] <= dx) & (dx <= grads[0][1]))
    assert np.all((grads[1][0] <= du) & (du <= grads[1][1]))


def test_substitute_closed_loop():
    f = parse(FHAT, 1, 1)
    k = parse("0.5*x1", 1)
    g = substitute(f, {1: k}, n=1, m=0)
    assert g.variables() == {("x", 0)}
    assert eval_real(g, [0.8]) == pytest.approx(eval_real(f, [0.8], [0.4]))


def test_variables_map_to_environment_slots():
    e = parse("x2 - u1", 2, 1)
    assert e.variables() == {("x", 1), ("u", 0)}
    assert eval_real(e, [0.0, 5.0], [2.0]) == 3.0
