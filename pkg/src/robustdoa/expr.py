"""Scalar expressions over states ``x1..xn`` and controls ``u1..um``.

Grammar (whitespace-insensitive, binary operators left-associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' ['-'] INTEGER)*
    atom   := NUMBER | 'pi' | VAR | FUNC '(' expr ')' | '(' expr ')'

so ``-x1^2`` is ``-(x1^2)``. ``FUNC`` is one of sin, cos, exp, sqr, abs.

A parsed tree is immutable and is evaluated through an *algebra*: plain
floats or numpy arrays (:data:`REAL`), interval arrays (:data:`INTERVAL`),
or forward-mode dual numbers over either of those.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import interval as iv
from .interval import BoxVec, Interval

FUNCTIONS = ("sin", "cos", "exp", "sqr", "abs")


class ExprError(ValueError):
    """Parse or evaluation problem in a model expression."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


# --------------------------------------------------------------------------
# tree


class Expr:
    """Base node. Subclasses are frozen dataclasses."""

    n: int
    m: int

    def _ev(self, env, alg):
        raise NotImplementedError

    def children(self) -> tuple["Expr", ...]:
        return ()

    def variables(self) -> set[tuple[str, int]]:
        out = set()
        for c in self.children():
            out |= c.variables()
        return out

    # evaluation front ends -------------------------------------------------

    def evaluate(self, env: Sequence, alg) -> object:
        """Evaluate with ``env[i]`` bound to global variable i (states first)."""
        return self._ev(env, alg)

    def eval_real(self, x, u=()) -> float:
        env = [float(v) for v in np.atleast_1d(x)] + [float(v) for v in np.atleast_1d(u)]
        return float(self._ev(env, REAL))

    def eval_interval(self, w: BoxVec) -> Interval:
        env = [(np.float64(a), np.float64(b)) for a, b in zip(w.lo, w.hi)]
        lo, hi = self._ev(env, INTERVAL)
        return Interval(float(lo), float(hi))

    def eval_points(self, pts: np.ndarray):
        """Vectorized real evaluation; ``pts`` has one row per point."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        env = [pts[:, i] for i in range(pts.shape[1])]
        out = self._ev(env, REAL)
        return np.broadcast_to(out, (pts.shape[0],)).astype(float)

    def eval_boxes(self, lo: np.ndarray, hi: np.ndarray):
        """Natural interval extension over a stack of boxes (rows)."""
        env = [(lo[:, i], hi[:, i]) for i in range(lo.shape[1])]
        rlo, rhi = self._ev(env, INTERVAL)
        shape = (lo.shape[0],)
        return np.broadcast_to(rlo, shape).astype(float), np.broadcast_to(rhi, shape).astype(float)

    def __str__(self) -> str:
        return self.to_text()

    def to_text(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Expr):
    value: float
    text: str | None = None

    def _ev(self, env, alg):
        return alg.const(self)

    def to_text(self):
        return self.text if self.text is not None else repr(self.value)

    @property
    def enclosure(self) -> tuple[float, float]:
        return iv.iv_const(self.value, self.text)


@dataclass(frozen=True)
class Var(Expr):
    kind: str  # "x" or "u"
    index: int  # zero-based within its kind
    slot: int  # global position in the environment

    def _ev(self, env, alg):
        return env[self.slot]

    def variables(self):
        return {(self.kind, self.index)}

    def to_text(self):
        return f"{self.kind}{self.index + 1}"


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def _ev(self, env, alg):
        return alg.neg(self.arg._ev(env, alg))

    def children(self):
        return (self.arg,)

    def to_text(self):
        return f"(-{self.arg.to_text()})"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def _ev(self, env, alg):
        a = self.left._ev(env, alg)
        b = self.right._ev(env, alg)
        return _BINARY[self.op](alg, a, b)

    def children(self):
        return (self.left, self.right)

    def to_text(self):
        return f"({self.left.to_text()} {self.op} {self.right.to_text()})"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    k: int

    def _ev(self, env, alg):
        return alg.pow(self.base._ev(env, alg), self.k)

    def children(self):
        return (self.base,)

    def to_text(self):
        return f"{self.base.to_text()}^{self.k}" if self.k >= 0 else f"{self.base.to_text()}^({self.k})"


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    arg: Expr

    def _ev(self, env, alg):
        return getattr(alg, self.fn)(self.arg._ev(env, alg))

    def children(self):
        return (self.arg,)

    def to_text(self):
        return f"{self.fn}({self.arg.to_text()})"


_BINARY = {
    "+": lambda alg, a, b: alg.add(a, b),
    "-": lambda alg, a, b: alg.sub(a, b),
    "*": lambda alg, a, b: alg.mul(a, b),
    "/": lambda alg, a, b: alg.div(a, b),
}


# --------------------------------------------------------------------------
# algebras


class RealAlgebra:
    """Floats or numpy arrays with ordinary rounding."""

    def const(self, node):
        return node.value

    def neg(self, a):
        return -a

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def mul(self, a, b):
        return a * b

    def div(self, a, b):
        if np.any(np.asarray(b) == 0):
            raise ExprError("division by zero")
        return a / b

    def pow(self, a, k):
        if k < 0 and np.any(np.asarray(a) == 0):
            raise ExprError("zero raised to a negative power")
        if isinstance(a, np.ndarray):
            return a ** float(k) if k < 0 else a**k
        return a**k

    def sqr(self, a):
        return a * a

    def sin(self, a):
        return np.sin(a) if isinstance(a, np.ndarray) else math.sin(a)

    def cos(self, a):
        return np.cos(a) if isinstance(a, np.ndarray) else math.cos(a)

    def exp(self, a):
        return np.exp(a) if isinstance(a, np.ndarray) else math.exp(a)

    def abs(self, a):
        return np.abs(a) if isinstance(a, np.ndarray) else abs(a)

    def abs_slope(self, a):
        return np.sign(a) if isinstance(a, np.ndarray) else math.copysign(1.0, a) if a else 0.0


class IntervalAlgebra:
    """(lo, hi) pairs of arrays, outward rounded."""

    def const(self, node):
        return node.enclosure

    neg = staticmethod(iv.iv_neg)
    add = staticmethod(iv.iv_add)
    sub = staticmethod(iv.iv_sub)
    mul = staticmethod(iv.iv_mul)
    div = staticmethod(iv.iv_div)
    pow = staticmethod(iv.iv_pow)
    sqr = staticmethod(iv.iv_sqr)
    sin = staticmethod(iv.iv_sin)
    cos = staticmethod(iv.iv_cos)
    exp = staticmethod(iv.iv_exp)
    abs = staticmethod(iv.iv_abs)

    def abs_slope(self, a):
        lo, hi = a
        s_lo = np.where(lo >= 0, 1.0, -1.0)
        s_hi = np.where(hi <= 0, -1.0, 1.0)
        return s_lo, s_hi

    def scale(self, a, c: float):
        return iv.iv_mul(a, (c, c))


REAL = RealAlgebra()
INTERVAL = IntervalAlgebra()


class DualAlgebra:
    """Forward-mode derivatives on top of a base algebra.

    Values are ``(value, grads)`` where ``grads`` is a tuple with one entry per
    seeded direction. With :data:`REAL` as base this is ordinary dual-number
    differentiation; with :data:`INTERVAL` it yields enclosures of the
    gradient over a box.
    """

    def __init__(self, base, zero, one):
        self.base = base
        self.zero = zero
        self.one = one

    def seed(self, values, active: Sequence[int] | None = None):
        n = len(values)
        active = list(range(n)) if active is None else list(active)
        out = []
        for i, v in enumerate(values):
            grads = tuple(self.one if j == i else self.zero for j in active)
            out.append((v, grads))
        return out

    def const(self, node):
        return self.base.const(node), None

    def _grads(self, a):
        return a[1]

    def _lin(self, ga, ca, gb=None, cb=None):
        """ca*ga + cb*gb with None meaning an all-zero gradient."""
        b = self.base
        terms = []
        if ga is not None:
            terms.append(tuple(b.mul(ca, g) for g in ga))
        if gb is not None:
            terms.append(tuple(b.mul(cb, g) for g in gb))
        if not terms:
            return None
        if len(terms) == 1:
            return terms[0]
        return tuple(b.add(p, q) for p, q in zip(*terms))

    def neg(self, a):
        b = self.base
        return b.neg(a[0]), None if a[1] is None else tuple(b.neg(g) for g in a[1])

    def add(self, a, c):
        b = self.base
        if a[1] is None:
            g = c[1]
        elif c[1] is None:
            g = a[1]
        else:
            g = tuple(b.add(p, q) for p, q in zip(a[1], c[1]))
        return b.add(a[0], c[0]), g

    def sub(self, a, c):
        return self.add(a, self.neg(c))

    def mul(self, a, c):
        b = self.base
        return b.mul(a[0], c[0]), self._lin(a[1], c[0], c[1], a[0])

    def div(self, a, c):
        b = self.base
        q = b.div(a[0], c[0])
        if a[1] is None and c[1] is None:
            return q, None
        # (ga - q*gc) / c
        num = self._lin(a[1], self.one_like(), c[1], b.neg(q))
        return q, tuple(b.div(g, c[0]) for g in num)

    def one_like(self):
        return self.base.const(Const(1.0))

    def pow(self, a, k):
        b = self.base
        if k == 0:
            return b.pow(a[0], 0), None
        val = b.pow(a[0], k)
        coef = b.mul(b.const(Const(float(k))), b.pow(a[0], k - 1))
        return val, self._lin(a[1], coef)

    def sqr(self, a):
        b = self.base
        return b.sqr(a[0]), self._lin(a[1], b.mul(b.const(Const(2.0)), a[0]))

    def sin(self, a):
        b = self.base
        return b.sin(a[0]), self._lin(a[1], b.cos(a[0]))

    def cos(self, a):
        b = self.base
        return b.cos(a[0]), self._lin(a[1], b.neg(b.sin(a[0])))

    def exp(self, a):
        b = self.base
        e = b.exp(a[0])
        return e, self._lin(a[1], e)

    def abs(self, a):
        b = self.base
        return b.abs(a[0]), self._lin(a[1], b.abs_slope(a[0]))


REAL_DUAL = DualAlgebra(REAL, 0.0, 1.0)


def interval_dual(shape=()) -> DualAlgebra:
    zero = (np.zeros(shape), np.zeros(shape))
    one = (np.ones(shape), np.ones(shape))
    return DualAlgebra(INTERVAL, zero, one)


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(src):
        mt = _TOKEN.match(src, pos)
        col = pos - line_start + 1
        if mt is None:
            raise ExprError(f"unexpected character {src[pos]!r}", line, col)
        kind = mt.lastgroup
        text = mt.group()
        if kind == "ws":
            for i, ch in enumerate(text):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        else:
            toks.append(_Tok(kind, text, line, col))
        pos = mt.end()
    col = pos - line_start + 1
    toks.append(_Tok("end", "", line, col))
    return toks


class _Parser:
    def __init__(self, src: str, n: int, m: int):
        self.toks = _tokenize(src)
        self.i = 0
        self.n = n
        self.m = m

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, msg, tok=None):
        tok = tok or self.cur
        raise ExprError(msg, tok.line, tok.col)

    def take(self, text=None) -> _Tok:
        tok = self.cur
        if text is not None and tok.text != text:
            what = "end of input" if tok.kind == "end" else repr(tok.text)
            self.fail(f"expected {text!r}, found {what}")
        self.i += 1
        return tok

    def parse(self) -> Expr:
        if self.cur.kind == "end":
            self.fail("empty expression")
        e = self.expr()
        if self.cur.kind != "end":
            self.fail(f"unexpected {self.cur.text!r}")
        return e

    def expr(self):
        e = self.term()
        while self.cur.text in ("+", "-") and self.cur.kind == "op":
            op = self.take().text
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.cur.text in ("*", "/") and self.cur.kind == "op":
            op = self.take().text
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.cur.kind == "op" and self.cur.text == "-":
            self.take()
            return Neg(self.unary())
        if self.cur.kind == "op" and self.cur.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        e = self.atom()
        while self.cur.kind == "op" and self.cur.text == "^":
            self.take()
            sign = 1
            if self.cur.text in ("-", "+") and self.cur.kind == "op":
                sign = -1 if self.take().text == "-" else 1
            tok = self.cur
            if tok.kind != "num":
                self.fail("exponent must be an integer literal")
            self.take()
            value = float(tok.text)
            if value != int(value):
                self.fail("exponent must be an integer literal", tok)
            e = Pow(e, sign * int(value))
        return e

    def atom(self):
        tok = self.cur
        if tok.kind == "num":
            self.take()
            return Const(float(tok.text), tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        if tok.kind == "ident":
            self.take()
            name = tok.text
            if name in FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Call(name, arg)
            if name == "pi":
                return Const(math.pi, None)
            mt = re.fullmatch(r"([xu])([1-9]\d*)", name)
            if mt is None:
                self.fail(f"unknown identifier {name!r}", tok)
            kind, idx = mt.group(1), int(mt.group(2)) - 1
            limit = self.n if kind == "x" else self.m
            if idx >= limit:
                self.fail(f"{name} out of range", tok)
            slot = idx if kind == "x" else self.n + idx
            return Var(kind, idx, slot)
        if tok.kind == "end":
            self.fail("unexpected end of input")
        self.fail(f"unexpected {tok.text!r}")


def parse(src: str, n: int, m: int = 0) -> Expr:
    """Parse ``src`` as an expression in ``n`` states and ``m`` controls."""
    if not isinstance(src, str) or not src.strip():
        raise ExprError("empty expression")
    e = _Parser(src, n, m).parse()
    _stamp(e, n, m)
    return e


def _stamp(e: Expr, n: int, m: int):
    object.__setattr__(e, "n", n)
    object.__setattr__(e, "m", m)


def eval_real(e: Expr, x, u=()) -> float:
    return e.eval_real(x, u)


def eval_interval(e: Expr, w: BoxVec) -> Interval:
    return e.eval_interval(w)


def linearize(e: Expr) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``e`` at the origin, split into state and control parts."""
    n, m = e.n, e.m
    env = REAL_DUAL.seed([0.0] * (n + m))
    _, grads = e._ev(env, REAL_DUAL)
    g = np.zeros(n + m) if grads is None else np.array([float(v) for v in grads])
    return g[:n], g[n:]


def gradient_boxes(e: Expr, lo: np.ndarray, hi: np.ndarray, active: Sequence[int] | None = None):
    """Interval enclosures of the value and the gradient over stacked boxes.

    Returns ``(value_pair, [grad_pair, ...])`` with one gradient entry per
    index in ``active`` (default: every variable).
    """
    k, dim = lo.shape
    alg = interval_dual((k,))
    values = [(lo[:, i], hi[:, i]) for i in range(dim)]
    env = alg.seed(values, active)
    val, grads = e._ev(env, alg)
    count = dim if active is None else len(active)
    shape = (k,)

    def _b(pair):
        return np.broadcast_to(pair[0], shape).astype(float), np.broadcast_to(pair[1], shape).astype(float)

    if grads is None:
        grads = [alg.zero] * count
    return _b(val), [_b(g) for g in grads]


def centered_boxes(e: Expr, lo: np.ndarray, hi: np.ndarray):
    """Mean-value form ``e(c) + grad([w]) . ([w] - c)`` meet the natural form."""
    (nlo, nhi), grads = gradient_boxes(e, lo, hi)
    mid = 0.5 * lo + 0.5 * hi
    acc = e.eval_boxes(mid, mid)
    for i, g in enumerate(grads):
        offset = (iv._sum_down(lo[:, i], -mid[:, i]), iv._sum_up(hi[:, i], -mid[:, i]))
        acc = iv.iv_add(acc, iv.iv_mul(g, offset))
    with np.errstate(invalid="ignore"):
        return np.fmax(acc[0], nlo), np.fmin(acc[1], nhi)


def substitute(e: Expr, mapping: dict[int, Expr], n: int | None = None, m: int | None = None) -> Expr:
    """Replace variables by environment slot; optionally restamp dimensions."""

    def walk(node):
        if isinstance(node, Var):
            return mapping.get(node.slot, node)
        if isinstance(node, Const):
            return node
        if isinstance(node, Neg):
            return Neg(walk(node.arg))
        if isinstance(node, BinOp):
            return BinOp(node.op, walk(node.left), walk(node.right))
        if isinstance(node, Pow):
            return Pow(walk(node.base), node.k)
        if isinstance(node, Call):
            return Call(node.fn, walk(node.arg))
        raise TypeError(f"unknown node {node!r}")

    out = walk(e)
    _stamp(out, getattr(e, "n", 0) if n is None else n, getattr(e, "m", 0) if m is None else m)
    return out
