"""Closed intervals and boxes with outward rounding.

Two layers live here. The array kernels (``iv_add``, ``iv_mul``, ...) work on
pairs of numpy arrays ``(lo, hi)`` and are what the pavers use to evaluate
thousands of boxes at once. :class:`Interval` and :class:`BoxVec` are small
value types built on the same kernels for scalar use and for the public API.

Rounding: numpy exposes no control over the FPU rounding mode, so directed
rounding is emulated. Sums and differences use an error-free transformation
(TwoSum) and move outward only when the rounded result is inexact in the
wrong direction. The outward move is a scaled step ``|p| * 2**-52`` plus the
smallest subnormal, which covers at least one ulp and is much cheaper than
``nextafter``. Products are exact when a factor is zero or both factors have
at most 26 significant bits; otherwise they take the same step. Integer
powers carry a relative error bound and are widened once. Quotients use
``nextafter`` and exp/sin/cos widen by ``TRANSCENDENTAL_ULPS`` ulps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ROUNDING_MODE = "ulp-inflation"
TRANSCENDENTAL_ULPS = 4

_INF = np.inf
_TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# rounding helpers


def down(x, k: int = 1):
    for _ in range(k):
        x = np.nextafter(x, -_INF)
    return x


def up(x, k: int = 1):
    for _ in range(k):
        x = np.nextafter(x, _INF)
    return x


_HALF_ULP_SCALE = 2.0**-52
_TINY = 5e-324
_MAX = np.finfo(float).max


def _fast_down(p):
    """A float strictly below ``p`` (at most two ulps away) for finite ``p``.

    ``|p| * 2**-52`` is at least one ulp of ``p`` and the scaling is exact,
    so the rounded difference cannot land back on ``p``.
    """
    with np.errstate(invalid="ignore", over="ignore"):
        r = p - (np.abs(p) * _HALF_ULP_SCALE + _TINY)
    return np.where(p == _INF, _MAX, r)


def _fast_up(p):
    with np.errstate(invalid="ignore", over="ignore"):
        r = p + (np.abs(p) * _HALF_ULP_SCALE + _TINY)
    return np.where(p == -_INF, -_MAX, r)


def _two_sum(a, b):
    s = a + b
    with np.errstate(invalid="ignore"):
        bb = s - a
    with np.errstate(invalid="ignore"):
        err = (a - (s - bb)) + (b - bb)
    return s, err


def _sum_down(a, b):
    s, err = _two_sum(a, b)
    # err is nan on overflow; fall through to the inflated value
    return np.where(err >= 0, s, _fast_down(s))


def _sum_up(a, b):
    s, err = _two_sum(a, b)
    return np.where(err <= 0, s, _fast_up(s))


_SPLITTER = 134217729.0  # 2**27 + 1


def _short(a):
    """True where ``a`` has at most 26 significant bits (Veltkamp split)."""
    with np.errstate(invalid="ignore", over="ignore"):
        ca = _SPLITTER * a
        return (ca - (ca - a)) == a


def _exact_prod(a, b, p):
    """Products that are certainly exact: a zero factor, or two short
    mantissas whose product stays in the normal range."""
    zero = (a == 0) | (b == 0)
    with np.errstate(invalid="ignore"):
        normal = (np.abs(p) >= 2.0**-960) & (np.abs(p) < _INF)
    return zero | (normal & _short(a) & _short(b))


def _prod_down(a, b):
    with np.errstate(invalid="ignore", over="ignore", under="ignore"):
        p = a * b
    return np.where(_exact_prod(a, b, p), np.where((a == 0) | (b == 0), 0.0, p), _fast_down(p))


def _prod_up(a, b):
    with np.errstate(invalid="ignore", over="ignore", under="ignore"):
        p = a * b
    return np.where(_exact_prod(a, b, p), np.where((a == 0) | (b == 0), 0.0, p), _fast_up(p))


# --------------------------------------------------------------------------
# array kernels: every function takes and returns (lo, hi) arrays


def iv_const(value: float, text: str | None = None):
    """Tightest float interval around a decimal literal."""
    v = float(value)
    if text is None:
        return v, v
    from fractions import Fraction

    try:
        exact = Fraction(text)
    except ValueError:
        return v, v
    fv = Fraction(v)
    if exact == fv:
        return v, v
    if exact < fv:
        return float(np.nextafter(v, -_INF)), v
    return v, float(np.nextafter(v, _INF))


def iv_neg(a):
    lo, hi = a
    return -hi, -lo


def iv_add(a, b):
    return _sum_down(a[0], b[0]), _sum_up(a[1], b[1])


def iv_sub(a, b):
    return _sum_down(a[0], -b[1]), _sum_up(a[1], -b[0])


def iv_mul(a, b):
    alo, ahi = a
    blo, bhi = b
    with np.errstate(invalid="ignore", over="ignore", under="ignore"):
        p1, p2, p3, p4 = alo * blo, alo * bhi, ahi * blo, ahi * bhi
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    # 0*inf products: a zero factor makes the true product 0
    if np.isnan(lo).any() or np.isnan(hi).any():
        ps = [np.where(np.isnan(q), 0.0, q) for q in (p1, p2, p3, p4)]
        lo = np.minimum(np.minimum(ps[0], ps[1]), np.minimum(ps[2], ps[3]))
        hi = np.maximum(np.maximum(ps[0], ps[1]), np.maximum(ps[2], ps[3]))
    # Rounding is monotone, so rounding the extreme product outward bounds
    # every exact product. An extreme of exactly zero stays put when one
    # operand is a genuine zero (no underflow to worry about).
    zero_ok = (alo == 0) & (ahi == 0) | (blo == 0) & (bhi == 0)
    # an extreme is also exact when every product rounding onto it is exact;
    # that needs two short factors, so only those entries are checked
    lo, hi = np.asarray(lo), np.asarray(hi)
    lo_ok = np.array(np.broadcast_to(zero_ok, lo.shape))
    hi_ok = lo_ok.copy()
    sa0, sa1, sb0, sb1 = _short(alo), _short(ahi), _short(blo), _short(bhi)
    cand = np.broadcast_to((sa0 | sa1) & (sb0 | sb1) & ~zero_ok, lo.shape)
    if cand.any():
        def pick(v):
            return np.broadcast_to(v, lo.shape)[cand]

        factors = [(pick(alo), pick(blo), pick(sa0 & sb0)), (pick(alo), pick(bhi), pick(sa0 & sb1)),
                   (pick(ahi), pick(blo), pick(sa1 & sb0)), (pick(ahi), pick(bhi), pick(sa1 & sb1))]
        prods = [pick(q) for q in (p1, p2, p3, p4)]
        for v, ok in ((lo, lo_ok), (hi, hi_ok)):
            vv = v[cand]
            good = np.isfinite(vv)
            with np.errstate(invalid="ignore"):
                for q, (x, y, sxy) in zip(prods, factors):
                    exact = (x == 0) | (y == 0) | ((np.abs(q) >= 2.0**-960) & (np.abs(q) < _INF) & sxy)
                    good &= (q != vv) | exact
            ok[cand] = good
    return np.where(lo_ok, lo, _fast_down(lo)), np.where(hi_ok, hi, _fast_up(hi))


def iv_div(a, b):
    """Quotient; a divisor touching zero gives the whole real line."""
    alo, ahi = a
    blo, bhi = b
    singular = (blo <= 0) & (bhi >= 0)
    safe_lo = np.where(singular, 1.0, blo)
    safe_hi = np.where(singular, 1.0, bhi)
    with np.errstate(over="ignore", invalid="ignore"):
        qs = [x / y for x, y in ((alo, safe_lo), (alo, safe_hi), (ahi, safe_lo), (ahi, safe_hi))]
    exact = [(x == 0) for x in (alo, alo, ahi, ahi)]
    lows = [np.where(e, 0.0, down(q)) for q, e in zip(qs, exact)]
    highs = [np.where(e, 0.0, up(q)) for q, e in zip(qs, exact)]
    lo = np.minimum(np.minimum(lows[0], lows[1]), np.minimum(lows[2], lows[3]))
    hi = np.maximum(np.maximum(highs[0], highs[1]), np.maximum(highs[2], highs[3]))
    lo = np.where(singular, -_INF, lo)
    hi = np.where(singular, _INF, hi)
    return lo, hi


def iv_abs(a):
    lo, hi = a
    mag_lo = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
    return mag_lo, np.maximum(np.abs(lo), np.abs(hi))


_SAFE_LO, _SAFE_HI = 2.0**-960, 2.0**960


def _sig_bits(m):
    """Number of significant mantissa bits of finite nonzero ``m`` (53 otherwise)."""
    ok = np.isfinite(m) & (m != 0)
    mant, _ = np.frexp(np.where(ok, m, 1.0))
    q = (np.abs(mant) * 2.0**53).astype(np.int64)
    low = (q & -q).astype(float)
    return np.where(ok, 53 - np.log2(low).astype(np.int64), 53)


def _pow_mag_both(m, k: int):
    """Lower and upper bounds of ``m**k`` for nonnegative ``m``.

    Plain square-and-multiply with ``s`` products has relative error below
    ``1.01 * s * 2**-53`` while every partial product stays normal, which holds
    when the result lies in the safe range (partial products lie between 1
    and the result). Such entries are widened once; the rest are redone with
    a rounded step per product. Bases with at most ``53 // k`` significant
    bits give exact powers in the safe range, as do integers below ``2**53``.
    """
    s = k.bit_length() + bin(k).count("1") - 2
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        p = _pow_mag(m, k, np.multiply)
        rel = (s + 2) * 2.0**-52
        lo = p - p * rel
        hi = p + p * rel
    # integer partial products below 2**53 are exact
    safe = (p >= _SAFE_LO) & (p <= _SAFE_HI)
    exact = (m == 0) | (m == 1) | ((m == np.floor(m)) & (p < 2.0**53)) | (safe & (_sig_bits(m) * k <= 53))
    bad = ~exact & ~safe
    lo = np.where(exact, p, lo)
    hi = np.where(exact, p, hi)
    if np.any(bad):
        lo = np.where(bad, _pow_mag(m, k, _prod_down), lo)
        hi = np.where(bad, _pow_mag(m, k, _prod_up), hi)
    return lo, hi


def _pow_mag(m, k: int, rounding):
    """|x|**k for nonnegative m by square-and-multiply, each step rounded."""
    result = np.ones_like(m)
    base = m
    first = True
    while k:
        if k & 1:
            result = base if first else rounding(result, base)
            first = False
        k >>= 1
        if k:
            base = rounding(base, base)
    return result


def iv_pow(a, k: int):
    """Integer power with the even-power range tightening."""
    k = int(k)
    if k == 0:
        lo, hi = a
        return np.ones_like(lo), np.ones_like(hi)
    if k < 0:
        one = np.ones_like(a[0])
        return iv_div((one, one), iv_pow(a, -k))
    if k == 1:
        return a
    lo, hi = a
    alo = np.abs(lo)
    ahi = np.abs(hi)
    if k % 2 == 0:
        straddle = (lo < 0) & (hi > 0)
        mag_lo = np.where(straddle, 0.0, np.minimum(alo, ahi))
        mag_hi = np.maximum(alo, ahi)
        return _pow_mag_both(mag_lo, k)[0], _pow_mag_both(mag_hi, k)[1]
    # odd powers are monotone; sign(x) * |x|**k with rounding toward the bound
    lo_mag_dn, lo_mag_up = _pow_mag_both(alo, k)
    hi_mag_dn, hi_mag_up = _pow_mag_both(ahi, k)
    out_lo = np.where(lo >= 0, lo_mag_dn, -lo_mag_up)
    out_hi = np.where(hi >= 0, hi_mag_up, -hi_mag_dn)
    return out_lo, out_hi


def iv_sqr(a):
    return iv_pow(a, 2)


def iv_exp(a):
    lo, hi = a
    with np.errstate(over="ignore"):
        elo = np.exp(lo)
        ehi = np.exp(hi)
    out_lo = np.where(lo == 0, 1.0, np.maximum(down(elo, TRANSCENDENTAL_ULPS), 0.0))
    out_hi = np.where(hi == 0, 1.0, up(ehi, TRANSCENDENTAL_ULPS))
    return out_lo, out_hi


def _contains_phase(lo, hi, phase):
    """Whether [lo, hi] contains phase + 2*pi*k for some integer k.

    Errs on the side of ``True``: a slack of a few ulps of the argument covers
    the rounding in the reduction, which only ever widens the result.
    """
    slack = 1e-12 * (1.0 + np.maximum(np.abs(lo), np.abs(hi)))
    with np.errstate(invalid="ignore"):
        k_lo = np.ceil((lo - slack - phase) / _TWO_PI)
        k_hi = np.floor((hi + slack - phase) / _TWO_PI)
    return k_lo <= k_hi


def _periodic(a, fn, at_zero, max_phase, min_phase):
    lo, hi = a
    k = TRANSCENDENTAL_ULPS
    flo = fn(lo)
    fhi = fn(hi)
    lo_dn = np.where(lo == 0, at_zero, down(flo, k))
    lo_up = np.where(lo == 0, at_zero, up(flo, k))
    hi_dn = np.where(hi == 0, at_zero, down(fhi, k))
    hi_up = np.where(hi == 0, at_zero, up(fhi, k))
    out_lo = np.minimum(lo_dn, hi_dn)
    out_hi = np.maximum(lo_up, hi_up)
    with np.errstate(invalid="ignore"):
        wide = ~np.isfinite(lo) | ~np.isfinite(hi) | ((hi - lo) >= _TWO_PI)
    has_max = wide | _contains_phase(lo, hi, max_phase)
    has_min = wide | _contains_phase(lo, hi, min_phase)
    out_hi = np.where(has_max, 1.0, np.minimum(out_hi, 1.0))
    out_lo = np.where(has_min, -1.0, np.maximum(out_lo, -1.0))
    return out_lo, out_hi


def iv_sin(a):
    return _periodic(a, np.sin, 0.0, 0.5 * math.pi, 1.5 * math.pi)


def iv_cos(a):
    return _periodic(a, np.cos, 1.0, 0.0, math.pi)


def iv_hull(a, b):
    return np.minimum(a[0], b[0]), np.maximum(a[1], b[1])


# --------------------------------------------------------------------------
# scalar value types


def _f(x) -> float:
    return float(x)


@dataclass(frozen=True)
class Interval:
    """Closed real interval ``[lo, hi]``; ``Interval.empty()`` is the empty set."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval endpoints must not be nan")
        if lo > hi and not (lo == _INF and hi == -_INF):
            raise ValueError(f"invalid interval [{lo}, {hi}]")

    @classmethod
    def empty(cls) -> "Interval":
        return cls(_INF, -_INF)

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    @property
    def width(self) -> float:
        return 0.0 if self.is_empty else self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * self.lo + 0.5 * self.hi

    def __contains__(self, x) -> bool:
        if isinstance(x, Interval):
            return x.is_empty or (self.lo <= x.lo and x.hi <= self.hi)
        return self.lo <= x <= self.hi

    def _pair(self):
        return np.float64(self.lo), np.float64(self.hi)

    @staticmethod
    def _coerce(other) -> "Interval":
        if isinstance(other, Interval):
            return other
        return Interval(other, other)

    @staticmethod
    def _wrap(pair) -> "Interval":
        return Interval(_f(pair[0]), _f(pair[1]))

    def _binary(self, other, kernel, swap=False):
        other = self._coerce(other)
        if self.is_empty or other.is_empty:
            return Interval.empty()
        a, b = (other, self) if swap else (self, other)
        return self._wrap(kernel(a._pair(), b._pair()))

    def __add__(self, other):
        return self._binary(other, iv_add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, iv_sub)

    def __rsub__(self, other):
        return self._binary(other, iv_sub, swap=True)

    def __mul__(self, other):
        return self._binary(other, iv_mul)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, iv_div)

    def __rtruediv__(self, other):
        return self._binary(other, iv_div, swap=True)

    def __neg__(self):
        return self if self.is_empty else Interval(-self.hi, -self.lo)

    def __pow__(self, k: int):
        if int(k) != k:
            raise ValueError("only integer powers are supported")
        return self if self.is_empty else self._wrap(iv_pow(self._pair(), int(k)))

    def _unary(self, kernel):
        return self if self.is_empty else self._wrap(kernel(self._pair()))

    def sqr(self):
        return self._unary(iv_sqr)

    def exp(self):
        return self._unary(iv_exp)

    def sin(self):
        return self._unary(iv_sin)

    def cos(self):
        return self._unary(iv_cos)

    def __abs__(self):
        return self._unary(iv_abs)

    def __str__(self) -> str:
        return f"[{self.lo!r},{self.hi!r}]"

    @classmethod
    def parse(cls, text: str) -> "Interval":
        s = text.strip()
        if not (s.startswith("[") and s.endswith("]")):
            raise ValueError(f"malformed interval {text!r}")
        parts = s[1:-1].split(",")
        if len(parts) != 2:
            raise ValueError(f"malformed interval {text!r}")
        return cls(float(parts[0]), float(parts[1]))


def hull(a: Interval, b: Interval) -> Interval:
    """Smallest interval containing both operands."""
    if a.is_empty:
        return b
    if b.is_empty:
        return a
    return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


class BoxVec:
    """Axis-aligned box: an ordered tuple of intervals."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        if hi is None:
            ivs = [iv if isinstance(iv, Interval) else Interval(*iv) for iv in lo]
            lo = [iv.lo for iv in ivs]
            hi = [iv.hi for iv in ivs]
        lo = np.array(lo, dtype=float).reshape(-1)
        hi = np.array(hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same length")
        if np.any(lo > hi) or np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must satisfy lo <= hi")
        lo.flags.writeable = False
        hi.flags.writeable = False
        self.lo = lo
        self.hi = hi

    @classmethod
    def from_intervals(cls, intervals: Iterable[Interval]) -> "BoxVec":
        return cls(list(intervals))

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def intervals(self) -> tuple[Interval, ...]:
        return tuple(Interval(a, b) for a, b in zip(self.lo, self.hi))

    def __len__(self) -> int:
        return self.dim

    def __getitem__(self, i) -> Interval:
        return Interval(self.lo[i], self.hi[i])

    def __iter__(self):
        return iter(self.intervals)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BoxVec)
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self) -> str:
        return f"BoxVec({self})"

    def __str__(self) -> str:
        return ",".join(str(iv) for iv in self.intervals)

    @classmethod
    def parse(cls, text: str) -> "BoxVec":
        s = text.strip()
        parts = []
        depth = 0
        start = 0
        for i, ch in enumerate(s):
            if ch == "[":
                depth += 1
                if depth == 1:
                    start = i
            elif ch == "]":
                depth -= 1
                if depth == 0:
                    parts.append(s[start : i + 1])
        if depth != 0 or not parts:
            raise ValueError(f"malformed box {text!r}")
        return cls([Interval.parse(p) for p in parts])

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def width(self) -> float:
        return float(np.max(self.widths)) if self.dim else 0.0

    def volume(self) -> float:
        return float(np.prod(self.widths))

    def midpoint(self) -> np.ndarray:
        return 0.5 * self.lo + 0.5 * self.hi

    def _check(self, other: "BoxVec"):
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def contains(self, inner: "BoxVec") -> bool:
        self._check(inner)
        return bool(np.all(self.lo <= inner.lo) and np.all(inner.hi <= self.hi))

    def contains_point(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.lo <= x) and np.all(x <= self.hi))

    def intersects(self, other: "BoxVec") -> bool:
        self._check(other)
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))

    def bisect(self) -> tuple["BoxVec", "BoxVec"]:
        w = self.widths
        if self.dim == 0 or not np.any(w > 0):
            raise ValueError("cannot bisect point box")
        axis = int(np.argmax(w))
        mid = 0.5 * self.lo[axis] + 0.5 * self.hi[axis]
        left_hi = self.hi.copy()
        left_hi[axis] = mid
        right_lo = self.lo.copy()
        right_lo[axis] = mid
        return BoxVec(self.lo.copy(), left_hi), BoxVec(right_lo, self.hi.copy())

    def project(self, dims: Sequence[int] | slice) -> "BoxVec":
        return BoxVec(self.lo[dims], self.hi[dims])


def contains(outer: BoxVec, inner: BoxVec) -> bool:
    return outer.contains(inner)


def intersects(a: BoxVec, b: BoxVec) -> bool:
    return a.intersects(b)


def volume(b: BoxVec) -> float:
    return b.volume()


def bisect(b: BoxVec) -> tuple[BoxVec, BoxVec]:
    return b.bisect()


def bisect_arrays(lo: np.ndarray, hi: np.ndarray):
    """Bisect a stack of boxes (rows) along each one's widest axis.

    Ties go to the lowest coordinate index (``argmax`` returns the first
    maximum). Returns the stacked children, lower halves first.
    """
    widths = hi - lo
    axis = np.argmax(widths, axis=1)
    rows = np.arange(lo.shape[0])
    mid = 0.5 * lo[rows, axis] + 0.5 * hi[rows, axis]
    left_hi = hi.copy()
    left_hi[rows, axis] = mid
    right_lo = lo.copy()
    right_lo[rows, axis] = mid
    return np.concatenate([lo, right_lo]), np.concatenate([left_hi, hi])
