"""Lyapunov family search and controller extraction.

Candidates are ``L(x) = S_d(x)' P' P S_d(x)`` where ``S_d`` stacks every
monomial of total degree 1..d in graded-lexicographic order. The search
maximizes the measure of the projected robust set over the entries of
``P`` with a global-best particle swarm.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import qr

from .expr import BinOp, Const, Expr, Pow, Var, centered_boxes, gradient_boxes, linearize, substitute
from .interval import BoxVec
from .paving import INSIDE, Paving, build_tree, covered_intervals, covers_arrays, measure, project
from .rnis import LyapunovFn, PlantSet, rnisevia

RANK_TOL = 1e-10

SWARM_SIZE = 20
INERTIA = 0.729
ACCEL = 1.49445
INIT_RANGE = (-3.0, 3.0)

DEFAULT_POLE = -0.3351


# --------------------------------------------------------------------------
# monomials and the SOS family


def exponents(n: int, d: int) -> list[tuple[int, ...]]:
    """Exponent vectors of all monomials of degree 1..d, graded-lex order."""
    if d < 1:
        raise ValueError("d must be at least 1")
    out = []
    for deg in range(1, d + 1):
        for combo in itertools.combinations_with_replacement(range(n), deg):
            e = [0] * n
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


def basis_dim(n: int, d: int) -> int:
    return math.comb(n + d, d) - 1


def monomial_basis(n: int, d: int, x) -> np.ndarray:
    """``S_d(x)``; ``x`` may be one point or a stack of points (rows)."""
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, n)
    cols = [np.prod(pts ** np.array(e), axis=1) for e in exponents(n, d)]
    out = np.stack(cols, axis=1)
    return out[0] if x.ndim <= 1 and pts.shape[0] == 1 and x.size == n else out


class RankError(ValueError):
    pass


@dataclass
class LyapunovSpec:
    P: np.ndarray
    d: int
    n: int
    objective: float | None = None

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        r = basis_dim(self.n, self.d)
        if self.P.shape != (r, r):
            raise ValueError(f"P must be {r}x{r} for n={self.n}, d={self.d}, got {self.P.shape}")

    @property
    def r(self) -> int:
        return self.P.shape[0]

    def full_rank(self, tol: float = RANK_TOL) -> bool:
        _, R, _ = qr(self.P, pivoting=True)
        diag = np.abs(np.diag(R))
        return bool(diag[0] > 0 and diag[-1] > tol * diag[0])


def coefficients(spec: LyapunovSpec) -> dict[tuple[int, ...], float]:
    """Expanded polynomial ``S' P'P S`` as exponent -> coefficient."""
    Q = spec.P.T @ spec.P
    exps = exponents(spec.n, spec.d)
    out: dict[tuple[int, ...], float] = {}
    for i, ei in enumerate(exps):
        for j, ej in enumerate(exps):
            key = tuple(a + b for a, b in zip(ei, ej))
            out[key] = out.get(key, 0.0) + Q[i, j]
    return dict(sorted(out.items(), key=lambda kv: (sum(kv[0]), tuple(-v for v in kv[0]))))


def polynomial_text(coeffs: dict[tuple[int, ...], float]) -> str:
    terms = []
    for e, c in coeffs.items():
        if c == 0:
            continue
        factors = [repr(float(c))]
        for i, k in enumerate(e):
            if k == 1:
                factors.append(f"x{i + 1}")
            elif k > 1:
                factors.append(f"x{i + 1}^{k}")
        terms.append("*".join(factors))
    return " + ".join(terms) if terms else "0"


def _monomial_expr(e: tuple[int, ...], n: int) -> Expr:
    node: Expr | None = None
    for i, k in enumerate(e):
        if not k:
            continue
        v: Expr = Var("x", i, i)
        f = v if k == 1 else Pow(v, k)
        node = f if node is None else BinOp("*", node, f)
    return node if node is not None else Const(1.0)


def polynomial_expr(coeffs: dict[tuple[int, ...], float], n: int) -> Expr:
    node: Expr | None = None
    for e, c in coeffs.items():
        if c == 0:
            continue
        term = BinOp("*", Const(float(c)), _monomial_expr(e, n))
        node = term if node is None else BinOp("+", node, term)
    node = node if node is not None else Const(0.0)
    return substitute(node, {}, n, 0)


def lyapunov_from_P(spec: LyapunovSpec) -> LyapunovFn:
    if not spec.full_rank():
        raise RankError("P not full rank")
    coeffs = coefficients(spec)
    return LyapunovFn(polynomial_expr(coeffs, spec.n), spec.n, source=polynomial_text(coeffs), spec=spec)


def spec_from_coefficients(coeffs: dict[tuple[int, ...], float], n: int, d: int) -> LyapunovSpec:
    """A ``P`` whose expansion reproduces ``coeffs`` (minimum-norm Gram matrix)."""
    exps = exponents(n, d)
    r = len(exps)
    pairs = [(i, j) for i in range(r) for j in range(i, r)]
    keys = sorted({tuple(a + b for a, b in zip(exps[i], exps[j])) for i, j in pairs})
    row = {k: t for t, k in enumerate(keys)}
    A = np.zeros((len(keys), len(pairs)))
    for col, (i, j) in enumerate(pairs):
        k = tuple(a + b for a, b in zip(exps[i], exps[j]))
        A[row[k], col] = 1.0 if i == j else 2.0
    extra = set(coeffs) - set(keys)
    if extra:
        raise ValueError(f"monomials {sorted(extra)} are outside the degree-{2 * d} family")
    b = np.array([coeffs.get(k, 0.0) for k in keys])
    q, *_ = np.linalg.lstsq(A, b, rcond=None)
    Q = np.zeros((r, r))
    for col, (i, j) in enumerate(pairs):
        Q[i, j] = Q[j, i] = q[col]
    try:
        C = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise ValueError("coefficients do not admit a positive-definite Gram matrix") from None
    return LyapunovSpec(C.T, d, n)


def square_spec(n: int, d: int, small: float = 0.01) -> LyapunovSpec:
    """``P`` whose expansion is ``|x|^2`` plus a tiny higher-degree term."""
    r = basis_dim(n, d)
    P = np.diag([1.0 if sum(e) == 1 else small for e in exponents(n, d)])
    return LyapunovSpec(P[:r, :r], d, n)


# --------------------------------------------------------------------------
# objective and swarm


def measure_objective(p: PlantSet, spec: LyapunovSpec, eps: float, core: Sequence[BoxVec] = (), threads: int = 1) -> float:
    try:
        L = lyapunov_from_P(spec)
    except RankError:
        return 0.0
    res = rnisevia(p, L, eps, core=core, threads=threads)
    return measure(project(res.paving))


@dataclass
class SwarmTrace:
    values: list[float] = field(default_factory=list)
    best: list[float] = field(default_factory=list)
    initial: list[float] = field(default_factory=list)


def particle_swarm(
    objective: Callable[[np.ndarray], float],
    dim: int,
    budget: int,
    seed: int,
    *,
    swarm: int = SWARM_SIZE,
    inertia: float = INERTIA,
    cognitive: float = ACCEL,
    social: float = ACCEL,
    init_range: tuple[float, float] = INIT_RANGE,
    init: Sequence[np.ndarray] = (),
    threads: int = 1,
    trace: SwarmTrace | None = None,
) -> tuple[np.ndarray, float]:
    """Global-best PSO maximizing ``objective``.

    ``budget`` counts swarm evaluation rounds; the first round scores the
    initial positions. Velocities start at zero and are clamped to the width
    of the initialization box. The global best only changes on strict
    improvement, so the result is never worse than any initial particle.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    lo, hi = init_range
    vmax = hi - lo
    x = rng.uniform(lo, hi, size=(swarm, dim))
    for i, p0 in enumerate(list(init)[:swarm]):
        x[i] = np.asarray(p0, dtype=float).reshape(dim)
    v = np.zeros_like(x)
    cache: dict[bytes, float] = {}

    def score(rows):
        todo = [r for r in rows if r.tobytes() not in cache]
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                vals = list(pool.map(objective, todo))
        else:
            vals = [objective(r) for r in todo]
        for r, val in zip(todo, vals):
            cache[r.tobytes()] = float(val)
        return np.array([cache[r.tobytes()] for r in rows])

    f = score(x)
    pbest, pval = x.copy(), f.copy()
    g = int(np.argmax(pval))
    gbest, gval = pbest[g].copy(), float(pval[g])
    if trace is not None:
        trace.initial = f.tolist()
        trace.values.extend(f.tolist())
        trace.best.append(gval)
    for _ in range(budget - 1):
        r1 = rng.random(x.shape)
        r2 = rng.random(x.shape)
        v = inertia * v + cognitive * r1 * (pbest - x) + social * r2 * (gbest - x)
        v = np.clip(v, -vmax, vmax)
        x = x + v
        f = score(x)
        better = f > pval
        pbest[better] = x[better]
        pval[better] = f[better]
        g = int(np.argmax(pval))
        if pval[g] > gval:
            gbest, gval = pbest[g].copy(), float(pval[g])
        if trace is not None:
            trace.values.extend(f.tolist())
            trace.best.append(gval)
    return gbest, gval


def pso_optimize(
    p: PlantSet,
    n: int,
    d: int,
    eps: float,
    budget: int,
    seed: int,
    *,
    swarm: int = SWARM_SIZE,
    init: Sequence[np.ndarray] = (),
    core: Sequence[BoxVec] = (),
    threads: int = 1,
    trace: SwarmTrace | None = None,
) -> LyapunovSpec:
    """Search ``P`` maximizing the measure of the projected robust set."""
    r = basis_dim(n, d)

    def objective(flat):
        return measure_objective(p, LyapunovSpec(flat.reshape(r, r), d, n), eps, core)

    best, val = particle_swarm(
        objective, r * r, budget, seed, swarm=swarm, init=[np.asarray(P).reshape(-1) for P in init],
        threads=threads, trace=trace,
    )
    return LyapunovSpec(best.reshape(r, r), d, n, objective=val)


# --------------------------------------------------------------------------
# linear controller near the origin


class ControllerError(ValueError):
    pass


def _jacobian(p: PlantSet) -> tuple[np.ndarray, np.ndarray]:
    A = np.zeros((p.n, p.n))
    B = np.zeros((p.n, p.m))
    for i, f in enumerate(p.fhat):
        gx, gu = linearize(f)
        A[i], B[i] = gx, gu
    return A, B


def closed_loop_exprs(p: PlantSet, K: np.ndarray) -> tuple[list[Expr], list[Expr]]:
    """``fhat(x, Kx)`` and ``delta(x, Kx)`` as expressions in ``x`` alone."""
    K = np.atleast_2d(K)
    mapping = {}
    for j in range(p.m):
        node: Expr = Const(0.0)
        for i in range(p.n):
            if K[j, i] != 0:
                node = BinOp("+", node, BinOp("*", Const(float(K[j, i])), Var("x", i, i)))
        mapping[p.n + j] = node
    fs = [substitute(f, mapping, p.n, 0) for f in p.fhat]
    ds = [substitute(d, mapping, p.n, 0) for d in p.delta]
    return fs, ds


def _piece_grid(box: BoxVec, pieces: int | None, ratio: float, core: float):
    n = box.dim
    if n == 1:
        # geometric pieces keep the relative width small near the origin
        h = float(max(-box.lo[0], box.hi[0]))
        k = int(math.ceil(math.log(core) / math.log(ratio)))
        edges = h * ratio ** np.arange(k + 1)
        pos_lo, pos_hi = edges[1:], edges[:-1]
        lo = np.concatenate([pos_lo, -pos_hi, [-edges[-1]]])[:, None]
        hi = np.concatenate([pos_hi, -pos_lo, [edges[-1]]])[:, None]
        lo = np.maximum(lo, box.lo)
        hi = np.minimum(hi, box.hi)
        keep = lo[:, 0] <= hi[:, 0]
        return lo[keep], hi[keep]
    pieces = pieces or max(4, int(4096 ** (1 / n)) // 2 * 2)
    edges = [np.linspace(a, b, pieces + 1) for a, b in zip(box.lo, box.hi)]
    cells = np.array(list(itertools.product(range(pieces), repeat=n)))
    lo = np.stack([edges[j][cells[:, j]] for j in range(n)], axis=1)
    hi = np.stack([edges[j][cells[:, j] + 1] for j in range(n)], axis=1)
    return lo, hi


def contraction_bound(
    p: PlantSet,
    K: np.ndarray,
    box: BoxVec,
    pieces: int | None = None,
    *,
    ratio: float = 0.98,
    core: float = 1e-6,
) -> float:
    """Upper bound on ``|x+|_inf / |x|_inf`` over ``box`` under ``u = Kx``.

    The box is cut into pieces. On a piece away from the origin the bound is
    the centered successor enclosure divided by the smallest ``|x|_inf``
    there. On pieces touching the origin ``fhat(x, Kx)`` and ``delta(x, Kx)``
    both vanish at 0, so the mean-value theorem bounds each by its gradient
    enclosure times ``|x|_inf``. For one state the pieces shrink
    geometrically by ``ratio`` towards a central piece of relative size
    ``core``.
    """
    fs, ds = closed_loop_exprs(p, K)
    lo, hi = _piece_grid(box, pieces, ratio, core)
    span = (lo <= 0) & (hi >= 0)
    touches = np.all(span, axis=1)
    far = ~touches
    mag_min = np.max(np.where(span, 0.0, np.minimum(np.abs(lo), np.abs(hi))), axis=1)
    worst = 0.0
    for f, d in zip(fs, ds):
        if far.any():
            flo, fhi = centered_boxes(f, lo[far], hi[far])
            _, dhi = centered_boxes(d, lo[far], hi[far])
            reach = np.maximum(np.abs(flo - dhi), np.abs(fhi + dhi))
            worst = max(worst, float(np.max(reach / mag_min[far]) * (1 + 1e-12)))
        if touches.any():
            _, gf = gradient_boxes(f, lo[touches], hi[touches])
            _, gd = gradient_boxes(d, lo[touches], hi[touches])
            row = sum(np.maximum(np.abs(g[0]), np.abs(g[1])) for g in gf)
            row = row + sum(np.maximum(np.abs(g[0]), np.abs(g[1])) for g in gd)
            worst = max(worst, float(np.max(row) * (1 + 1e-12)))
    return worst


def linear_gain(
    p: PlantSet,
    pole: float = DEFAULT_POLE,
    *,
    h0: float = 0.1,
    h_min: float = 1e-6,
    shrink: float = 0.8,
    contraction: float | None = None,
) -> tuple[np.ndarray, BoxVec]:
    """Gain ``K`` placing the linearized closed loop at ``pole`` and a
    neighborhood ``X0 = [-h, h]^n`` on which ``u = Kx`` is a verified
    contraction for every plant in the set.

    ``contraction`` defaults to ``(1 + |pole|) / 2``: strictly below one, with
    room above ``|pole|`` for the uncertainty. The radius starts at ``h0``
    and shrinks by ``shrink`` until the bound holds.
    """
    if not 0 < shrink < 1:
        raise ValueError("shrink must lie in (0, 1)")
    if not abs(pole) < 1:
        raise ControllerError("pole must lie inside the unit disk")
    A, B = _jacobian(p)
    ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(p.n)])
    if np.linalg.matrix_rank(ctrb) < p.n:
        raise ControllerError("uncontrollable linearization")
    if p.n == 1 and p.m == 1:
        K = np.array([[(pole - A[0, 0]) / B[0, 0]]])
    else:
        from scipy.signal import place_poles

        poles = pole * np.linspace(1.0, 0.5, p.n) if p.n > 1 else np.array([pole])
        K = -place_poles(A, B, poles).gain_matrix
    rho = (1 + abs(pole)) / 2 if contraction is None else contraction
    h = h0
    while h >= h_min:
        box = BoxVec(-h * np.ones(p.n), h * np.ones(p.n))
        if contraction_bound(p, K, box) <= rho:
            return K, box
        h *= shrink
    raise ControllerError("no robustly contractive neighborhood")


# --------------------------------------------------------------------------
# nonlinear controller


@dataclass
class Component:
    lo: float
    hi: float
    knots_x: np.ndarray
    knots_u: np.ndarray  # (k, m)

    def __post_init__(self):
        self.knots_x = np.asarray(self.knots_x, dtype=float).reshape(-1)
        self.knots_u = np.asarray(self.knots_u, dtype=float).reshape(self.knots_x.size, -1)
        self._fit = None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), self.knots_x[0], self.knots_x[-1])
        if self.knots_x.size == 1:
            return np.broadcast_to(self.knots_u[0], (x.size, self.knots_u.shape[1])).copy()
        if self._fit is None:
            self._fit = PchipInterpolator(self.knots_x, self.knots_u, axis=0, extrapolate=False)
        return self._fit(x).reshape(x.size, -1)


@dataclass
class ControllerSpec:
    """Piecewise controller: ``Kx`` on ``x0``, an interpolant elsewhere."""

    K: np.ndarray
    x0: BoxVec | None
    components: list[Component]
    method: str = "pchip"

    def __post_init__(self):
        self.K = np.atleast_2d(np.asarray(self.K, dtype=float))

    @property
    def n(self) -> int:
        return self.K.shape[1]

    @property
    def m(self) -> int:
        return self.K.shape[0]

    @property
    def table(self) -> list[tuple[float, np.ndarray]]:
        return [(float(x), u) for c in self.components for x, u in zip(c.knots_x, c.knots_u)]

    def nonlinear(self, x) -> np.ndarray:
        """The fitted interpolant alone; nan outside every component."""
        xs = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
        out = np.full((xs.size, self.m), np.nan)
        for c in self.components:
            mask = (xs >= c.lo) & (xs <= c.hi)
            if mask.any():
                out[mask] = c.evaluate(xs[mask])
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        if self.x0 is not None and self.x0.contains_point(x):
            return self.K @ x
        u = self.nonlinear(x[0])[0] if self.n == 1 else np.full(self.m, np.nan)
        return u


def _runs(ulo: np.ndarray, uhi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge control boxes into connected runs; for ``m > 1`` boxes are kept as is."""
    if ulo.shape[1] != 1:
        return ulo, uhi
    order = np.argsort(ulo[:, 0])
    a, b = ulo[order, 0], uhi[order, 0]
    reach = np.maximum.accumulate(b)
    start = np.concatenate([[True], a[1:] > reach[:-1]])
    idx = np.flatnonzero(start)
    ends = np.maximum.reduceat(b, idx)
    return a[idx, None], ends[:, None]


def _overlap(alo, ahi, blo, bhi):
    lo, hi = np.maximum(alo, blo), np.minimum(ahi, bhi)
    return lo, hi, float(np.min(hi - lo))


def _component_knots(pav: Paving, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Knots for one covered state interval ``[a, b]``.

    The in-boxes cut ``[a, b]`` into columns on which the admissible control
    set is constant. One connected run is chained per column, each chosen to
    overlap its predecessor as much as possible, and the knot at a column
    boundary sits at the centre of the overlap. Both knots of a column then
    lie in that column's run, so the monotone interpolant stays admissible.
    """
    lo, hi = pav.in_lo, pav.in_hi
    sel = (hi[:, 0] >= a) & (lo[:, 0] <= b)
    lo, hi = lo[sel], hi[sel]
    cuts = np.unique(np.clip(np.concatenate([lo[:, 0], hi[:, 0], [a, b]]), a, b))
    knots_x = [cuts[0]]
    knots_u = []
    prev = None
    for left, right in zip(cuts[:-1], cuts[1:]):
        here = (lo[:, 0] <= left) & (hi[:, 0] >= right)
        rlo, rhi = _runs(lo[here, 1:], hi[here, 1:])
        if prev is None:
            k = int(np.argmax(np.prod(rhi - rlo, axis=1)))
            knots_u.append(0.5 * (rlo[k] + rhi[k]))
        else:
            scores = [_overlap(prev[0], prev[1], rlo[i], rhi[i])[2] for i in range(rlo.shape[0])]
            k = int(np.argmax(scores))
            if scores[k] >= 0:
                olo, ohi, _ = _overlap(prev[0], prev[1], rlo[k], rhi[k])
                knots_u.append(0.5 * (olo + ohi))
            else:
                knots_u.append(0.5 * (rlo[k] + rhi[k]))
        prev = (rlo[k], rhi[k])
        knots_x.append(right)
    if prev is None:
        rlo, rhi = _runs(lo[:, 1:], hi[:, 1:])
        k = int(np.argmax(np.prod(rhi - rlo, axis=1)))
        prev = (rlo[k], rhi[k])
    knots_u.append(0.5 * (prev[0] + prev[1]))
    return np.asarray(knots_x, dtype=float), np.asarray(knots_u, dtype=float).reshape(len(knots_x), -1)


def _largest_run_midpoints(pav: Paving, xs: np.ndarray) -> np.ndarray:
    """Midpoint of the largest admissible control run at each state ``x``."""
    lo, hi = pav.in_lo, pav.in_hi
    out = np.full((xs.size, pav.m), np.nan)
    for k, x in enumerate(xs):
        mask = (lo[:, 0] <= x) & (x <= hi[:, 0])
        if mask.any():
            rlo, rhi = _runs(lo[mask, 1:], hi[mask, 1:])
            i = int(np.argmax(np.prod(rhi - rlo, axis=1)))
            out[k] = 0.5 * (rlo[i] + rhi[i])
    return out


def extract_controller(
    p: PlantSet,
    pav: Paving,
    K,
    x0: BoxVec | None,
    *,
    rule: str = "columns",
    spacing: float | None = None,
) -> ControllerSpec:
    """Fit a monotone piecewise cubic controller on each covered component.

    ``rule="columns"`` places knots on in-box column boundaries (see
    :func:`_component_knots`). ``rule="spacing"`` samples states every
    ``spacing`` (default ``10 * eps``) and takes the midpoint of the largest
    admissible control run; it gives fewer knots but is not guaranteed to
    pass :func:`verify_controller`.
    """
    if p.n != 1:
        raise NotImplementedError("controller fitting is implemented for one state dimension")
    if pav.is_empty() and x0 is None:
        raise ControllerError("empty paving and empty neighborhood: nothing to control")
    if rule not in ("columns", "spacing"):
        raise ValueError(f"unknown knot rule {rule!r}")
    step = spacing if spacing is not None else 10 * (pav.eps or 1e-3)
    comps = []
    for a, b in covered_intervals(project(pav)):
        if rule == "columns":
            xs, us = _component_knots(pav, a, b)
        else:
            count = max(int(math.floor((b - a) / step)), 1)
            xs = a + (np.arange(count) + 0.5) * ((b - a) / count)
            us = _largest_run_midpoints(pav, xs)
            keep = ~np.isnan(us).any(axis=1)
            xs, us = xs[keep], us[keep]
            if not xs.size:
                continue
        us[xs == 0] = 0.0
        comps.append(Component(a, b, xs, us))
    return ControllerSpec(np.atleast_2d(np.asarray(K, dtype=float)), x0, comps)


@dataclass
class VerifyReport:
    passed: bool
    checked: int
    violations: list[float]

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}: {self.checked} segments and grid points, {len(self.violations)} violations"


def _segments(c: Component):
    """Boxes enclosing the controller graph over one component.

    A PCHIP interpolant is monotone between knots, so the graph over
    ``[x_k, x_k+1]`` lies in the box spanned by the two knot values. Beyond
    the outer knots the input is clamped and the value is constant.
    """
    xs = np.concatenate([[c.lo], c.knots_x, [c.hi]])
    us = np.concatenate([c.knots_u[:1], c.knots_u, c.knots_u[-1:]])
    xlo, xhi = xs[:-1], xs[1:]
    ulo = np.minimum(us[:-1], us[1:])
    uhi = np.maximum(us[:-1], us[1:])
    keep = xlo < xhi
    if not keep.any():
        keep[0] = True  # a single-point component is checked as a point
    return np.concatenate([xlo[keep, None], ulo[keep]], axis=1), np.concatenate([xhi[keep, None], uhi[keep]], axis=1)


def verify_controller(p: PlantSet, pav: Paving, ctl: ControllerSpec, grid: int = 2000) -> VerifyReport:
    """Check the graph of the fitted controller lies in the admissible set.

    Every knot segment is enclosed in a box that must be covered by the
    in-boxes, which certifies the whole component. A sampled check on a
    mesh of ``grid`` points per component guards the enclosure itself.
    Violations are reported as state values.
    """
    if p.n != 1:
        raise NotImplementedError("controller verification is implemented for one state dimension")
    lo, hi = pav.in_lo, pav.in_hi
    tree = build_tree(pav.root, lo, hi)
    bad: list[float] = []
    checked = 0
    by_comp = {(c.lo, c.hi): c for c in ctl.components}
    for a, b in covered_intervals(project(pav)):
        comp = next((c for (l, h), c in by_comp.items() if l <= a and b <= h), None)
        if comp is None:
            bad.append(0.5 * (a + b))
            continue
        slo, shi = _segments(comp)
        ok = covers_arrays(tree, slo, shi) == INSIDE
        bad.extend((0.5 * (slo[~ok, 0] + shi[~ok, 0])).tolist())
        checked += slo.shape[0]
        xs = np.linspace(a, b, grid)
        pts = np.concatenate([xs[:, None], ctl.nonlinear(xs)], axis=1)
        for start in range(0, xs.size, 512):
            chunk = pts[start:start + 512]
            inside = np.all((lo[None] <= chunk[:, None]) & (chunk[:, None] <= hi[None]), axis=2).any(axis=1)
            inside &= ~np.isnan(chunk).any(axis=1)
            bad.extend(chunk[~inside, 0].tolist())
        checked += xs.size
    return VerifyReport(not bad, checked, sorted(set(bad)))


# --------------------------------------------------------------------------
# persistence


def controller_text(ctl: ControllerSpec) -> str:
    lines = [f"method {ctl.method}", f"n {ctl.n}", f"m {ctl.m}"]
    lines.append("K " + " ".join(repr(float(v)) for v in ctl.K.reshape(-1)))
    lines.append(f"X0 {ctl.x0}" if ctl.x0 is not None else "X0 none")
    for c in ctl.components:
        lines.append(f"component {float(c.lo)!r} {float(c.hi)!r} {c.knots_x.size}")
        for x, u in zip(c.knots_x, c.knots_u):
            lines.append("knot " + repr(float(x)) + " " + " ".join(repr(float(v)) for v in u))
    return "\n".join(lines) + "\n"


def parse_controller(text: str) -> ControllerSpec:
    head: dict[str, str] = {}
    comps: list[tuple[float, float, list]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, _, rest = line.strip().partition(" ")
        if key == "component":
            a, b, _ = rest.split()
            comps.append((float(a), float(b), []))
        elif key == "knot":
            if not comps:
                raise ValueError(f"line {lineno}: knot before any component")
            comps[-1][2].append([float(v) for v in rest.split()])
        elif key in ("method", "n", "m", "K", "X0"):
            head[key] = rest
        else:
            raise ValueError(f"line {lineno}: unknown record {key!r}")
    n, m = int(head["n"]), int(head["m"])
    K = np.array([float(v) for v in head["K"].split()]).reshape(m, n)
    x0 = None if head.get("X0", "none") == "none" else BoxVec.parse(head["X0"])
    components = []
    for a, b, knots in comps:
        arr = np.array(knots, dtype=float).reshape(-1, 1 + m)
        components.append(Component(a, b, arr[:, 0], arr[:, 1:]))
    return ControllerSpec(K, x0, components, head.get("method", "pchip"))


def save_controller(path, ctl: ControllerSpec, p: PlantSet, pav: Paving, grid: int = 2000) -> VerifyReport:
    """Verify, then write. Refuses to persist a controller that fails."""
    report = verify_controller(p, pav, ctl, grid)
    if not report.passed:
        raise ControllerError(f"refusing to save unverified controller ({report})")
    with open(path, "w") as fh:
        fh.write(controller_text(ctl))
    return report


def load_controller(path) -> ControllerSpec:
    with open(path) as fh:
        return parse_controller(fh.read())
