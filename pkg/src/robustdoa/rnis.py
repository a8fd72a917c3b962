"""Robust negative-definite and invariant sets in state-control space.

The plant set is every map ``f`` with ``fhat - delta <= f <= fhat + delta``
componentwise on the constraint box ``w_cons``. Given a Lyapunov candidate
``L`` the engine computes an inner approximation of the pairs ``(x, u)``
for which every admissible successor decreases ``L`` by at least ``alpha``
and lands back in the state projection of the set.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import interval as iv
from .expr import INTERVAL, Expr, gradient_boxes, interval_dual, parse
from .interval import BoxVec
from .paving import INSIDE, OUTSIDE, STRADDLE, Paving, gaps, ProjTree, covers_arrays, measure, project
from .sevia import ACCEPT, REJECT, UNKNOWN, pave

DEFAULT_ALPHA = 1e-6
DEFAULT_MAX_ITER = 1000


class PlantError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PlantSet:
    fhat: tuple[Expr, ...]
    delta: tuple[Expr, ...]
    n: int
    m: int
    w_cons: BoxVec
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        object.__setattr__(self, "fhat", tuple(self.fhat))
        object.__setattr__(self, "delta", tuple(self.delta))
        if len(self.fhat) != self.n or len(self.delta) != self.n:
            raise PlantError(f"need {self.n} nominal and error-bound components")
        if self.w_cons.dim != self.n + self.m:
            raise PlantError(f"w_cons has dimension {self.w_cons.dim}, expected {self.n + self.m}")
        if not self.alpha > 0:
            raise PlantError(f"alpha must be positive, got {self.alpha}")
        zx, zu = np.zeros(self.n), np.zeros(self.m)
        for i, (f, d) in enumerate(zip(self.fhat, self.delta)):
            if abs(f.eval_real(zx, zu)) > 1e-12:
                raise PlantError(f"fhat[{i}] does not vanish at the origin")
            if abs(d.eval_real(zx, zu)) > 1e-12:
                raise PlantError(f"delta[{i}] does not vanish at the origin")

    @classmethod
    def from_strings(cls, fhat: Sequence[str], delta: Sequence[str], w_cons, n: int, m: int, alpha=DEFAULT_ALPHA):
        if isinstance(w_cons, str):
            w_cons = BoxVec.parse(w_cons)
        elif not isinstance(w_cons, BoxVec):
            w_cons = BoxVec(*np.asarray(w_cons, dtype=float).T)
        return cls(
            tuple(parse(s, n, m) for s in fhat),
            tuple(parse(s, n, m) for s in delta),
            n,
            m,
            w_cons,
            float(alpha),
        )

    @property
    def state_root(self) -> BoxVec:
        return self.w_cons.project(slice(0, self.n))

    @property
    def control_root(self) -> BoxVec:
        return self.w_cons.project(slice(self.n, self.n + self.m))

    def successor_hull(self) -> BoxVec:
        """Box containing the state root and every successor from ``w_cons``."""
        lo, hi = x_plus_arrays(self, self.w_cons.lo[None, :], self.w_cons.hi[None, :])
        root = self.state_root
        return BoxVec(np.minimum(lo[0], root.lo), np.maximum(hi[0], root.hi))

    def step(self, x, u, e) -> np.ndarray:
        """Real successor ``fhat(x, u) + e``."""
        return np.array([f.eval_real(x, u) for f in self.fhat]) + np.asarray(e, dtype=float)

    def bound(self, x, u) -> np.ndarray:
        return np.array([d.eval_real(x, u) for d in self.delta])


# --------------------------------------------------------------------------
# Lyapunov candidates


class LyapunovFn:
    """Lyapunov candidate over the state variables.

    Range enclosures use the natural interval extension. For one state
    dimension they are tightened with a table of verified monotone pieces:
    on a domain ``D`` every point where the derivative might vanish lies in
    a short "critical" piece with a stored range enclosure, so the range of
    ``L`` over any ``[a, b]`` inside ``D`` is enclosed by the values at
    ``a`` and ``b`` together with the critical pieces meeting ``[a, b]``.
    """

    def __init__(self, expr: Expr, n: int, source: str | None = None, spec=None):
        if any(kind == "u" for kind, _ in expr.variables()):
            raise ValueError("Lyapunov candidate may only depend on state variables")
        self.expr = expr
        self.n = int(n)
        self.source = source if source is not None else expr.to_text()
        self.spec = spec
        self._tables: dict[tuple, tuple[np.ndarray, ...]] = {}
        if abs(expr.eval_real(np.zeros(self.n))) > 1e-12:
            raise ValueError("Lyapunov candidate must vanish at the origin")

    @classmethod
    def from_text(cls, src: str, n: int, root: BoxVec | None = None) -> "LyapunovFn":
        L = cls(parse(src, n, 0), n, source=src)
        if root is not None:
            L.check_positive(root)
        return L

    def __call__(self, x) -> np.ndarray:
        return self.expr.eval_points(np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, self.n))

    def check_positive(self, root: BoxVec, samples: int = 2000, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        pts = rng.uniform(root.lo, root.hi, size=(samples, self.n))
        pts = pts[np.any(pts != 0, axis=1)]
        vals = self(pts)
        if np.any(vals <= 0):
            bad = pts[np.argmin(vals)]
            raise ValueError(f"Lyapunov candidate is not positive at x={bad.tolist()}")

    # range enclosure ---------------------------------------------------

    def prepare(self, domain: BoxVec, tol: float = 1e-7, max_pieces: int = 20000) -> None:
        """Build the critical-piece table over ``domain`` (one state only)."""
        if self.n != 1:
            return
        key = (float(domain.lo[0]), float(domain.hi[0]))
        if key in self._tables:
            return
        lo = np.array([[key[0]]])
        hi = np.array([[key[1]]])
        crit_lo, crit_hi = [], []
        while lo.shape[0]:
            _, (g,) = gradient_boxes(self.expr, lo, hi)
            maybe = (g[0] <= 0) & (g[1] >= 0)
            lo, hi = lo[maybe], hi[maybe]
            done = (hi[:, 0] - lo[:, 0]) < tol
            if lo.shape[0] > max_pieces:
                done[:] = True
            crit_lo.append(lo[done])
            crit_hi.append(hi[done])
            lo, hi = iv.bisect_arrays(lo[~done], hi[~done])
        clo = np.concatenate(crit_lo)
        chi = np.concatenate(crit_hi)
        vlo, vhi = self.expr.eval_boxes(clo, chi)
        self._tables[key] = (key[0], key[1], clo[:, 0], chi[:, 0], vlo, vhi)

    def critical_upper(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Upper bound of ``L`` over the critical pieces meeting each interval.

        ``-inf`` where no critical piece meets it, ``nan`` where the interval
        leaves every prepared domain (no information).
        """
        a = np.asarray(lo, dtype=float).reshape(-1)
        b = np.asarray(hi, dtype=float).reshape(-1)
        out = np.full(a.shape, np.nan)
        if self.n != 1:
            return out
        for d_lo, d_hi, clo, chi, _, vhi in self._tables.values():
            inside = (a >= d_lo) & (b <= d_hi) & np.isnan(out)
            if not inside.any():
                continue
            ai, bi = a[inside][:, None], b[inside][:, None]
            meets = (clo[None, :] <= bi) & (ai <= chi[None, :])
            out[inside] = np.where(meets, vhi[None, :], -np.inf).max(axis=1, initial=-np.inf)
        return out

    def enclose(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Enclosure of ``L`` over each row box of ``(lo, hi)``."""
        lo = np.asarray(lo, dtype=float).reshape(-1, self.n)
        hi = np.asarray(hi, dtype=float).reshape(-1, self.n)
        nlo, nhi = self.expr.eval_boxes(lo, hi)
        if self.n != 1 or not self._tables:
            return nlo, nhi
        a, b = lo[:, 0], hi[:, 0]
        out_lo, out_hi = nlo.copy(), nhi.copy()
        for d_lo, d_hi, clo, chi, vlo, vhi in self._tables.values():
            inside = (a >= d_lo) & (b <= d_hi)
            if not inside.any():
                continue
            ai, bi = a[inside][:, None], b[inside][:, None]
            la = self.expr.eval_boxes(ai, ai)
            lb = self.expr.eval_boxes(bi, bi)
            t_lo = np.minimum(la[0], lb[0])
            t_hi = np.maximum(la[1], lb[1])
            if clo.size:
                meets = (clo[None, :] <= bi) & (ai <= chi[None, :])
                t_lo = np.minimum(t_lo, np.where(meets, vlo[None, :], np.inf).min(axis=1))
                t_hi = np.maximum(t_hi, np.where(meets, vhi[None, :], -np.inf).max(axis=1))
            out_lo[inside] = np.maximum(out_lo[inside], t_lo)
            out_hi[inside] = np.minimum(out_hi[inside], t_hi)
        return out_lo, out_hi


# --------------------------------------------------------------------------
# inclusion functions and box tests


def x_plus_arrays(p: PlantSet, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stacked successor enclosures ``hull([fhat - delta], [fhat + delta])``."""
    k = lo.shape[0]
    out_lo = np.empty((k, p.n))
    out_hi = np.empty((k, p.n))
    for i, (f, d) in enumerate(zip(p.fhat, p.delta)):
        fb = f.eval_boxes(lo, hi)
        db = d.eval_boxes(lo, hi)
        minus = iv.iv_sub(fb, db)
        plus = iv.iv_add(fb, db)
        out_lo[:, i] = np.minimum(minus[0], plus[0])
        out_hi[:, i] = np.maximum(minus[1], plus[1])
    return out_lo, out_hi


def x_plus_inclusion(p: PlantSet, w: BoxVec) -> BoxVec:
    if w.dim != p.n + p.m:
        raise ValueError(f"box has dimension {w.dim}, expected {p.n + p.m}")
    lo, hi = x_plus_arrays(p, w.lo[None, :], w.hi[None, :])
    return BoxVec(lo[0], hi[0])


def prepare_lyapunov(p: PlantSet, L: LyapunovFn) -> None:
    L.prepare(p.successor_hull())


def lyapunov_difference(p: PlantSet, L: LyapunovFn, lo, hi):
    """Natural enclosure of ``L(x+) - L(x)`` over stacked boxes."""
    xp = x_plus_arrays(p, lo, hi)
    lp = L.enclose(*xp)
    lx = L.enclose(lo[:, : p.n], hi[:, : p.n])
    return iv.iv_sub(lp, lx)


def _vertex_signs(n: int) -> list[tuple[int, ...]]:
    if n <= 4:
        return list(itertools.product((1, -1), repeat=n))
    return [(1,) * n, (-1,) * n]


class NDTest:
    """Batched tri-state test for the alpha-strict negative-definite set.

    ``form="natural"`` is the plain test on ``[L]([X+]) - [L]([x])``.
    ``form="centered"`` (default) keeps that as one bound and adds sharper
    ones: for one state the supremum of ``L`` over a successor interval is
    attained at an end point or inside a critical piece of ``L``, so the
    worst successor is bounded by the two extreme plants ``fhat +- delta``
    (enclosed in mean-value form) and the critical-piece values. Rejection
    uses the extreme plants, each of which is a member of the plant set.
    """

    def __init__(self, p: PlantSet, L: LyapunovFn, form: str = "centered"):
        if form not in ("natural", "centered"):
            raise ValueError(f"unknown inclusion form {form!r}")
        self.p, self.L, self.form = p, L, form
        self.signs = _vertex_signs(p.n)
        prepare_lyapunov(p, L)

    def _vertex(self, env, alg):
        """``L(fhat + s*delta) - L(x)`` for each sign vector, by composition."""
        p, L = self.p, self.L
        fs = [f._ev(env, alg) for f in p.fhat]
        ds = [d._ev(env, alg) for d in p.delta]
        lx = L.expr._ev(env[: p.n], alg)
        out = []
        for signs in self.signs:
            xs = [alg.add(f, d) if s > 0 else alg.sub(f, d) for f, d, s in zip(fs, ds, signs)]
            out.append(alg.sub(L.expr._ev(xs, alg), lx))
        return out

    def _vertex_bounds(self, lo, hi, centered: bool):
        k, dim = lo.shape
        shape = (k,)

        def b(pair):
            return np.broadcast_to(pair[0], shape).astype(float), np.broadcast_to(pair[1], shape).astype(float)

        if not centered:
            env = [(lo[:, i], hi[:, i]) for i in range(dim)]
            return [b(v) for v in self._vertex(env, INTERVAL)]
        alg = interval_dual(shape)
        duals = self._vertex(alg.seed([(lo[:, i], hi[:, i]) for i in range(dim)]), alg)
        mid = 0.5 * lo + 0.5 * hi
        centers = self._vertex([(mid[:, i], mid[:, i]) for i in range(dim)], INTERVAL)
        offsets = [(iv._sum_down(lo[:, i], -mid[:, i]), iv._sum_up(hi[:, i], -mid[:, i])) for i in range(dim)]
        out = []
        for j, ((val, grads), acc) in enumerate(zip(duals, centers)):
            nlo, nhi = b(val)
            if grads is not None:
                for g, off in zip(grads, offsets):
                    acc = iv.iv_add(acc, iv.iv_mul(g, off))
                # monotonicity test: along an axis where the gradient keeps its
                # sign the extremes sit on a face, so collapse the box onto it
                gl = np.stack([b(g)[0] for g in grads], axis=1)
                gh = np.stack([b(g)[1] for g in grads], axis=1)
                if np.any((gl >= 0) | (gh <= 0)):
                    up_lo, up_hi = lo.copy(), hi.copy()
                    dn_lo, dn_hi = lo.copy(), hi.copy()
                    inc, dec = gl >= 0, gh <= 0
                    up_lo[inc], dn_hi[inc] = hi[inc], lo[inc]
                    up_hi[dec], dn_lo[dec] = lo[dec], hi[dec]
                    vhi = b(self._vertex([(up_lo[:, i], up_hi[:, i]) for i in range(dim)], INTERVAL)[j])[1]
                    vlo = b(self._vertex([(dn_lo[:, i], dn_hi[:, i]) for i in range(dim)], INTERVAL)[j])[0]
                    nlo, nhi = np.fmax(nlo, vlo), np.fmin(nhi, vhi)
            clo, chi = b(acc)
            out.append((np.fmax(clo, nlo), np.fmin(chi, nhi)))
        return out

    def difference_bounds(self, lo, hi):
        """Lower bound on the worst plant's difference and upper bound over all plants."""
        p, L = self.p, self.L
        xp = x_plus_arrays(p, lo, hi)
        lx = L.enclose(lo[:, : p.n], hi[:, : p.n])
        dlo, dhi = iv.iv_sub(L.enclose(*xp), lx)
        if self.form == "natural":
            return dlo, dhi
        alpha = p.alpha
        # cheap bounds first; the mean-value form only where they are inconclusive
        nat = self._vertex_bounds(lo, hi, centered=False)
        dlo = np.maximum(dlo, np.max([g[0] for g in nat], axis=0))
        crit = L.critical_upper(*xp) if p.n == 1 else np.full(lo.shape[0], np.nan)
        known = ~np.isnan(crit)
        if p.n == 1:
            tail = iv._sum_up(np.where(known, crit, 0.0), -lx[0])
            tail = np.where(crit == -np.inf, -np.inf, tail)
            sharp = np.maximum(np.max([g[1] for g in nat], axis=0), tail)
            dhi = np.where(known, np.minimum(dhi, sharp), dhi)
        open_ = (dhi > -alpha) & (dlo <= -alpha)
        if open_.any():
            gs = self._vertex_bounds(lo[open_], hi[open_], centered=True)
            dlo[open_] = np.maximum(dlo[open_], np.max([g[0] for g in gs], axis=0))
            if p.n == 1:
                k = known[open_]
                sharp = np.maximum(np.max([g[1] for g in gs], axis=0), tail[open_])
                dhi[open_] = np.where(k, np.minimum(dhi[open_], sharp), dhi[open_])
        return dlo, dhi

    def __call__(self, lo, hi):
        alpha = self.p.alpha
        worst_lo, dhi = self.difference_bounds(lo, hi)
        out = np.full(lo.shape[0], UNKNOWN, dtype=np.int8)
        out[dhi <= -alpha] = ACCEPT
        out[worst_lo > -alpha] = REJECT
        return out


def nd_test(p: PlantSet, L: LyapunovFn, form: str = "centered") -> NDTest:
    return NDTest(p, L, form)


def nd_classify(p: PlantSet, L: LyapunovFn, w: BoxVec, form: str = "centered") -> int:
    return int(nd_test(p, L, form)(w.lo[None, :], w.hi[None, :])[0])


def _extreme_successors(p: PlantSet, lo, hi):
    """Natural enclosures of ``fhat - delta`` and ``fhat + delta`` per component."""
    minus, plus = [], []
    for f, d in zip(p.fhat, p.delta):
        fb = f.eval_boxes(lo, hi)
        db = d.eval_boxes(lo, hi)
        minus.append(iv.iv_sub(fb, db))
        plus.append(iv.iv_add(fb, db))
    return minus, plus


def inv_test(t: ProjTree, p: PlantSet):
    """Invariance test against the projection ``t``.

    Accepts when the successor hull is covered. Rejects when the hull is
    disjoint from the covered set, when an extreme plant ``fhat +- delta``
    always leaves it, or (one state) when every successor interval crosses
    one and the same uncovered gap.
    """
    ga, gb = gaps(t) if p.n == 1 else (None, None)
    signs = _vertex_signs(p.n)

    def test(lo, hi):
        minus, plus = _extreme_successors(p, lo, hi)
        xlo = np.stack([np.minimum(a[0], b[0]) for a, b in zip(minus, plus)], axis=1)
        xhi = np.stack([np.maximum(a[1], b[1]) for a, b in zip(minus, plus)], axis=1)
        cov = covers_arrays(t, xlo, xhi)
        reject = cov == OUTSIDE
        undecided = cov == STRADDLE
        if undecided.any():
            idx = np.nonzero(undecided)[0]
            for s in signs:
                vlo = np.stack([(pl if si > 0 else mi)[0][idx] for mi, pl, si in zip(minus, plus, s)], axis=1)
                vhi = np.stack([(pl if si > 0 else mi)[1][idx] for mi, pl, si in zip(minus, plus, s)], axis=1)
                reject[idx[covers_arrays(t, vlo, vhi) == OUTSIDE]] = True
            if p.n == 1:
                sup_minus = minus[0][1][idx]
                inf_plus = plus[0][0][idx]
                j = np.searchsorted(gb, sup_minus, side="right")
                found = j < gb.size
                crosses = found & (ga[np.minimum(j, gb.size - 1)] < inf_plus)
                reject[idx[crosses]] = True
        out = np.full(lo.shape[0], UNKNOWN, dtype=np.int8)
        out[cov == INSIDE] = ACCEPT
        out[reject] = REJECT
        return out

    return test


def inv_classify(t: ProjTree, p: PlantSet, w: BoxVec) -> int:
    return int(inv_test(t, p)(w.lo[None, :], w.hi[None, :])[0])


# --------------------------------------------------------------------------
# set estimation


def estimate_wn(p: PlantSet, L: LyapunovFn, eps: float, threads: int = 1, form: str = "centered") -> Paving:
    """Inner approximation of the alpha-strict robust negative-definite set."""
    return pave(nd_test(p, L, form), [p.w_cons], eps, n=p.n, m=p.m, root=p.w_cons, threads=threads)


@dataclass
class RnisResult:
    paving: Paving
    wn: Paving
    core: tuple[BoxVec, ...]
    stats: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def tree(self) -> ProjTree:
        return project(self.paving, self.core)

    def stats_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "in_boxes", "measure"])
        for row in self.stats:
            w.writerow([row[0], row[1], repr(row[2])])
        return buf.getvalue()


class IterationLimitError(RuntimeError):
    pass


def _cat(*pairs):
    return np.concatenate([a for a, _ in pairs]), np.concatenate([b for _, b in pairs])


def rnisevia(
    p: PlantSet,
    L: LyapunovFn,
    eps: float,
    *,
    core: Sequence[BoxVec] = (),
    max_iter: int = DEFAULT_MAX_ITER,
    threads: int = 1,
    wn: Paving | None = None,
    history: list | None = None,
) -> RnisResult:
    """Fixed point of the invariance map starting from the negative-definite set.

    ``core`` lists state boxes (the linear-controller neighborhood) that the
    invariance test treats as part of the target set. When ``history`` is a
    list, the in-box arrays ``(lo, hi)`` of every pass are appended to it,
    starting with the negative-definite set.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    core = tuple(core)
    if wn is None:
        wn = estimate_wn(p, L, eps, threads)
    cur = wn
    stats = [(0, cur.n_in, measure(project(cur)))]
    out_parts = [(wn.out_lo, wn.out_hi)]
    bou_parts = [(wn.bou_lo, wn.bou_hi)]
    if history is not None:
        history.append((cur.in_lo, cur.in_hi))
    it = 0
    while not cur.is_empty():
        if it >= max_iter:
            raise IterationLimitError(f"no fixed point after {max_iter} invariance passes")
        it += 1
        tree = project(cur, core)
        nxt = pave(inv_test(tree, p), (cur.in_lo, cur.in_hi), eps, n=p.n, m=p.m, root=p.w_cons, threads=threads)
        out_parts.append((nxt.out_lo, nxt.out_hi))
        bou_parts.append((nxt.bou_lo, nxt.bou_hi))
        stats.append((it, nxt.n_in, measure(project(nxt))))
        if history is not None:
            history.append((nxt.in_lo, nxt.in_hi))
        done = nxt.same_inner(cur)
        cur = nxt
        if done:
            break
    final = Paving(
        p.w_cons, p.n, p.m, (cur.in_lo, cur.in_hi), _cat(*out_parts), _cat(*bou_parts), eps=eps,
        meta={"iterations": it},
    )
    return RnisResult(final, wn, core, stats)


def level_set_baseline(
    p: PlantSet,
    L: LyapunovFn,
    wn: Paving,
    eps: float | None = None,
    core: Sequence[BoxVec] = (),
    iterations: int = 50,
) -> tuple[float, list[BoxVec]]:
    """Largest ``c`` with ``{L <= c}`` inside the projection of ``wn`` (plus core).

    The sublevel set is paved at resolution ``eps`` over the state root
    widened by its own width on each side, so escaping the root is seen.
    Returns ``c`` and the merged in-boxes of the sublevel paving (for one
    state dimension these are intervals).
    """
    eps = eps if eps is not None else (wn.eps or 1e-3)
    root = p.state_root
    w = root.widths
    domain = BoxVec(root.lo - w, root.hi + w)
    L.prepare(domain)
    tree = project(wn, core)

    def sublevel(c):
        def test(lo, hi):
            vlo, vhi = L.enclose(lo, hi)
            out = np.full(lo.shape[0], UNKNOWN, dtype=np.int8)
            out[vhi <= c] = ACCEPT
            out[vlo > c] = REJECT
            return out

        return pave(test, [domain], eps, n=p.n, m=0, root=domain)

    def ok(c):
        s = sublevel(c)
        lo, hi = _cat((s.in_lo, s.in_hi), (s.bou_lo, s.bou_hi))
        return bool(np.all(covers_arrays(tree, lo, hi) == INSIDE)), s

    good, best = ok(0.0)
    if not good:
        return 0.0, []
    c_lo = 0.0
    c_hi = float(L.enclose(domain.lo[None, :], domain.hi[None, :])[1][0])
    for _ in range(iterations):
        c = 0.5 * (c_lo + c_hi)
        good, s = ok(c)
        if good:
            c_lo, best = c, s
        else:
            c_hi = c
    return c_lo, _merge_boxes(best)


def _merge_boxes(s: Paving) -> list[BoxVec]:
    if s.n != 1:
        return s.boxes_in
    out: list[list[float]] = []
    for a, b in zip(s.in_lo[:, 0], s.in_hi[:, 0]):
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], float(b))
        else:
            out.append([float(a), float(b)])
    return [BoxVec([a], [b]) for a, b in out]
