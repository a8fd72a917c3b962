"""Tri-labeled box collections and their exact state-space projection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .interval import BoxVec

IN, OUT, BOU = "IN", "OUT", "BOU"

# ProjTree leaf labels
UNCOVERED, COVERED, MIXED, SPLIT = 0, 1, 2, -1
# covers() answers
OUTSIDE, INSIDE, STRADDLE = -1, 1, 0


def _as_arrays(boxes, dim) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(boxes, tuple) and len(boxes) == 2 and isinstance(boxes[0], np.ndarray):
        lo, hi = boxes
        return np.asarray(lo, dtype=float).reshape(-1, dim), np.asarray(hi, dtype=float).reshape(-1, dim)
    boxes = list(boxes)
    if not boxes:
        return np.empty((0, dim)), np.empty((0, dim))
    return np.array([b.lo for b in boxes], dtype=float), np.array([b.hi for b in boxes], dtype=float)


def sort_boxes(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Permutation ordering boxes lexicographically by lower then upper corner."""
    if lo.shape[0] == 0:
        return np.arange(0)
    keys = [hi[:, j] for j in range(hi.shape[1] - 1, -1, -1)]
    keys += [lo[:, j] for j in range(lo.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


class Paving:
    """Boxes classified IN, OUT or BOU, all bisection descendants of ``root``.

    Box lists are held as ``(k, dim)`` arrays of lower and upper corners,
    always in canonical (lexicographic) order.
    """

    def __init__(self, root: BoxVec, n: int, m: int, inner=(), outer=(), boundary=(), eps=None, meta=None):
        self.root = root
        self.n = int(n)
        self.m = int(m)
        if root.dim != self.dim:
            raise ValueError(f"root has dimension {root.dim}, expected n+m={self.dim}")
        self.eps = eps
        self.meta = dict(meta or {})
        self.in_lo, self.in_hi = self._canon(*_as_arrays(inner, self.dim))
        self.out_lo, self.out_hi = self._canon(*_as_arrays(outer, self.dim))
        self.bou_lo, self.bou_hi = self._canon(*_as_arrays(boundary, self.dim))

    @staticmethod
    def _canon(lo, hi):
        order = sort_boxes(lo, hi)
        return np.ascontiguousarray(lo[order]), np.ascontiguousarray(hi[order])

    @property
    def dim(self) -> int:
        return self.n + self.m

    def _boxes(self, lo, hi) -> list[BoxVec]:
        return [BoxVec(a, b) for a, b in zip(lo, hi)]

    @property
    def boxes_in(self) -> list[BoxVec]:
        return self._boxes(self.in_lo, self.in_hi)

    @property
    def boxes_out(self) -> list[BoxVec]:
        return self._boxes(self.out_lo, self.out_hi)

    @property
    def boxes_bou(self) -> list[BoxVec]:
        return self._boxes(self.bou_lo, self.bou_hi)

    @property
    def n_in(self) -> int:
        return self.in_lo.shape[0]

    def is_empty(self) -> bool:
        return self.n_in == 0

    def volumes(self) -> dict[str, float]:
        def vol(lo, hi):
            return float(np.sum(np.prod(hi - lo, axis=1))) if lo.shape[0] else 0.0

        return {
            IN: vol(self.in_lo, self.in_hi),
            OUT: vol(self.out_lo, self.out_hi),
            BOU: vol(self.bou_lo, self.bou_hi),
        }

    def same_inner(self, other: "Paving") -> bool:
        """Exact equality of the (canonically ordered) in-box lists."""
        return np.array_equal(self.in_lo, other.in_lo) and np.array_equal(self.in_hi, other.in_hi)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Paving):
            return NotImplemented
        return (
            self.n == other.n
            and self.m == other.m
            and self.root == other.root
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("in_lo", "in_hi", "out_lo", "out_hi", "bou_lo", "bou_hi")
            )
        )

    def __repr__(self) -> str:
        return (
            f"Paving(n={self.n}, m={self.m}, in={self.n_in}, out={self.out_lo.shape[0]}, "
            f"bou={self.bou_lo.shape[0]})"
        )


# --------------------------------------------------------------------------
# serialization


def _box_text(lo, hi) -> str:
    return ",".join(f"[{float(a)!r},{float(b)!r}]" for a, b in zip(lo, hi))


def serialize(p: Paving) -> str:
    lines = [f"dim={p.dim} n={p.n} m={p.m} root={p.root}"]
    labels = [IN] * p.n_in + [OUT] * p.out_lo.shape[0] + [BOU] * p.bou_lo.shape[0]
    lo = np.concatenate([p.in_lo, p.out_lo, p.bou_lo])
    hi = np.concatenate([p.in_hi, p.out_hi, p.bou_hi])
    for i in sort_boxes(lo, hi):
        lines.append(f"{labels[i]} {_box_text(lo[i], hi[i])}")
    return "\n".join(lines) + "\n"


class PavingFormatError(ValueError):
    pass


def deserialize(text: str) -> Paving:
    lines = text.splitlines()
    if not lines:
        raise PavingFormatError("line 1: missing header")
    header = {}
    for part in lines[0].split(" ", 3):
        key, sep, value = part.partition("=")
        if not sep:
            raise PavingFormatError(f"line 1: malformed header field {part!r}")
        header[key] = value
    try:
        dim, n, m = int(header["dim"]), int(header["n"]), int(header["m"])
        root = BoxVec.parse(header["root"])
    except (KeyError, ValueError) as exc:
        raise PavingFormatError(f"line 1: malformed header ({exc})") from None
    if dim != n + m or root.dim != dim:
        raise PavingFormatError(f"line 1: header dim={dim} does not match n+m={n + m} / root dimension {root.dim}")
    groups = {IN: [], OUT: [], BOU: []}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        label, _, rest = line.strip().partition(" ")
        if label not in groups:
            raise PavingFormatError(f"line {lineno}: unknown label {label!r}")
        try:
            box = BoxVec.parse(rest)
        except ValueError as exc:
            raise PavingFormatError(f"line {lineno}: {exc}") from None
        if box.dim != dim:
            raise PavingFormatError(f"line {lineno}: box has dimension {box.dim}, expected {dim}")
        groups[label].append(box)
    return Paving(root, n, m, groups[IN], groups[OUT], groups[BOU])


# --------------------------------------------------------------------------
# projection tree


@dataclass
class ProjTree:
    """Binary subdivision of the state root box with coverage labels.

    ``core`` boxes are extra state regions treated as covered by
    :func:`covers` (used for the linear-controller neighborhood of the
    origin); they do not contribute to :func:`measure`.
    """

    root: BoxVec
    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray
    core: tuple[BoxVec, ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.root.dim

    def leaves(self, which: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        mask = self.left < 0
        if which is not None:
            mask &= self.label == which
        return self.lo[mask], self.hi[mask]

    def with_core(self, core: Iterable[BoxVec]) -> "ProjTree":
        return ProjTree(self.root, self.lo, self.hi, self.left, self.right, self.label, tuple(core))

    def intervals(self) -> list[tuple[float, float]]:
        """Covered set of a one-dimensional tree as merged closed intervals."""
        if self.n != 1:
            raise ValueError("intervals() is defined for one state dimension")
        lo, hi = self.leaves(COVERED)
        order = np.argsort(lo[:, 0])
        out: list[list[float]] = []
        for a, b in zip(lo[order, 0], hi[order, 0]):
            if out and a <= out[-1][1]:
                out[-1][1] = max(out[-1][1], b)
            else:
                out.append([a, b])
        return [(float(a), float(b)) for a, b in out]


def _split(lo, hi):
    w = hi - lo
    axis = np.argmax(w, axis=1)
    rows = np.arange(lo.shape[0])
    mid = 0.5 * lo[rows, axis] + 0.5 * hi[rows, axis]
    left_hi = hi.copy()
    left_hi[rows, axis] = mid
    right_lo = lo.copy()
    right_lo[rows, axis] = mid
    return (lo, left_hi), (right_lo, hi)


def _needed_depth(root: BoxVec, lo: np.ndarray, hi: np.ndarray) -> int:
    """Depth at which boxes aligned to the bisection grid of ``root`` are resolved,
    plus two levels per axis. Edges off that grid end in MIXED leaves."""
    depth = 0
    for j, w in enumerate(root.widths):
        sizes = (hi[:, j] - lo[:, j])[hi[:, j] > lo[:, j]]
        if w > 0 and sizes.size:
            depth += int(np.ceil(np.log2(w / sizes.min()))) + 2
    return depth


def build_tree(root: BoxVec, lo: np.ndarray, hi: np.ndarray, max_depth: int | None = None) -> ProjTree:
    """Tree over ``root`` marking the union of boxes (lo, hi) as covered.

    Boxes obtained by bisecting ``root`` are represented exactly. Other
    boxes are resolved down to ``max_depth`` (by default a few levels below
    the smallest box); leaves still cut by a box edge there are MIXED.
    """
    n = root.dim
    lo = np.asarray(lo, dtype=float).reshape(-1, n)
    hi = np.asarray(hi, dtype=float).reshape(-1, n)
    if lo.shape[0]:
        both = np.unique(np.concatenate([lo, hi], axis=1), axis=0)
        lo = np.maximum(both[:, :n], root.lo)
        hi = np.minimum(both[:, n:], root.hi)
        keep = np.all(lo < hi, axis=1)
        lo, hi = lo[keep], hi[keep]
    if max_depth is None:
        max_depth = min(64, _needed_depth(root, lo, hi))

    node_lo = [root.lo[None, :]]
    node_hi = [root.hi[None, :]]
    parent_of = [np.array([-1])]
    labels = [np.array([SPLIT], dtype=np.int8)]
    count = 1

    frontier = np.array([0])
    f_lo, f_hi = root.lo[None, :], root.hi[None, :]
    pair_node = np.zeros(lo.shape[0], dtype=np.int64)  # index into frontier
    pair_box = np.arange(lo.shape[0])
    depth = 0
    final_label = np.full(1, SPLIT, dtype=np.int8)
    children: dict[int, tuple[int, int]] = {}

    while frontier.size:
        k = frontier.size
        has_pair = np.zeros(k, dtype=bool)
        has_pair[pair_node] = True
        inside = np.all((lo[pair_box] <= f_lo[pair_node]) & (f_hi[pair_node] <= hi[pair_box]), axis=1)
        covered = np.zeros(k, dtype=bool)
        covered[pair_node[inside]] = True
        lab = np.full(k, SPLIT, dtype=np.int8)
        lab[~has_pair] = UNCOVERED
        lab[covered] = COVERED
        pending = lab == SPLIT
        if depth >= max_depth:
            lab[pending] = MIXED
            pending[:] = False
        if final_label.size < count:
            final_label = np.concatenate([final_label, np.full(count - final_label.size, SPLIT, dtype=np.int8)])
        final_label[frontier] = lab
        if not pending.any():
            break
        p_idx = np.nonzero(pending)[0]
        (l_lo, l_hi), (r_lo, r_hi) = _split(f_lo[p_idx], f_hi[p_idx])
        new_ids_left = count + np.arange(p_idx.size)
        new_ids_right = count + p_idx.size + np.arange(p_idx.size)
        count += 2 * p_idx.size
        node_lo += [l_lo, r_lo]
        node_hi += [l_hi, r_hi]
        for f, a, b in zip(frontier[p_idx], new_ids_left, new_ids_right):
            children[int(f)] = (int(a), int(b))
        # re-pair boxes with the children they overlap with positive measure
        slot = np.full(k, -1, dtype=np.int64)
        slot[p_idx] = np.arange(p_idx.size)
        keep = slot[pair_node] >= 0
        pn = slot[pair_node[keep]]
        pb = pair_box[keep]
        c_lo = np.concatenate([l_lo, r_lo])
        c_hi = np.concatenate([l_hi, r_hi])
        cand_node = np.concatenate([pn, pn + p_idx.size])
        cand_box = np.concatenate([pb, pb])
        ov = np.all(
            np.maximum(lo[cand_box], c_lo[cand_node]) < np.minimum(hi[cand_box], c_hi[cand_node]), axis=1
        )
        pair_node = cand_node[ov]
        pair_box = cand_box[ov]
        frontier = np.concatenate([new_ids_left, new_ids_right])
        f_lo, f_hi = c_lo, c_hi
        depth += 1

    all_lo = np.concatenate(node_lo)
    all_hi = np.concatenate(node_hi)
    if final_label.size < count:
        final_label = np.concatenate([final_label, np.full(count - final_label.size, SPLIT, dtype=np.int8)])
    return _compact(root, all_lo, all_hi, final_label, children)


def _compact(root, lo, hi, label, children) -> ProjTree:
    """Merge sibling leaves with equal labels, then renumber reachable nodes."""
    label = label.copy()
    for node in sorted(children, reverse=True):
        a, b = children[node]
        if a in children or b in children:
            continue
        if label[a] == label[b] and label[a] in (COVERED, UNCOVERED):
            label[node] = label[a]
            del children[node]
    order = []
    stack = [0]
    while stack:
        v = stack.pop()
        order.append(v)
        if v in children:
            a, b = children[v]
            stack.append(b)
            stack.append(a)
    remap = {v: i for i, v in enumerate(order)}
    left = np.full(len(order), -1, dtype=np.int64)
    right = np.full(len(order), -1, dtype=np.int64)
    for v, i in remap.items():
        if v in children:
            a, b = children[v]
            left[i] = remap[a]
            right[i] = remap[b]
    idx = np.array(order)
    lab = label[idx].astype(np.int8)
    lab[left >= 0] = SPLIT
    return ProjTree(root, lo[idx], hi[idx], left, right, lab)


def project(p: Paving, core: Iterable[BoxVec] = ()) -> ProjTree:
    """Exact projection of the in-boxes onto the first ``n`` coordinates."""
    state_root = p.root.project(slice(0, p.n))
    tree = build_tree(state_root, p.in_lo[:, : p.n], p.in_hi[:, : p.n])
    return tree.with_core(core) if core else tree


def covered_intervals(t: ProjTree) -> list[tuple[float, float]]:
    """Merged closed intervals of covered leaves together with the core."""
    runs = sorted(t.intervals() + [(float(c.lo[0]), float(c.hi[0])) for c in t.core])
    out: list[list[float]] = []
    for a, b in runs:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(float(a), float(b)) for a, b in out]


def gaps(t: ProjTree) -> tuple[np.ndarray, np.ndarray]:
    """Open uncovered intervals of a one-dimensional tree, outside included."""
    runs = covered_intervals(t)
    edges = [-np.inf] + [v for r in runs for v in r] + [np.inf]
    ga = np.array(edges[0::2], dtype=float)
    gb = np.array(edges[1::2], dtype=float)
    keep = ga < gb
    return ga[keep], gb[keep]


def _interval_flags(t: ProjTree, qlo: np.ndarray, qhi: np.ndarray):
    """One-dimensional :func:`_tree_flags` via sorted merged intervals."""
    runs = t.intervals()
    a, b = qlo[:, 0], qhi[:, 0]
    if not runs:
        return np.zeros(a.shape, dtype=bool), np.ones(a.shape, dtype=bool)
    c = np.array([r[0] for r in runs])
    d = np.array([r[1] for r in runs])
    idx = np.searchsorted(c, b, side="right") - 1
    safe = np.maximum(idx, 0)
    any_cov = (idx >= 0) & (d[safe] >= a)
    inside = (idx >= 0) & (c[safe] <= a) & (b <= d[safe])
    return any_cov, ~inside


def _tree_flags(t: ProjTree, qlo: np.ndarray, qhi: np.ndarray):
    """Per query: touches a covered leaf / touches a non-covered region."""
    if t.n == 1 and not np.any(t.label == MIXED):
        return _interval_flags(t, qlo, qhi)
    k = qlo.shape[0]
    any_cov = np.zeros(k, dtype=bool)
    any_unc = np.zeros(k, dtype=bool)
    outside_root = np.any(qlo < t.root.lo, axis=1) | np.any(qhi > t.root.hi, axis=1)
    any_unc |= outside_root
    meets_root = np.all((qlo <= t.root.hi) & (t.root.lo <= qhi), axis=1)
    q = np.nonzero(meets_root)[0]
    node = np.zeros(q.size, dtype=np.int64)
    while q.size:
        leaf = t.left[node] < 0
        lab = t.label[node]
        if leaf.any():
            lq = q[leaf]
            ln = node[leaf]
            ll = lab[leaf]
            any_cov[lq[ll != UNCOVERED]] = True
            # an uncovered leaf that only shares a face with the query does not
            # uncover it: overlap must be strict along axes of positive width
            flat = qlo[lq] == qhi[lq]
            strict = (qlo[lq] < t.hi[ln]) & (t.lo[ln] < qhi[lq])
            real = np.all(strict | flat, axis=1)
            any_unc[lq[(ll != COVERED) & real]] = True
        q, node = q[~leaf], node[~leaf]
        if not q.size:
            break
        # stop descending once a query is known to straddle
        live = ~(any_cov[q] & any_unc[q])
        q, node = q[live], node[live]
        cq = np.concatenate([q, q])
        cn = np.concatenate([t.left[node], t.right[node]])
        hit = np.all((qlo[cq] <= t.hi[cn]) & (t.lo[cn] <= qhi[cq]), axis=1)
        q, node = cq[hit], cn[hit]
    return any_cov, any_unc


def _subtract_box(qlo, qhi, clo, chi):
    """Closed pieces of each query box outside ``[clo, chi]``.

    Returns (lo, hi, owner) arrays. Pieces are closures, so they may share a
    face with the core box; that only makes the coverage answer stricter.
    """
    k, n = qlo.shape
    pieces_lo, pieces_hi, owner = [], [], []
    cur_lo = qlo.copy()
    cur_hi = qhi.copy()
    alive = np.all((qlo <= chi) & (clo <= qhi), axis=1)
    # queries disjoint from the core are kept whole
    pieces_lo.append(qlo[~alive])
    pieces_hi.append(qhi[~alive])
    owner.append(np.nonzero(~alive)[0])
    idx = np.nonzero(alive)[0]
    cur_lo, cur_hi = cur_lo[idx], cur_hi[idx]
    for j in range(n):
        below = cur_lo[:, j] < clo[j]
        if below.any():
            plo = cur_lo[below].copy()
            phi = cur_hi[below].copy()
            phi[:, j] = clo[j]
            pieces_lo.append(plo)
            pieces_hi.append(phi)
            owner.append(idx[below])
        above = cur_hi[:, j] > chi[j]
        if above.any():
            plo = cur_lo[above].copy()
            phi = cur_hi[above].copy()
            plo[:, j] = chi[j]
            pieces_lo.append(plo)
            pieces_hi.append(phi)
            owner.append(idx[above])
        cur_lo[:, j] = np.maximum(cur_lo[:, j], clo[j])
        cur_hi[:, j] = np.minimum(cur_hi[:, j], chi[j])
    return np.concatenate(pieces_lo), np.concatenate(pieces_hi), np.concatenate(owner)


def covers_arrays(t: ProjTree, qlo: np.ndarray, qhi: np.ndarray) -> np.ndarray:
    """Vectorized :func:`covers` over stacked state boxes."""
    qlo = np.atleast_2d(np.asarray(qlo, dtype=float))
    qhi = np.atleast_2d(np.asarray(qhi, dtype=float))
    k = qlo.shape[0]
    if not t.core:
        any_cov, any_unc = _tree_flags(t, qlo, qhi)
        touches_core = np.zeros(k, dtype=bool)
    else:
        plo, phi, owner = qlo, qhi, np.arange(k)
        touches_core = np.zeros(k, dtype=bool)
        for c in t.core:
            touches_core[owner[np.all((plo <= c.hi) & (c.lo <= phi), axis=1)]] = True
            plo, phi, o2 = _subtract_box(plo, phi, c.lo, c.hi)
            owner = owner[o2]
        pc, pu = _tree_flags(t, plo, phi)
        any_cov = np.zeros(k, dtype=bool)
        any_unc = np.zeros(k, dtype=bool)
        np.logical_or.at(any_cov, owner, pc)
        np.logical_or.at(any_unc, owner, pu)
    out = np.full(k, STRADDLE, dtype=np.int8)
    out[~any_unc] = INSIDE
    out[~any_cov & ~touches_core] = OUTSIDE
    return out


def covers(t: ProjTree, b: BoxVec) -> int:
    """INSIDE, OUTSIDE or STRADDLE for a state box against the covered set."""
    return int(covers_arrays(t, b.lo[None, :], b.hi[None, :])[0])


def measure(t: ProjTree) -> float:
    """Lebesgue measure of the covered leaves (core boxes excluded)."""
    lo, hi = t.leaves(COVERED)
    return float(np.sum(np.prod(hi - lo, axis=1))) if lo.shape[0] else 0.0


def empty_tree(root: BoxVec) -> ProjTree:
    return build_tree(root, np.empty((0, root.dim)), np.empty((0, root.dim)))


def tree_from_boxes(root: BoxVec, boxes: Sequence[BoxVec]) -> ProjTree:
    lo, hi = _as_arrays(boxes, root.dim)
    return build_tree(root, lo, hi)
