"""Branch-and-bound set inversion over boxes with tri-state tests."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .interval import BoxVec, bisect_arrays
from .paving import Paving

ACCEPT, REJECT, UNKNOWN = 1, -1, 0

# A box test maps stacked (lo, hi) arrays of shape (k, dim) to k labels.
BoxTest = Callable[[np.ndarray, np.ndarray], np.ndarray]


def box_test(fn: Callable[[BoxVec], int]) -> BoxTest:
    """Lift a scalar ``BoxVec -> label`` function to the batched signature."""

    def batched(lo, hi):
        return np.array([fn(BoxVec(a, b)) for a, b in zip(lo, hi)], dtype=np.int8)

    return batched


def _halvings(w: float, eps: float) -> int:
    """Halvings until a width of ``w`` drops strictly below ``eps``."""
    k = 0
    while w >= eps:
        w /= 2
        k += 1
    return k


def max_evaluations(root: BoxVec, eps: float) -> int:
    """Worst-case number of test evaluations for a pave of ``root``.

    The bisection tree has depth at most the sum over axes of the halvings
    each axis needs to get below ``eps``, which is
    ``floor(log2(w/eps)) + 1`` for ``w >= eps`` (the stopping rule is strict).
    """
    depth = sum(_halvings(float(w), eps) for w in root.widths)
    return 2 ** (depth + 1) - 1


def _run(test: BoxTest, lo, hi, threads: int, chunk: int) -> np.ndarray:
    k = lo.shape[0]
    if threads <= 1 or k <= chunk:
        return np.asarray(test(lo, hi), dtype=np.int8).reshape(k)
    bounds = list(range(0, k, chunk)) + [k]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda ab: np.asarray(test(lo[ab[0]:ab[1]], hi[ab[0]:ab[1]]), dtype=np.int8),
                         zip(bounds[:-1], bounds[1:]))
        return np.concatenate(list(parts)).reshape(k)


def pave(
    test: BoxTest,
    init: Sequence[BoxVec] | tuple[np.ndarray, np.ndarray],
    eps: float,
    *,
    n: int | None = None,
    m: int = 0,
    root: BoxVec | None = None,
    threads: int = 1,
    chunk: int = 4096,
) -> Paving:
    """Classify ``init`` boxes into in/out/boundary sets at resolution ``eps``.

    ACCEPT goes to in, REJECT to out, a box narrower than ``eps`` to
    boundary, anything else is bisected. Boxes are processed one bisection
    level at a time so the test sees large batches; the resulting sets do
    not depend on the processing order.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if isinstance(init, tuple) and len(init) == 2 and isinstance(init[0], np.ndarray):
        lo = np.array(init[0], dtype=float, ndmin=2)
        hi = np.array(init[1], dtype=float, ndmin=2)
    else:
        init = list(init)
        if not init and root is None:
            raise ValueError("pave needs at least one initial box or an explicit root")
        dim = init[0].dim if init else root.dim
        lo = np.array([b.lo for b in init], dtype=float).reshape(-1, dim)
        hi = np.array([b.hi for b in init], dtype=float).reshape(-1, dim)
    dim = lo.shape[1] if lo.size else root.dim
    if root is None:
        root = BoxVec(lo.min(axis=0), hi.max(axis=0))
    if n is None:
        n = dim - m

    ins, outs, bous = [], [], []
    evaluations = 0
    while lo.shape[0]:
        labels = _run(test, lo, hi, threads, chunk)
        evaluations += lo.shape[0]
        acc = labels == ACCEPT
        rej = labels == REJECT
        ins.append((lo[acc], hi[acc]))
        outs.append((lo[rej], hi[rej]))
        rest = ~(acc | rej)
        lo, hi = lo[rest], hi[rest]
        small = np.max(hi - lo, axis=1) < eps if lo.shape[0] else np.zeros(0, dtype=bool)
        bous.append((lo[small], hi[small]))
        lo, hi = bisect_arrays(lo[~small], hi[~small])

    def cat(parts):
        if not parts:
            return np.empty((0, dim)), np.empty((0, dim))
        return np.concatenate([a for a, _ in parts]), np.concatenate([b for _, b in parts])

    return Paving(root, n, m, cat(ins), cat(outs), cat(bous), eps=eps, meta={"evaluations": evaluations})
