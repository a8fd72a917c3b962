import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustdoa.interval import BoxVec
from robustdoa.paving import INSIDE, covers_arrays, tree_from_boxes
from robustdoa.sevia import ACCEPT, REJECT, UNKNOWN, box_test, max_evaluations, pave

ROOT = BoxVec([-2, -2], [2, 2])


def _sq_range(lo, hi):
    """Exact range of t^2 over [lo, hi], elementwise."""
    top = np.maximum(lo * lo, hi * hi)
    bot = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(lo * lo, hi * hi))
    return bot, top


def disk_test(r2=1.0):
    def test(lo, hi):
        b0, t0 = _sq_range(lo[:, 0], hi[:, 0])
        b1, t1 = _sq_range(lo[:, 1], hi[:, 1])
        # pad by a few ulps so float rounding of the sums cannot flip a label
        lab = np.full(lo.shape[0], UNKNOWN, dtype=np.int8)
        lab[(t0 + t1) * (1 + 1e-15) < r2] = ACCEPT
        lab[(b0 + b1) * (1 - 1e-15) > r2] = REJECT
        return lab

    return test


@pytest.fixture(scope="module")
def disk():
    return pave(disk_test(), [ROOT], 0.01)


def test_disk_area(disk):
    area = disk.volumes()["IN"]
    assert math.pi - 0.15 <= area <= math.pi


def test_disk_partition(disk):
    v = disk.volumes()
    assert abs(sum(v.values()) - ROOT.volume()) <= 1e-9 * ROOT.volume()
    assert np.all((disk.bou_hi - disk.bou_lo).max(axis=1) < 0.01)


def test_disk_monte_carlo_soundness(disk, rng):
    k = rng.integers(0, disk.n_in, size=10_000)
    pts = disk.in_lo[k] + rng.uniform(size=(10_000, 2)) * (disk.in_hi[k] - disk.in_lo[k])
    assert np.all(np.sum(pts**2, axis=1) <= 1.0)
    k = rng.integers(0, disk.out_lo.shape[0], size=10_000)
    pts = disk.out_lo[k] + rng.uniform(size=(10_000, 2)) * (disk.out_hi[k] - disk.out_lo[k])
    assert np.all(np.sum(pts**2, axis=1) > 1.0)


def test_constant_accept():
    boxes = [BoxVec([0, 0], [1, 1]), BoxVec([1, 0], [2, 1])]
    p = pave(lambda lo, hi: np.full(lo.shape[0], ACCEPT), boxes, 0.1)
    assert p.n_in == 2 and p.meta["evaluations"] == 2
    assert p.out_lo.shape[0] == 0 and p.bou_lo.shape[0] == 0


def test_constant_unknown_bisects_to_depth():
    p = pave(lambda lo, hi: np.full(lo.shape[0], UNKNOWN), [BoxVec([0, 0], [1, 1])], 0.3)
    w = (p.bou_hi - p.bou_lo).max(axis=1)
    assert p.n_in == 0 and np.all(w < 0.3)
    assert p.bou_lo.shape[0] == 16  # widths 1 -> 0.5 -> 0.25 on each axis
    assert p.meta["evaluations"] == 1 + 2 + 4 + 8 + 16
    assert p.meta["evaluations"] <= max_evaluations(BoxVec([0, 0], [1, 1]), 0.3)


def test_bound_counts_strict_stopping_rule():
    # width 4 at eps 0.5 needs 4 halvings per axis (0.5 is not below 0.5)
    assert max_evaluations(ROOT, 0.5) == 2**9 - 1
    assert max_evaluations(ROOT, 0.6) == 2**7 - 1
    assert max_evaluations(BoxVec([0], [0.1]), 0.5) == 1
    p = pave(lambda lo, hi: np.full(lo.shape[0], UNKNOWN), [ROOT], 0.5)
    assert p.meta["evaluations"] == max_evaluations(ROOT, 0.5)


@pytest.mark.parametrize("eps", [0.0, -1.0, float("nan")])
def test_bad_eps(eps):
    with pytest.raises(ValueError, match="eps must be positive"):
        pave(disk_test(), [ROOT], eps)


def test_scalar_test_adapter():
    t = box_test(lambda b: ACCEPT if b.hi[0] <= 0 else (REJECT if b.lo[0] >= 0 else UNKNOWN))
    p = pave(t, [BoxVec([-1, 0], [1, 1])], 0.1)
    assert p.volumes()["IN"] == 1.0 and p.volumes()["OUT"] == 1.0


@settings(max_examples=30, deadline=None)
@given(
    st.floats(0.2, 3.0),
    st.floats(-1, 1),
    st.floats(-1, 1),
    st.sampled_from([0.5, 0.25, 0.1, 0.07]),
)
def test_evaluation_bound(r2, cx, cy, eps):
    def shifted(lo, hi):
        return disk_test(r2)(lo - [cx, cy], hi - [cx, cy])

    p = pave(shifted, [ROOT], eps)
    assert p.meta["evaluations"] <= max_evaluations(ROOT, eps)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 2.5), st.sampled_from([0.2, 0.1, 0.05]))
def test_monotone_refinement(r2, eps):
    coarse = pave(disk_test(r2), [ROOT], eps)
    fine = pave(disk_test(r2), [ROOT], eps / 2)
    pairs = [
        ((coarse.in_lo, coarse.in_hi), (fine.in_lo, fine.in_hi)),
        ((coarse.out_lo, coarse.out_hi), (fine.out_lo, fine.out_hi)),
    ]
    for (a, b), target in pairs:
        if not a.shape[0]:
            continue
        t = tree_from_boxes(ROOT, [BoxVec(lo, hi) for lo, hi in zip(*target)])
        assert np.all(covers_arrays(t, a, b) == INSIDE)


def test_threads_give_identical_paving():
    a = pave(disk_test(), [ROOT], 0.02)
    b = pave(disk_test(), [ROOT], 0.02, threads=3, chunk=64)
    assert a == b
    assert a.meta["evaluations"] == b.meta["evaluations"]
