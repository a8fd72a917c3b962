"""Monte Carlo closed-loop simulation of the uncertain plant."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .interval import BoxVec
from .paving import Paving
from .rnis import LyapunovFn, PlantSet

CONV_TOL = 0.01
STEPS = 200


@dataclass
class Trajectory:
    """One closed-loop run. ``states`` has one more row than ``controls``."""

    states: np.ndarray
    controls: np.ndarray
    errors: np.ndarray
    converged: bool
    escaped: bool = False
    undefined: bool = False  # the policy had no control for the current state
    steps: int = 0

    def lyapunov(self, L: LyapunovFn) -> np.ndarray:
        return np.asarray(L(self.states), dtype=float).reshape(-1)


class RandomAdmissible:
    """Draws ``u`` uniformly from the admissible set of the paving at ``x``.

    A box containing ``x`` is picked with probability proportional to its
    control volume, then ``u`` is uniform in it. Inside ``x0`` the linear law
    ``Kx`` is used.
    """

    stochastic = True

    def __init__(self, pav: Paving, K=None, x0: BoxVec | None = None):
        self.lo = pav.in_lo
        self.hi = pav.in_hi
        self.n = pav.n
        self.K = None if K is None else np.atleast_2d(np.asarray(K, dtype=float))
        self.x0 = x0

    def __call__(self, x, rng: np.random.Generator) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        if self.x0 is not None and self.K is not None and self.x0.contains_point(x):
            return self.K @ x
        n = self.n
        mask = np.all((self.lo[:, :n] <= x) & (x <= self.hi[:, :n]), axis=1)
        if not mask.any():
            return np.full(self.lo.shape[1] - n, np.nan)
        ulo, uhi = self.lo[mask, n:], self.hi[mask, n:]
        w = np.prod(uhi - ulo, axis=1)
        prob = w / w.sum() if w.sum() > 0 else None
        i = rng.choice(ulo.shape[0], p=prob)
        return rng.uniform(ulo[i], uhi[i])


def zero_controller(m: int) -> Callable:
    return lambda x: np.zeros(m)


def _draw_error(p: PlantSet, x, u, rng, adversarial: bool) -> np.ndarray:
    bound = p.bound(x, u)
    if adversarial:
        # push away from the origin, which is the worst case for convergence
        push = np.sign(np.array([f.eval_real(x, u) for f in p.fhat]))
        push[push == 0] = rng.choice([-1.0, 1.0], size=int(np.sum(push == 0)))
        return push * bound
    return rng.uniform(-bound, bound)


def simulate(
    p: PlantSet,
    ctl: Callable,
    x0,
    steps: int = STEPS,
    conv_tol: float = CONV_TOL,
    seed: int | np.random.Generator = 0,
    *,
    adversarial: bool = False,
) -> Trajectory:
    """Run ``x(k+1) = fhat(x, u) + e`` with ``u = ctl(x)`` and ``|e| <= delta``.

    Stops on convergence (``|x|_inf < conv_tol``), on leaving the state box
    of ``w_cons`` (flagged ``escaped``), when the policy returns nan
    (flagged ``undefined``) or after ``steps`` steps.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float).reshape(p.n)
    root = p.state_root
    if not root.contains_point(x):
        raise ValueError(f"initial state {x} lies outside the state box {root}")
    stochastic = getattr(ctl, "stochastic", False)
    xs, us, es = [x], [], []
    escaped = undefined = False
    for _ in range(steps):
        if np.max(np.abs(x)) < conv_tol:
            break
        u = np.asarray(ctl(x, rng) if stochastic else ctl(x), dtype=float).reshape(p.m)
        if np.isnan(u).any():
            undefined = True
            break
        e = _draw_error(p, x, u, rng, adversarial)
        x = p.step(x, u, e)
        xs.append(x)
        us.append(u)
        es.append(e)
        if not root.contains_point(x):
            escaped = True
            break
    states = np.array(xs)
    return Trajectory(
        states=states,
        controls=np.array(us).reshape(-1, p.m),
        errors=np.array(es).reshape(-1, p.n),
        converged=bool(np.max(np.abs(states[-1])) < conv_tol),
        escaped=escaped,
        undefined=undefined,
        steps=len(us),
    )


def sample_region(region: Sequence[BoxVec], rng: np.random.Generator) -> np.ndarray:
    """Uniform point in a union of non-overlapping boxes."""
    vols = np.array([b.volume() for b in region], dtype=float)
    if vols.sum() > 0:
        i = rng.choice(len(region), p=vols / vols.sum())
    else:
        i = rng.integers(len(region))
    b = region[i]
    return rng.uniform(b.lo, b.hi)


def as_region(region) -> list[BoxVec]:
    out = []
    for r in region:
        if isinstance(r, BoxVec):
            out.append(r)
        else:
            a, b = r
            out.append(BoxVec(np.atleast_1d(a), np.atleast_1d(b)))
    if not out:
        raise ValueError("empty region")
    return out


@dataclass
class BatchSummary:
    trajectories: list[Trajectory] = field(repr=False)
    converged: float
    escaped: float
    max_steps: int

    def __str__(self) -> str:
        k = len(self.trajectories)
        return (f"{k} runs: converged {self.converged:.3f}, escaped {self.escaped:.3f}, "
                f"max steps to convergence {self.max_steps}")


def batch(
    p: PlantSet,
    ctl: Callable,
    region,
    count: int,
    steps: int = STEPS,
    conv_tol: float = CONV_TOL,
    seed: int = 0,
    *,
    adversarial: bool = False,
    threads: int = 1,
) -> BatchSummary:
    """``count`` runs from uniform initial states; run ``i`` uses seed ``seed + i``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    boxes = as_region(region)

    def one(i: int) -> Trajectory:
        rng = np.random.default_rng(seed + i)
        x0 = sample_region(boxes, rng)
        return simulate(p, ctl, x0, steps, conv_tol, rng, adversarial=adversarial)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(one, range(count)))
    else:
        runs = [one(i) for i in range(count)]
    done = [t.steps for t in runs if t.converged]
    return BatchSummary(
        trajectories=runs,
        converged=sum(t.converged for t in runs) / count,
        escaped=sum(t.escaped for t in runs) / count,
        max_steps=max(done) if done else -1,
    )


def trajectories_csv(runs: Sequence[Trajectory], L: LyapunovFn | None = None) -> str:
    """One row per step: run, k, x..., u..., e..., L(x). The last state has no u or e."""
    if not runs:
        return ""
    n = runs[0].states.shape[1]
    m = runs[0].controls.shape[1] if runs[0].controls.size else 0
    m = m or max((t.controls.shape[1] for t in runs if t.controls.size), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "k"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
               + [f"e{i + 1}" for i in range(n)] + ["L"])
    for r, t in enumerate(runs):
        lv = t.lyapunov(L) if L is not None else None
        for k, x in enumerate(t.states):
            row = [r, k] + [repr(float(v)) for v in x]
            if k < t.steps:
                row += [repr(float(v)) for v in t.controls[k]] + [repr(float(v)) for v in t.errors[k]]
            else:
                row += [""] * (m + n)
            row.append(repr(float(lv[k])) if lv is not None else "")
            w.writerow(row)
    return buf.getvalue()
