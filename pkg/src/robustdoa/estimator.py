"""Scikit-learn style front end for the robust domain of attraction pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .interval import BoxVec
from .paving import covered_intervals, covers_arrays, measure
from .rnis import DEFAULT_ALPHA, LyapunovFn, PlantSet, rnisevia
from .synth import DEFAULT_POLE, extract_controller, linear_gain, verify_controller


def check_states(X, n: int) -> np.ndarray:
    """Validate a stack of states as a float array of shape ``(k, n)``."""
    X = check_array(X, dtype=float, ensure_2d=False, ensure_all_finite=True)
    X = X.reshape(-1, 1) if X.ndim == 1 and n == 1 else X
    if X.ndim != 2 or X.shape[1] != n:
        raise ValueError(f"expected states with {n} columns, got shape {X.shape}")
    return X


def check_box(box, dim: int | None = None) -> BoxVec:
    """Accept a BoxVec, its text form or a ``(lo, hi)`` pair."""
    if isinstance(box, str):
        box = BoxVec.parse(box)
    elif not isinstance(box, BoxVec):
        lo, hi = box
        box = BoxVec(np.atleast_1d(np.asarray(lo, dtype=float)), np.atleast_1d(np.asarray(hi, dtype=float)))
    if dim is not None and box.dim != dim:
        raise ValueError(f"expected a {dim}-dimensional box, got {box.dim}")
    return box


class RobustDOAClassifier(ClassifierMixin, BaseEstimator):
    """Certified robust domain of attraction as a binary state classifier.

    ``fit`` computes the linear gain and its neighborhood ``X0``, runs the
    invariant-set iteration and fits a controller (one state dimension).
    ``predict`` labels a state 1 when it lies in the projection of the
    invariant set or in ``X0``; such states are driven to the origin by
    ``control`` for every plant in the set. The training data is ignored:
    the plant set is given by the parameters.

    Parameters
    ----------
    fhat, delta : sequence of str
        Nominal dynamics and error bound, one expression per state.
    w_cons : str
        State-control constraint box, e.g. ``"[-2,2],[-2,2]"``.
    lyapunov : str
        Lyapunov candidate in the state variables.
    """

    def __init__(
        self,
        fhat=("-sin(2*x1) - x1*u1 - 0.2*x1 - u1^2 + u1",),
        delta=("1 - exp(-0.5*(x1^2 + u1^2))",),
        w_cons="[-2,2],[-2,2]",
        n=1,
        m=1,
        lyapunov="x1^2",
        eps=1e-3,
        alpha=DEFAULT_ALPHA,
        pole=DEFAULT_POLE,
        use_core=True,
        fit_controller=True,
        threads=1,
    ):
        self.fhat = fhat
        self.delta = delta
        self.w_cons = w_cons
        self.n = n
        self.m = m
        self.lyapunov = lyapunov
        self.eps = eps
        self.alpha = alpha
        self.pole = pole
        self.use_core = use_core
        self.fit_controller = fit_controller
        self.threads = threads

    def fit(self, X=None, y=None):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        self.plant_ = PlantSet.from_strings(list(self.fhat), list(self.delta), self.w_cons, self.n, self.m, self.alpha)
        self.lyapunov_ = LyapunovFn.from_text(self.lyapunov, self.n)
        if self.use_core:
            self.K_, self.x0_ = linear_gain(self.plant_, self.pole)
            core = [self.x0_]
        else:
            self.K_, self.x0_, core = None, None, []
        self.result_ = rnisevia(self.plant_, self.lyapunov_, self.eps, core=core, threads=self.threads)
        self.tree_ = self.result_.tree
        self.measure_ = measure(self.tree_)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = self.n
        self.controller_ = None
        if self.fit_controller and self.n == 1 and self.K_ is not None:
            self.controller_ = extract_controller(self.plant_, self.result_.paving, self.K_, self.x0_)
            self.verification_ = verify_controller(self.plant_, self.result_.paving, self.controller_)
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        X = check_states(X, self.n)
        flags = covers_arrays(self.tree_, X, X)
        return (flags == 1).astype(int)

    def control(self, X):
        """Control input of the fitted controller at each state (nan outside)."""
        check_is_fitted(self, "controller_")
        if self.controller_ is None:
            raise ValueError("no controller was fitted")
        X = check_states(X, self.n)
        return np.array([self.controller_(x) for x in X])

    @property
    def projection_(self):
        check_is_fitted(self, "tree_")
        return covered_intervals(self.tree_) if self.n == 1 else self.tree_
