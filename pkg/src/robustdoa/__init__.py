"""Robust domain of attraction estimation and controller synthesis with interval paving."""

from .estimator import RobustDOAClassifier
from .expr import ExprError, parse
from .interval import BoxVec, Interval
from .paving import Paving, covered_intervals, deserialize, measure, project, serialize
from .rnis import LyapunovFn, PlantError, PlantSet, estimate_wn, level_set_baseline, rnisevia
from .sevia import ACCEPT, REJECT, UNKNOWN, pave
from .sim import RandomAdmissible, batch, simulate
from .synth import (
    ControllerSpec,
    LyapunovSpec,
    extract_controller,
    linear_gain,
    lyapunov_from_P,
    monomial_basis,
    pso_optimize,
    verify_controller,
)

__version__ = "0.1.0"

__all__ = [
    "ACCEPT", "REJECT", "UNKNOWN", "BoxVec", "ControllerSpec", "ExprError", "Interval", "LyapunovFn",
    "LyapunovSpec", "Paving", "PlantError", "PlantSet", "RandomAdmissible", "RobustDOAClassifier", "batch",
    "covered_intervals", "deserialize", "estimate_wn", "extract_controller", "level_set_baseline", "linear_gain",
    "lyapunov_from_P", "measure", "monomial_basis", "parse", "pave", "project", "pso_optimize", "rnisevia",
    "serialize", "simulate", "verify_controller",
]
