import numpy as np
import pytest
from conftest import FHAT, LSTAR

from robustdoa.interval import BoxVec
from robustdoa.paving import Paving
from robustdoa.rnis import PlantSet
from robustdoa.synth import (
    Component,
    ControllerError,
    ControllerSpec,
    LyapunovSpec,
    RankError,
    SwarmTrace,
    basis_dim,
    coefficients,
    contraction_bound,
    controller_text,
    exponents,
    extract_controller,
    linear_gain,
    lyapunov_from_P,
    measure_objective,
    monomial_basis,
    parse_controller,
    particle_swarm,
    pso_optimize,
    save_controller,
    spec_from_coefficients,
    square_spec,
    verify_controller,
)

# -- monomial family ---------------------------------------------------------


def test_monomial_basis_examples():
    assert monomial_basis(1, 2, [2.0]).tolist() == [2.0, 4.0]
    assert exponents(2, 1) == [(1, 0), (0, 1)]
    assert monomial_basis(2, 1, [3.0, -1.0]).tolist() == [3.0, -1.0]
    assert basis_dim(2, 1) == 2 and basis_dim(2, 2) == 5 and basis_dim(1, 2) == 2
    assert monomial_basis(2, 2, np.ones((4, 2))).shape == (4, 5)
    with pytest.raises(ValueError):
        exponents(1, 0)


def test_lyapunov_from_P_examples():
    L = lyapunov_from_P(LyapunovSpec([[1, 0], [0, 0.01]], 2, 1))
    x = np.linspace(-2, 2, 9)[:, None]
    assert np.allclose(L(x), x[:, 0] ** 2 + 1e-4 * x[:, 0] ** 4, rtol=1e-12)
    L = lyapunov_from_P(LyapunovSpec(np.eye(2), 2, 1))
    assert np.allclose(L(x), x[:, 0] ** 2 + x[:, 0] ** 4)


def test_coefficients_match_gram_expansion(rng):
    P = rng.normal(size=(5, 5))
    spec = LyapunovSpec(P, 2, 2)
    c = coefficients(spec)
    pts = rng.uniform(-1, 1, size=(30, 2))
    S = monomial_basis(2, 2, pts)
    direct = np.sum((S @ P.T) ** 2, axis=1)
    poly = sum(v * pts[:, 0] ** e[0] * pts[:, 1] ** e[1] for e, v in c.items())
    assert np.allclose(direct, poly, rtol=1e-10)


def test_spec_from_coefficients_recovers_lstar():
    spec = spec_from_coefficients(LSTAR, 1, 2)
    c = coefficients(spec)
    for k, v in LSTAR.items():
        assert c[k] == pytest.approx(v, abs=1e-3)
    with pytest.raises(ValueError, match="outside"):
        spec_from_coefficients({(5,): 1.0}, 1, 2)


def test_rank_deficient_P():
    with pytest.raises(RankError, match="P not full rank"):
        lyapunov_from_P(LyapunovSpec([[1, 2], [2, 4]], 2, 1))
    assert not LyapunovSpec(np.zeros((2, 2)), 2, 1).full_rank()


def test_scaling_P_scales_V_by_square():
    P = np.array([[1.0, 0.3], [0.0, 0.5]])
    a = lyapunov_from_P(LyapunovSpec(P, 2, 1))
    b = lyapunov_from_P(LyapunovSpec(3 * P, 2, 1))
    x = np.linspace(-2, 2, 11)[:, None]
    assert np.allclose(b(x), 9 * a(x))


def test_spec_shape_checked():
    with pytest.raises(ValueError, match="P must be 2x2"):
        LyapunovSpec(np.eye(3), 2, 1)


# -- objective ---------------------------------------------------------------


def test_measure_objective_examples(plant, gain):
    x0 = gain[1]
    got = measure_objective(plant, square_spec(1, 2), 2e-3, core=[x0])
    assert got == pytest.approx(2.79, abs=0.02)
    got = measure_objective(plant, spec_from_coefficients(LSTAR, 1, 2), 2e-3, core=[x0])
    assert 3.95 <= got <= 4.0
    assert measure_objective(plant, LyapunovSpec([[1, 2], [2, 4]], 2, 1), 2e-3) == 0.0


def test_measure_objective_is_zero_when_nothing_decreases():
    p = PlantSet.from_strings(["2*x1"], ["0"], "[-2,2],[-2,2]", 1, 1)
    assert measure_objective(p, square_spec(1, 2), 0.05) == 0.0


# -- particle swarm ----------------------------------------------------------


def _bowl(x):
    return -float(np.sum((x - 0.5) ** 2))


def test_swarm_budget_one_returns_best_initial():
    seed = np.array([0.5, 0.5])
    best, val = particle_swarm(_bowl, 2, 1, seed=3, swarm=1, init=[seed])
    assert best.tolist() == [0.5, 0.5] and val == 0.0


def test_swarm_is_elitist_and_deterministic():
    tr = SwarmTrace()
    best, val = particle_swarm(_bowl, 3, 15, seed=7, swarm=6, trace=tr)
    assert val == max(tr.values) == tr.best[-1]
    assert all(b >= a for a, b in zip(tr.best, tr.best[1:]))
    assert val >= max(tr.initial)
    assert len(tr.values) == 15 * 6
    again, val2 = particle_swarm(_bowl, 3, 15, seed=7, swarm=6)
    assert np.array_equal(best, again) and val == val2
    assert _bowl(best) == val


def test_swarm_improves_on_a_smooth_bowl():
    _, val = particle_swarm(_bowl, 2, 40, seed=1, swarm=10)
    assert val > -1e-3


def test_swarm_rejects_zero_budget():
    with pytest.raises(ValueError, match="budget"):
        particle_swarm(_bowl, 2, 0, seed=0)


def test_pso_optimize_small_run(plant):
    seed_P = np.array([[1.0, 0.0], [0.0, 0.01]])
    tr = SwarmTrace()
    spec = pso_optimize(plant, 1, 2, 0.02, budget=2, seed=0, swarm=3, init=[seed_P], trace=tr)
    assert spec.P.shape == (2, 2) and spec.objective == max(tr.values)
    assert spec.objective >= tr.initial[0]
    assert spec.objective == pytest.approx(measure_objective(plant, spec, 0.02))


# -- linear controller -------------------------------------------------------


def test_linear_gain_example(gain):
    K, x0 = gain
    assert K[0, 0] == pytest.approx(1.8649, abs=1e-4)
    assert x0.lo[0] <= -0.03 and x0.hi[0] >= 0.03
    assert x0.lo[0] == -x0.hi[0]


def test_contraction_bound_dominates_samples(plant, gain, rng):
    K, x0 = gain
    bound = contraction_bound(plant, K, x0)
    assert bound <= (1 + 0.3351) / 2
    x = rng.uniform(x0.lo[0], x0.hi[0], size=20_000)
    x = x[x != 0][:, None]
    u = x @ K.T
    z = np.concatenate([x, u], axis=1)
    reach = np.abs(plant.fhat[0].eval_points(z)) + plant.delta[0].eval_points(z)
    assert np.max(reach / np.abs(x[:, 0])) <= bound


def test_linear_gain_errors(plant):
    flat = PlantSet.from_strings(["0.5*x1"], ["0"], "[-2,2],[-2,2]", 1, 1)
    with pytest.raises(ControllerError, match="uncontrollable"):
        linear_gain(flat)
    noisy = PlantSet.from_strings([FHAT], ["1.5*abs(x1)"], "[-2,2],[-2,2]", 1, 1)
    with pytest.raises(ControllerError, match="no robustly contractive neighborhood"):
        linear_gain(noisy)
    with pytest.raises(ValueError, match="shrink"):
        linear_gain(plant, shrink=1.0)
    with pytest.raises(ControllerError, match="unit disk"):
        linear_gain(plant, pole=1.2)


# -- nonlinear controller ----------------------------------------------------


def test_extract_single_box(plant):
    root = BoxVec([-2, -2], [2, 2])
    pav = Paving(root, 1, 1, inner=[BoxVec([1, 0.2], [2, 0.6])], eps=1e-3)
    ctl = extract_controller(plant, pav, [[0.0]], None)
    assert [(x, u.tolist()) for x, u in ctl.table] == [(1.0, [0.4]), (2.0, [0.4])]
    assert verify_controller(plant, pav, ctl).passed


def test_extract_example_components(ctl_x2, run_x2, gain):
    gap = (0.1074, 1.3135)
    for c in ctl_x2.components:
        assert c.hi <= gap[0] + 0.01 or c.lo >= gap[1] - 0.01
    assert np.isnan(ctl_x2.nonlinear(0.7)).all()
    assert ctl_x2(np.array([0.0])).tolist() == [0.0]
    assert ctl_x2(np.array([0.01])) == pytest.approx(gain[0] @ [0.01])
    pav = run_x2.paving
    for x, u in ctl_x2.table:
        pt = np.concatenate([[x], u])
        assert np.any(np.all((pav.in_lo <= pt) & (pt <= pav.in_hi), axis=1))


def test_extract_nothing_to_control(plant):
    pav = Paving(BoxVec([-2, -2], [2, 2]), 1, 1, [])
    with pytest.raises(ControllerError, match="nothing to control"):
        extract_controller(plant, pav, [[0.0]], None)
    with pytest.raises(ValueError, match="knot rule"):
        extract_controller(plant, pav, [[0.0]], BoxVec([-0.1], [0.1]), rule="bogus")


def test_verify_example_controllers(plant, run_x2, run_lstar, ctl_x2, ctl_lstar):
    assert verify_controller(plant, run_x2.paving, ctl_x2, grid=2000).passed
    assert verify_controller(plant, run_lstar.paving, ctl_lstar, grid=2000).passed


def test_verify_flags_every_grid_point(plant, run_x2, ctl_x2):
    comps = [Component(c.lo, c.hi, [c.lo, c.hi], [[10.0], [10.0]]) for c in ctl_x2.components]
    bad = ControllerSpec(ctl_x2.K, ctl_x2.x0, comps)
    report = verify_controller(plant, run_x2.paving, bad, grid=200)
    assert not report.passed
    flagged = set(report.violations)
    for c in comps:
        assert set(np.linspace(c.lo, c.hi, 200).tolist()) <= flagged
    assert str(report).startswith("FAIL")


def test_controller_text_round_trip(ctl_x2):
    text = controller_text(ctl_x2)
    back = parse_controller(text)
    assert controller_text(back) == text
    xs = np.linspace(-2, 2, 101)
    assert np.array_equal(back.nonlinear(xs), ctl_x2.nonlinear(xs), equal_nan=True)
    with pytest.raises(ValueError, match="line 1"):
        parse_controller("knot 0 1\n")


def test_save_refuses_unverified(plant, run_x2, ctl_x2, tmp_path):
    comps = [Component(c.lo, c.hi, [c.lo], [[10.0]]) for c in ctl_x2.components]
    path = tmp_path / "ctl.txt"
    with pytest.raises(ControllerError, match="refusing"):
        save_controller(path, ControllerSpec(ctl_x2.K, ctl_x2.x0, comps), plant, run_x2.paving)
    assert not path.exists()
    save_controller(path, ctl_x2, plant, run_x2.paving)
    assert path.read_text() == controller_text(ctl_x2)

