import numpy as np
import pytest
from conftest import FHAT

from robustdoa.interval import BoxVec
from robustdoa.rnis import LyapunovFn, PlantSet
from robustdoa.sim import (
    RandomAdmissible,
    as_region,
    batch,
    sample_region,
    simulate,
    trajectories_csv,
    zero_controller,
)

ROOT = "[-2,2],[-2,2]"


@pytest.fixture(scope="module")
def nominal():
    return PlantSet.from_strings([FHAT], ["0"], ROOT, 1, 1)


def test_zero_uncertainty_linear_law_converges(nominal, gain):
    K, _ = gain
    t = simulate(nominal, lambda x: K @ x, [0.04], steps=100)
    assert t.converged and not t.escaped
    assert np.all(t.errors == 0)
    # every step inside X0 contracts by the certified rate
    ratios = np.abs(t.states[1:, 0]) / np.abs(t.states[:-1, 0])
    assert np.all(ratios <= (1 + 0.3351) / 2)


def test_start_at_origin_is_converged(plant, ctl_x2):
    t = simulate(plant, ctl_x2, [0.0])
    assert t.converged and t.steps == 0 and t.states.shape == (1, 1)


def test_errors_respect_delta(plant, ctl_x2, rng):
    for _ in range(20):
        t = simulate(plant, ctl_x2, rng.uniform(-2, 0), seed=rng)
        for x, u, e in zip(t.states[:-1], t.controls, t.errors):
            assert np.all(np.abs(e) <= plant.bound(x, u))
        # states follow the recursion exactly
        for k in range(t.steps):
            x, u, e = t.states[k], t.controls[k], t.errors[k]
            assert t.states[k + 1] == pytest.approx(plant.step(x, u, e))


def test_adversarial_errors_hit_the_bound(plant, ctl_x2):
    t = simulate(plant, ctl_x2, [-1.5], adversarial=True)
    for x, u, e in zip(t.states[:-1], t.controls, t.errors):
        assert np.abs(e) == pytest.approx(plant.bound(x, u))


def test_deterministic_given_seed(plant, ctl_x2):
    a = batch(plant, ctl_x2, [BoxVec([-2], [0])], 20, seed=5)
    b = batch(plant, ctl_x2, [BoxVec([-2], [0])], 20, seed=5)
    assert trajectories_csv(a.trajectories) == trajectories_csv(b.trajectories)
    c = batch(plant, ctl_x2, [BoxVec([-2], [0])], 20, seed=5, threads=3)
    assert trajectories_csv(a.trajectories) == trajectories_csv(c.trajectories)


def test_escape_is_flagged():
    p = PlantSet.from_strings(["2*x1 + u1"], ["0"], ROOT, 1, 1)
    t = simulate(p, zero_controller(1), [0.5])
    assert t.escaped and not t.converged
    assert t.states[-1, 0] == 2.0 * t.states[-2, 0]
    assert t.steps == 3  # 2.0 is still inside the closed box


def test_undefined_control_stops(plant, ctl_x2):
    t = simulate(plant, ctl_x2, [0.7])  # in the gap of the x^2 controller
    assert t.undefined and t.steps == 0 and not t.converged


def test_zero_controller_does_not_always_converge(plant):
    s = batch(plant, zero_controller(1), [BoxVec([-2], [2])], 200, seed=0)
    assert s.converged < 1.0


def test_fitted_controller_from_random_states(plant, ctl_lstar):
    s = batch(plant, ctl_lstar, [BoxVec([-2], [2])], 200, seed=0)
    assert s.converged == 1.0 and s.escaped == 0.0 and 0 < s.max_steps < 200


def test_random_admissible_policy(plant, run_lstar, gain, rng):
    pol = RandomAdmissible(run_lstar.paving, *gain)
    pav = run_lstar.paving
    for x in rng.uniform(-2, 2, size=50):
        u = pol(np.array([x]), rng)
        if gain[1].contains_point([x]):
            assert u == pytest.approx(gain[0] @ [x])
            continue
        pt = np.array([x, u[0]])
        assert np.any(np.all((pav.in_lo <= pt) & (pt <= pav.in_hi), axis=1))
    s = batch(plant, pol, [BoxVec([-2], [2])], 50, seed=1)
    assert s.converged == 1.0


def test_csv_layout(plant, ctl_x2):
    t = simulate(plant, ctl_x2, [-1.0])
    text = trajectories_csv([t], LyapunovFn.from_text("x1^2", 1))
    lines = text.splitlines()
    assert lines[0] == "run,k,x1,u1,e1,L"
    assert len(lines) == 1 + t.states.shape[0]
    assert lines[-1].split(",")[3:5] == ["", ""]
    assert float(lines[1].split(",")[-1]) == 1.0
    assert trajectories_csv([]) == ""


def test_input_validation(plant, ctl_x2, rng):
    with pytest.raises(ValueError, match="outside the state box"):
        simulate(plant, ctl_x2, [2.5])
    with pytest.raises(ValueError, match="count"):
        batch(plant, ctl_x2, [BoxVec([-1], [0])], 0)
    with pytest.raises(ValueError, match="empty region"):
        as_region([])
    pts = np.array([sample_region(as_region([(-1.0, -0.5), (0.5, 1.0)]), rng) for _ in range(200)])
    assert np.all((np.abs(pts) >= 0.5) & (np.abs(pts) <= 1.0))
