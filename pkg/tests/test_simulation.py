from dataclasses import replace

import numpy as np
import pytest

from olfc.coordination import DestabilizationOverride
from olfc.integrate import rk4_step
from olfc.simulation import ClosedLoop, ControllerSpec, LoadSchedule, initialize, simulate, step

from conftest import build


def primal_dual(doc):
    doc["controllers"] = {"family": "primal_dual", "primal_dual_gains": {"v": 1.0, "lambda": 2.0}}


def with_load_control(doc):
    doc["controllers"]["controllable_loads"] = [{"bus": 5, "T_theta": 0.2, "benefit": {"q": 2.0, "r": 15.0}}]
    doc["controllers"]["comm_edges"] = [[1, 2], [2, 3], [3, 5]]


def first_order_gen1(doc):
    unit = doc["units"][0]
    unit["order"] = 1
    del unit["T_s"]


def short(doc, horizon=12.0):
    doc["integrator"]["horizon"] = horizon


@pytest.mark.parametrize("mutate, sizes", [
    (None, dict(eta=11, omega_g=3, P_m=3, P_s=3, theta=3, v=0, theta_l=0)),
    (primal_dual, dict(eta=11, P_s=3, theta=3, v=11, theta_l=0)),
    (with_load_control, dict(theta=3, theta_l=1, v=0)),
    (first_order_gen1, dict(P_s=2, theta=3)),
])
def test_layout_sizes(mutate, sizes):
    system = ClosedLoop(build(mutate=mutate))
    for name, n in sizes.items():
        assert system.layout.length(name) == n, name
    assert system.layout.size == sum(system.layout.length(k) for k in system.layout.slices)


def test_open_loop_layout_has_no_controller_states():
    system = ClosedLoop(build("case6_open_loop"))
    assert system.layout.length("theta") == 0 and system.layout.length("P_s") == 0


@pytest.mark.parametrize("name, mutate", [
    ("case6_nominal", None),
    ("case6_nominal", primal_dual),
    ("case6_nominal", with_load_control),
    ("case6_nominal", first_order_gen1),
    ("case6_open_loop", None),
    ("case6_nominal", lambda d: d["controllers"].update(family="decentralized", comm_edges=[])),
])
def test_initial_state_is_equilibrium(name, mutate):
    sc = build(name, mutate)
    system = ClosedLoop(sc)
    x0 = initialize(sc).values
    assert np.max(np.abs(system.rhs(0.0, x0, system.segment(0.0)))) < 1e-9


def test_schedule_is_right_continuous():
    sched = LoadSchedule((0.0, 10.0), (np.array([1.0]), np.array([2.0])))
    assert sched.at(9.999)[0] == 1.0
    assert sched.at(10.0)[0] == 2.0
    assert sched.at(10.0 - 1e-12)[0] == 2.0
    with pytest.raises(ValueError):
        LoadSchedule((0.0, 0.0), (np.ones(1), np.ones(1)))


def test_controller_spec_validation():
    with pytest.raises(ValueError, match="family"):
        ControllerSpec("pid")
    sc = build(mutate=with_load_control)
    with pytest.raises(ValueError):
        ControllerSpec("primal_dual", loads=sc.controller.loads)


def test_scenario_validation(nominal):
    with pytest.raises(ValueError, match="horizon"):
        replace(nominal, horizon=-1.0)
    with pytest.raises(ValueError, match="dt"):
        replace(nominal, dt=0.0)


def test_step_split_at_interior_breakpoint(nominal):
    sc = replace(nominal, schedule=LoadSchedule((0.0, 0.0105), nominal.schedule.loads), horizon=1.0)
    system = ClosedLoop(sc)
    x = initialize(sc).values
    got = system.step(x, 0.010, 1e-3)
    mid = rk4_step(system.rhs, 0.010, x, 0.0005, system.segment(0.010))
    want = rk4_step(system.rhs, 0.0105, mid, 0.0005, system.segment(0.0105))
    assert np.allclose(got, want, rtol=0, atol=1e-14)
    unsplit = rk4_step(system.rhs, 0.010, x, 1e-3, system.segment(0.010))
    assert np.max(np.abs(unsplit - got)) > 1e-8


def test_override_segment_gain():
    sc = build("case6_unstable")
    system = ClosedLoop(sc)
    assert np.array_equal(system.segment(9.9).gain, [1, 1, 1])
    assert np.array_equal(system.segment(10.0).gain, [1, 1, 5])
    assert 10.0 in system.breakpoints


def test_override_must_target_second_order_unit(nominal):
    sc = build(mutate=first_order_gen1)
    ctrl = replace(sc.controller, overrides=(DestabilizationOverride(0, 5.0),))
    with pytest.raises(ValueError, match="second-order"):
        ClosedLoop(replace(sc, controller=ctrl))


def test_step_matches_simulate(nominal):
    sc = replace(nominal, horizon=10.0)
    x1 = step(initialize(sc), 0.0, sc)
    traj = simulate(replace(sc, horizon=sc.dt))
    assert np.array_equal(x1.values, traj.states[1])
    assert x1["P_m"].shape == (3,)


def test_divergence_bound_truncates(nominal):
    sc = replace(nominal, horizon=10.0, divergence_bound=0.5)
    traj = simulate(sc)
    assert traj.diverged and traj.divergence_time == pytest.approx(sc.dt)
    assert len(traj.times) == 2


def test_non_finite_state_flagged(nominal):
    sc = replace(nominal, horizon=10.0,
                 load_perturbation=lambda t: np.full(3, np.nan) if t > 0.0045 else np.zeros(3))
    traj = simulate(sc)
    assert traj.diverged and traj.divergence_time == pytest.approx(0.005)
    assert np.all(np.isfinite(traj.states))


def test_pre_step_segment_stays_at_rest(nominal):
    traj = simulate(replace(nominal, horizon=10.0))
    assert np.max(np.abs(traj.states - traj.states[0])) < 1e-10


def test_mixed_order_network_regulates_frequency():
    sc = build(mutate=lambda d: (first_order_gen1(d), short(d, 60.0)))
    traj = simulate(sc)
    assert not traj.diverged
    assert np.max(np.abs(traj.frequencies()[-1])) < 5e-3


def test_load_control_reaches_welfare_optimum():
    sc = build(mutate=with_load_control)
    traj = simulate(sc)
    opt = sc.optimum(80.0)
    assert np.max(np.abs(traj.channel("P_m")[-1] - opt.P_m_opt)) < 1e-3
    assert abs(traj.channel("theta_l")[-1, 0] - opt.u_l_opt[0]) < 1e-3
    assert np.ptp(traj.price_signal()[-1]) < 1e-4
