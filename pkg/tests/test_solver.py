import numpy as np
import pytest

from topoplan import (
    BoundaryState,
    SolverOptions,
    Weights,
    audit_feasibility,
    evaluate_pattern,
    initialize,
    lbfgs_minimize,
    two_stage_optimize,
)
from topoplan.costs import kinodynamic_penalty
from topoplan.scenario import Scenario, Vehicle, load_scenario
from topoplan.topology import InteractionPattern, static_obstacle_trajectory


# ---------------------------------------------------------------------------
# L-BFGS


def test_lbfgs_convex_quadratic():
    target = np.array([1.0, -2.0, 3.0, 0.5])

    def fun(x):
        r = x - target
        return float(r @ r), 2.0 * r

    x, info = lbfgs_minimize(fun, np.zeros(4))
    assert np.abs(x - target).max() < 1e-8
    assert info["iterations"] <= 10


def test_lbfgs_rosenbrock():
    def fun(x):
        a, b = x
        f = (1 - a) ** 2 + 100 * (b - a**2) ** 2
        g = np.array([
            -2 * (1 - a) - 400 * a * (b - a**2),
            200 * (b - a**2),
        ])
        return float(f), g

    x, _ = lbfgs_minimize(fun, np.array([-1.2, 1.0]),
                          SolverOptions(grad_tolerance=1e-10,
                                        rel_cost_tolerance=1e-14,
                                        max_iterations=500))
    assert np.abs(x - 1.0).max() < 1e-5


def test_lbfgs_accepted_iterates_monotone():
    history = []

    def fun(x):
        f = float(np.sum(x**4) + np.sum(x**2))
        return f, 4.0 * x**3 + 2.0 * x

    def cb(xk):
        history.append(fun(xk)[0])
        return False

    lbfgs_minimize(fun, np.full(6, 2.0), callback=cb)
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_lbfgs_rejects_non_finite_start():
    def fun(x):
        return float("nan"), x

    with pytest.raises(ValueError):
        lbfgs_minimize(fun, np.zeros(2))


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(memory=1)
    with pytest.raises(ValueError):
        SolverOptions(grad_tolerance=0.0)


# ---------------------------------------------------------------------------
# initialization


def _simple_scenario():
    vehicles = [
        Vehicle("a", BoundaryState.at_rest([0.0, 0.0]),
                BoundaryState.at_rest([10.0, 0.0])),
    ]
    return Scenario((-1.0, -1.0, 11.0, 1.0), vehicles, [], InteractionPattern(), Weights())


def test_initialize_deterministic():
    scn = _simple_scenario()
    _, x1 = initialize(scn)
    _, x2 = initialize(scn)
    assert np.array_equal(x1, x2)


def test_initialize_waypoints_on_segment_and_feasible():
    scn = _simple_scenario()
    layout, x0 = initialize(scn)
    traj = layout.decode(x0)[0]
    # waypoints stay on the straight start-goal line, monotonically ordered
    joints_t = np.cumsum(traj.durations)[:-1]
    joints = traj.sample(joints_t)[:, 0]
    assert np.abs(joints[:, 1]).max() < 1e-9
    assert np.all(np.diff(joints[:, 0]) > 0)
    assert 0.0 < joints[0, 0] < joints[-1, 0] < 10.0
    # the decoded guess respects the kinodynamic limits from the start
    w = scn.weights
    assert kinodynamic_penalty(traj, w.v_max, w.a_max)[0] == 0.0
    # piece count honors the per-piece path length target
    assert traj.num_pieces == max(4, int(np.ceil(10.0 / 1.5)))


def test_initialize_coincident_start_goal():
    vehicles = [
        Vehicle("a", BoundaryState.at_rest([1.0, 1.0]),
                BoundaryState.at_rest([1.0, 1.0])),
    ]
    scn = Scenario((0.0, 0.0, 2.0, 2.0), vehicles, [], InteractionPattern(), Weights())
    layout, x0 = initialize(scn)
    traj = layout.decode(x0)[0]
    assert traj.total_duration > 0.0
    times = np.linspace(0.0, traj.total_duration, 50)
    assert np.abs(traj.sample(times)[:, 0] - [1.0, 1.0]).max() < 1e-9


# ---------------------------------------------------------------------------
# pattern evaluation and the schedule


def test_evaluate_pattern_flags(scenario_dir):
    scn = load_scenario(scenario_dir / "headon2.yaml")
    layout, x0 = initialize(scn)
    # straight head-on initial guess: the pair metric is ~0, not satisfied
    statuses = evaluate_pattern(scn, layout.decode(x0))
    assert len(statuses) == 1
    assert statuses[0].pair == ("v1", "v2")
    assert statuses[0].eta == 1


def test_two_stage_headon(scenario_dir):
    scn = load_scenario(scenario_dir / "headon2.yaml")
    trajs, report = two_stage_optimize(scn)
    assert report.all_satisfied
    assert all(p.eta * p.metric < 0 for p in report.pairs)
    audit = audit_feasibility(scn, trajs)
    assert audit.ok
    assert report.min_distance >= scn.weights.d_safe * 0.99


def test_two_stage_unconstrained_skips_stage_one():
    vehicles = [
        Vehicle("a", BoundaryState.at_rest([1.0, 1.0]),
                BoundaryState.at_rest([9.0, 1.0])),
        Vehicle("b", BoundaryState.at_rest([1.0, 4.0]),
                BoundaryState.at_rest([9.0, 4.0])),
    ]
    scn = Scenario((0.0, 0.0, 10.0, 5.0), vehicles, [], InteractionPattern(), Weights())
    trajs, report = two_stage_optimize(scn)
    assert report.stage_iterations[0] == 0
    assert report.all_satisfied  # vacuously: nothing requested


def test_two_stage_deterministic(scenario_dir):
    scn = load_scenario(scenario_dir / "headon2.yaml")
    _, r1 = two_stage_optimize(scn)
    _, r2 = two_stage_optimize(scn)
    assert [p.metric for p in r1.pairs] == [p.metric for p in r2.pairs]
    assert r1.breakdown.total == r2.breakdown.total
    assert r1.stage_iterations == r2.stage_iterations


def test_two_stage_requires_x0_with_layout(scenario_dir):
    scn = load_scenario(scenario_dir / "headon2.yaml")
    layout, _ = initialize(scn)
    with pytest.raises(ValueError):
        two_stage_optimize(scn, layout=layout)


# ---------------------------------------------------------------------------
# feasibility audit


def test_audit_parked_vehicles_ok():
    vehicles = [
        Vehicle("a", BoundaryState.at_rest([0.0, 0.0]), BoundaryState.at_rest([0.0, 0.0])),
        Vehicle("b", BoundaryState.at_rest([5.0, 0.0]), BoundaryState.at_rest([5.0, 0.0])),
    ]
    scn = Scenario((-1.0, -1.0, 6.0, 1.0), vehicles, [], InteractionPattern(), Weights())
    trajs = [
        static_obstacle_trajectory([0.0, 0.0], 1.0),
        static_obstacle_trajectory([5.0, 0.0], 1.0),
    ]
    audit = audit_feasibility(scn, trajs)
    assert audit.ok
    assert audit.max_speed == 0.0
    assert abs(audit.min_distance - 5.0) < 1e-9


def test_audit_flags_close_vehicles():
    vehicles = [
        Vehicle("a", BoundaryState.at_rest([0.0, 0.0]), BoundaryState.at_rest([0.0, 0.0])),
        Vehicle("b", BoundaryState.at_rest([0.5, 0.0]), BoundaryState.at_rest([0.5, 0.0])),
    ]
    scn = Scenario((-1.0, -1.0, 1.0, 1.0), vehicles, [], InteractionPattern(), Weights())
    trajs = [
        static_obstacle_trajectory([0.0, 0.0], 1.0),
        static_obstacle_trajectory([0.5, 0.0], 1.0),
    ]
    assert not audit_feasibility(scn, trajs).ok
