import numpy as np
import pytest

from topoplan import (
    B,
    BoundaryState,
    InteractionPattern,
    Trajectory,
    classify_interaction,
    closest_approach,
    homotopy_metric,
    keypoint_sensitivities,
    metric_at_keypoint,
    minco_solve,
    winding_angle_oracle,
)
from topoplan.topology import CURVATURE_EPS, static_obstacle_trajectory

from conftest import random_rest_trajectory


def linear_traj(p0, v, duration):
    """Constant-velocity single-piece trajectory."""
    c = np.zeros((1, 6, 2))
    c[0, 0] = p0
    c[0, 1] = v
    return Trajectory(c, np.array([float(duration)]))


@pytest.fixture
def crossing_pair():
    """a moves along (t, 0), b along (5 - t, 1): closest at t = 2.5."""
    return linear_traj([0, 0], [1, 0], 5.0), linear_traj([5, 1], [-1, 0], 5.0)


# ---------------------------------------------------------------------------
# metric


def test_metric_hand_values():
    assert homotopy_metric([1, 0], [0, 1]) == 1.0
    assert homotopy_metric([1, 0], [0, -1]) == -1.0
    assert homotopy_metric([1, 1], [2, 2]) == 0.0  # radial motion
    assert homotopy_metric([1, 0], [0, 2]) == 2.0


def test_rotation_form_identities():
    assert np.array_equal(B.T, -B)
    rng = np.random.default_rng(1)
    v = rng.standard_normal((1000, 2))
    quad = np.einsum("ki,ij,kj->k", v, B, v)
    assert np.abs(quad).max() <= 1e-12


def test_metric_swap_symmetry():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p, v = rng.standard_normal(2), rng.standard_normal(2)
        assert homotopy_metric(p, v) == homotopy_metric(-p, -v)


def test_metric_rotation_reflection_equivariance():
    rng = np.random.default_rng(3)
    refl = np.diag([1.0, -1.0])
    for _ in range(100):
        p, v = rng.standard_normal(2), rng.standard_normal(2)
        th = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        m = homotopy_metric(p, v)
        assert abs(homotopy_metric(R @ p, R @ v) - m) < 1e-9
        assert abs(homotopy_metric(refl @ p, refl @ v) + m) < 1e-9


# ---------------------------------------------------------------------------
# interaction pattern


def test_pattern_symmetry_and_defaults():
    pat = InteractionPattern({("a", "b"): 1})
    assert pat.get("a", "b") == 1
    assert pat.get("b", "a") == 1
    assert pat.get("a", "c") == 0  # missing pairs read as unconstrained


def test_pattern_rejects_bad_input():
    pat = InteractionPattern()
    with pytest.raises(ValueError):
        pat.set("a", "a", 1)
    with pytest.raises(ValueError):
        pat.set("a", "b", 2)
    pat.set("a", "b", -1)
    with pytest.raises(ValueError):
        pat.set("b", "a", 1)  # conflicting relabel
    pat.set("b", "a", -1)  # consistent relabel is fine


# ---------------------------------------------------------------------------
# closest approach


def test_closest_approach_linear_example(crossing_pair):
    ta, tb = crossing_pair
    sol = closest_approach(ta, tb, (0.0, 5.0))
    assert abs(sol.t_star - 2.5) < 1e-9
    assert abs(sol.f_value - 1.0) < 1e-9
    assert abs(sol.f_tt - 8.0) < 1e-9
    assert not sol.on_boundary
    assert abs(sol.f_value - float(np.sum(sol.rel_p**2))) < 1e-10


def test_closest_approach_metric_example(crossing_pair):
    ta, tb = crossing_pair
    sol = closest_approach(ta, tb, (0.0, 5.0))
    assert np.allclose(sol.rel_p, [0.0, -1.0], atol=1e-9)
    assert np.allclose(sol.rel_v, [2.0, 0.0], atol=1e-9)
    assert abs(metric_at_keypoint(sol) - 2.0) < 1e-9


def test_closest_approach_identical_trajectories():
    rng = np.random.default_rng(5)
    traj = random_rest_trajectory(rng)
    sol = closest_approach(traj, traj)
    assert sol.f_value < 1e-12
    assert metric_at_keypoint(sol) == 0.0


def test_closest_approach_stationary_points():
    ta = static_obstacle_trajectory([0.0, 0.0], 2.0)
    tb = static_obstacle_trajectory([3.0, 4.0], 2.0)
    sol = closest_approach(ta, tb, (0.0, 2.0))
    assert abs(sol.f_value - 25.0) < 1e-12
    assert sol.f_tt == 0.0  # flat squared distance, degenerate branch
    (dc, dT), _ = keypoint_sensitivities(sol, ta, tb)
    assert not np.any(dc) and not np.any(dT)


def test_closest_approach_never_worse_than_coarse(crossing_pair):
    rng = np.random.default_rng(6)
    for _ in range(20):
        ta = random_rest_trajectory(rng)
        tb = random_rest_trajectory(rng)
        W = max(ta.total_duration, tb.total_duration)
        sol = closest_approach(ta, tb)
        times = np.linspace(0.0, W, 64)
        coarse = np.sum((ta.sample(times)[:, 0] - tb.sample(times)[:, 0]) ** 2, axis=1)
        assert sol.f_value <= coarse.min() + 1e-12
        if not sol.on_boundary and sol.f_tt > CURVATURE_EPS:
            # interior stationarity
            from topoplan.kernels import pair_f

            _, f_t, _ = pair_f(
                ta.coeffs, ta.durations, tb.coeffs, tb.durations, sol.t_star
            )
            assert abs(f_t) < 1e-6 * max(1.0, sol.f_value)


def test_closest_approach_invalid_window(crossing_pair):
    ta, tb = crossing_pair
    with pytest.raises(ValueError):
        closest_approach(ta, tb, (2.0, 2.0))


# ---------------------------------------------------------------------------
# sensitivities


def test_sensitivities_linear_translation(crossing_pair):
    ta, tb = crossing_pair
    sol = closest_approach(ta, tb, (0.0, 5.0))
    (_, _), (dts_dc_b, _) = keypoint_sensitivities(sol, ta, tb)
    # translate b's constant term along its motion axis and re-solve
    delta = 1e-5
    cb = tb.coeffs.copy()
    cb[0, 0] += delta * np.array([-1.0, 0.0])
    sol2 = closest_approach(ta, Trajectory(cb, tb.durations), (0.0, 5.0))
    measured = (sol2.t_star - sol.t_star) / delta
    analytic = float(dts_dc_b[0, 0] @ np.array([-1.0, 0.0]))
    assert abs(measured - analytic) <= 1e-4 * max(1.0, abs(measured))


def test_sensitivities_zero_after_active_piece():
    rng = np.random.default_rng(8)
    for _ in range(10):
        ta = random_rest_trajectory(rng, pieces=4)
        tb = random_rest_trajectory(rng, pieces=4)
        sol = closest_approach(ta, tb)
        if sol.on_boundary or sol.f_tt <= 1e-4:
            continue
        (dc_a, dT_a), _ = keypoint_sensitivities(sol, ta, tb)
        if sol.t_star >= ta.total_duration:
            assert not np.any(dc_a) and not np.any(dT_a)
            continue
        from topoplan.trajectory import locate_piece

        k, _ = locate_piece(ta, sol.t_star)
        assert not np.any(dc_a[k + 1 :])
        assert not np.any(dT_a[k:])


def test_sensitivities_boundary_zero():
    # both vehicles still accelerating apart: minimum sits at t = 0
    ta = minco_solve(
        BoundaryState.at_rest([0.0, 0.0]), BoundaryState.at_rest([5.0, 0.0]),
        np.zeros((0, 2)), [2.0],
    )
    tb = minco_solve(
        BoundaryState.at_rest([-1.0, 0.0]), BoundaryState.at_rest([-6.0, 0.0]),
        np.zeros((0, 2)), [2.0],
    )
    sol = closest_approach(ta, tb, (0.0, 2.0))
    assert sol.on_boundary
    (dc_a, dT_a), (dc_b, dT_b) = keypoint_sensitivities(sol, ta, tb)
    for arr in (dc_a, dT_a, dc_b, dT_b):
        assert not np.any(arr)


# ---------------------------------------------------------------------------
# winding oracle


def _circle_loop(reverse=False):
    n = 16
    angles = 2 * np.pi * np.arange(1, n) / n
    if reverse:
        angles = angles[::-1]
    waypoints = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return minco_solve(
        BoundaryState.at_rest([1.0, 0.0]), BoundaryState.at_rest([1.0, 0.0]),
        waypoints, np.full(n, 0.5),
    )


def test_winding_full_circle_and_reversal():
    center = static_obstacle_trajectory([0.0, 0.0], 8.0)
    ccw = _circle_loop()
    rec = winding_angle_oracle(ccw, center, (0.0, ccw.total_duration), 1024)
    assert abs(rec.total_angle - 2 * np.pi) < 1e-3
    cw = _circle_loop(reverse=True)
    rec2 = winding_angle_oracle(cw, center, (0.0, cw.total_duration), 1024)
    assert abs(rec2.total_angle + 2 * np.pi) < 1e-3


def test_winding_straight_line_below_pi():
    ta = linear_traj([-5.0, 1.0], [1.0, 0.0], 10.0)
    tb = static_obstacle_trajectory([0.0, 0.0], 10.0)
    rec = winding_angle_oracle(ta, tb, (0.0, 10.0), 512)
    assert abs(rec.total_angle) < np.pi


def test_winding_rejects_degenerate_geometry():
    ta = linear_traj([-5.0, 0.0], [1.0, 0.0], 10.0)
    tb = static_obstacle_trajectory([0.0, 0.0], 10.0)
    with pytest.raises(ValueError):
        winding_angle_oracle(ta, tb, (0.0, 10.0), 11)  # sample lands on 0
    with pytest.raises(ValueError):
        winding_angle_oracle(ta, tb, (0.0, 10.0), 1)


# ---------------------------------------------------------------------------
# classification


def test_classify_crossing_pair(crossing_pair):
    ta, tb = crossing_pair
    # M = +2 at the key point: counterclockwise relative motion
    assert classify_interaction(ta, tb, (0.0, 5.0)) == -1
    # mirroring across the line of motion flips the label
    cb = tb.coeffs.copy()
    cb[:, :, 1] *= -1.0
    assert classify_interaction(ta, Trajectory(cb, tb.durations), (0.0, 5.0)) == +1


def test_classify_far_parallel_pair():
    ta = linear_traj([0.0, 0.0], [1.0, 0.0], 5.0)
    tb = linear_traj([0.0, 4.0], [1.0, 0.0], 5.0)
    assert classify_interaction(ta, tb, (0.0, 5.0)) == 0


def test_metric_continuity_across_side_change(crossing_pair):
    """Sliding b across a's path produces a continuous M(s) with a sign
    change, unlike the winding angle which jumps by 2 pi."""
    ta, tb = crossing_pair
    shifts = np.linspace(-2.0, 2.0, 81)
    values = []
    for s in shifts:
        cb = tb.coeffs.copy()
        cb[0, 0, 1] += s
        sol = closest_approach(ta, Trajectory(cb, tb.durations), (0.0, 5.0))
        values.append(metric_at_keypoint(sol))
    values = np.array(values)
    assert np.abs(np.diff(values)).max() < 0.5  # no jumps on this grid
    assert values.min() < 0 < values.max()
