"""Joint objective: control effort, time, kinodynamic, collision and
topology penalty terms with exact analytic gradients.

Gradients are first assembled in coefficient/duration space per vehicle,
then pulled back to waypoint/duration space through the trajectory
construction's adjoint, and finally chained through the unconstrained
duration reparameterization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import basis_rows, basis_rows_span, eval_basis
from .topology import (
    B,
    CURVATURE_EPS,
    closest_approach,
    keypoint_sensitivities,
    metric_at_keypoint,
    static_obstacle_trajectory,
)
from .trajectory import (
    GL16_NODES,
    GL16_WEIGHTS,
    Trajectory,
    minco_backprop,
)
from .transforms import duration_transform_grad, duration_transform_inverse

#: Collision sampling density: samples per second of joint window, floor 64.
#: The cap only binds for absurd windows probed by the line search.
COLLISION_SAMPLES_PER_SEC = 32
COLLISION_MIN_SAMPLES = 64
COLLISION_MAX_SAMPLES = 8192

#: The optimizer balances the collision hinge against effort and time, so
#: trajectories settle slightly inside the activation distance.  Penalizing
#: at a buffered distance keeps the settled separation above the required
#: one instead of a few percent below it.
COLLISION_BUFFER = 1.05


@dataclass(frozen=True)
class Weights:
    """Penalty weights, limits and safety margins of the joint objective.

    w_time and the stage-dependent w_topo come from the reference setup;
    w_kin, w_col and d_safe are engineering defaults (the disk
    over-approximation of a 0.85 x 0.65 m footprint gives ~0.535 m radius,
    two of those plus clearance -> 1.2 m).
    """

    w_time: float = 100.0
    w_topo: float = 500.0
    w_kin: float = 1.0e3
    w_col: float = 1.0e4
    d_safe: float = 1.2
    v_max: float = 3.0
    a_max: float = 2.0
    cubic_topology_hinge: bool = False

    def __post_init__(self):
        if min(self.w_time, self.w_topo, self.w_kin, self.w_col) < 0:
            raise ValueError("weights must be non-negative")
        if self.d_safe <= 0:
            raise ValueError("d_safe must be positive")


@dataclass(frozen=True)
class StageMask:
    """Which penalty families participate in the current stage."""

    include_collision: bool = True
    include_topology: bool = True

    def __post_init__(self):
        if not (self.include_collision or self.include_topology):
            raise ValueError("at least one penalty family must be active")


@dataclass
class CostBreakdown:
    effort: float = 0.0
    time: float = 0.0
    kinodynamic: float = 0.0
    collision: float = 0.0
    topology: float = 0.0

    @property
    def total(self) -> float:
        return self.effort + self.time + self.kinodynamic + self.collision + self.topology


class _Grads:
    """Per-vehicle gradient accumulator in (coefficients, durations) space."""

    def __init__(self, trajs):
        self.dc = [np.zeros_like(t.coeffs) for t in trajs]
        self.dT = [np.zeros(t.num_pieces) for t in trajs]


# ---------------------------------------------------------------------------
# per-vehicle terms


def effort_cost(traj: Trajectory):
    """Integral of squared jerk with analytic coefficient/duration grads.

    Per piece the integrand is a quartic polynomial of t, so the integral
    is a quadratic form c^T Q(T) c over the top three coefficient rows.
    """
    M = traj.num_pieces
    T = traj.durations  # (M,)
    fac = np.array([6.0, 24.0, 60.0])
    p = np.arange(3)[:, None] + np.arange(3)[None, :] + 1  # (3, 3)
    Q = np.zeros((M, 6, 6))
    Q[:, 3:, 3:] = (fac[:, None] * fac[None, :] / p) * T[:, None, None] ** p
    c = traj.coeffs  # (M, 6, 2)
    Qc = np.einsum("mrs,msd->mrd", Q, c)
    value = float(np.sum(c * Qc))
    dc = 2.0 * Qc
    jerk_end = np.einsum("mi,mid->md", basis_rows(T, 3), c)  # (M, 2)
    dT = np.sum(jerk_end * jerk_end, axis=1)
    return value, dc, dT


def time_cost(durations, w_time: float):
    durations = np.asarray(durations, dtype=float)
    return w_time * float(durations.sum()), np.full(len(durations), w_time)


def kinodynamic_penalty(traj: Trajectory, v_max: float, a_max: float):
    """Cubic hinge on squared speed/acceleration excess over quadrature
    nodes, weighted by node weight times piece duration."""
    from .kernels import kin_core

    value, dc, dT = kin_core(
        traj.coeffs, traj.durations, v_max, a_max, GL16_NODES, GL16_WEIGHTS
    )
    return float(value), dc, dT


# ---------------------------------------------------------------------------
# pairwise terms


def collision_penalty(
    traj_a: Trajectory, traj_b: Trajectory, d_safe: float, static_b: bool = False
):
    """Cubic hinge on squared-distance shortfall over uniform samples of
    the joint window.

    Samples past a trajectory's own end are held at the fixed goal and
    contribute no gradient.  The window scale is set by the longer
    trajectory: its durations move every sample time (t = fraction * W)
    and every trapezoid weight linearly in W, which adds a uniform
    duration-gradient channel on that side.  Returns
    (value, (dc_a, dT_a), (dc_b, dT_b)); the b-side gradients are zeros
    when static_b (the second agent is a parked obstacle).
    """
    from .kernels import collision_core

    Sa = traj_a.total_duration
    Sb = 0.0 if static_b else traj_b.total_duration
    W = max(Sa, Sb)
    n = min(
        COLLISION_MAX_SAMPLES,
        max(COLLISION_MIN_SAMPLES, int(np.ceil(COLLISION_SAMPLES_PER_SEC * W))),
    )
    value, dc_a, dT_a, dc_b, dT_b, dcost_dW = collision_core(
        traj_a.coeffs, traj_a.durations, traj_b.coeffs, traj_b.durations,
        d_safe, n, W, static_b,
    )
    if static_b or Sa >= Sb:
        dT_a += dcost_dW
    else:
        dT_b += dcost_dW
    return value, (dc_a, dT_a), (dc_b, dT_b)


def topology_penalty(
    sol,
    sens,
    eta: int,
    traj_a: Trajectory,
    traj_b: Trajectory,
    cubic: bool = False,
    static_b: bool = False,
    margin: float = 0.0,
):
    """Hinge penalty on the orientation metric at the key point.

    sens is the pair of (dt*/dc, dt*/dT) tuples from
    keypoint_sensitivities.  A positive margin shifts the hinge so the
    penalty stays active until eta*M clears -margin, which keeps the
    constraint strictly inside its feasible side and supplies a nonzero
    gradient in exactly symmetric scenes where M starts at 0.
    Returns (value, (dc_a, dT_a), (dc_b, dT_b)).
    """
    dc_a = np.zeros_like(traj_a.coeffs)
    dT_a = np.zeros(traj_a.num_pieces)
    dc_b = np.zeros_like(traj_b.coeffs)
    dT_b = np.zeros(traj_b.num_pieces)
    zero = (0.0, (dc_a, dT_a), (dc_b, dT_b))
    if eta == 0:
        return zero
    m = metric_at_keypoint(sol)
    hm = eta * m + margin
    if hm <= 0.0:
        return zero
    if cubic:
        value = hm**3
        dG_dM = 3.0 * hm**2 * eta
    else:
        value = hm
        dG_dM = float(eta)

    rel_p = sol.rel_p
    rel_v = sol.rel_v
    rel_a = sol.state_a[2] - sol.state_b[2]
    dM_dp = B.T @ rel_v
    dM_dv = B @ rel_p
    dM_dts = float(rel_a @ B @ rel_p)  # the rel_v^T B rel_v term is identically 0

    (dts_dc_a, dts_dT_a), (dts_dc_b, dts_dT_b) = sens

    def one_side(traj, state, dts_dc, dts_dT, sign, dc, dT):
        # sign: +1 for the ego side, -1 for the partner (dM/dp_hat = -dM/dp)
        t_star = sol.t_star
        if t_star < traj.total_duration:
            from .trajectory import locate_piece

            k, tbar = locate_piece(traj, t_star)
            beta = eval_basis(tbar, 0)
            dbeta = eval_basis(tbar, 1)
            gp = sign * dG_dM * dM_dp
            gv = sign * dG_dM * dM_dv
            dc[k] += np.outer(beta, gp) + np.outer(dbeta, gv)
            vel, acc = state[1], state[2]
            dT[:k] += -(float(gp @ vel) + float(gv @ acc))
        dc += dG_dM * dM_dts * dts_dc
        dT += dG_dM * dM_dts * dts_dT

    one_side(traj_a, sol.state_a, dts_dc_a, dts_dT_a, +1.0, dc_a, dT_a)
    if not static_b:
        one_side(traj_b, sol.state_b, dts_dc_b, dts_dT_b, -1.0, dc_b, dT_b)
    return value, (dc_a, dT_a), (dc_b, dT_b)


# ---------------------------------------------------------------------------
# joint objective


def pair_window(traj_a: Trajectory, traj_b: Trajectory) -> tuple[float, float]:
    return (0.0, max(traj_a.total_duration, traj_b.total_duration))


def total_objective(scenario, trajectories, stage: StageMask, weights: Weights,
                    topo_margin: float = 0.0):
    """Objective of the joint problem and its gradient over every vehicle's
    (waypoints, duration parameters).

    trajectories is a list aligned with scenario.vehicles.  Pairs are
    visited in a fixed lexicographic order so repeated evaluations are
    bit-identical.  Returns (CostBreakdown, stacked gradient).
    """
    vehicles = scenario.vehicles
    if len(trajectories) != len(vehicles):
        raise ValueError("one trajectory per vehicle required")
    N = len(vehicles)
    br = CostBreakdown()
    grads = _Grads(trajectories)

    for i, traj in enumerate(trajectories):
        e, dce, dTe = effort_cost(traj)
        t, dTt = time_cost(traj.durations, weights.w_time)
        kin, dck, dTk = kinodynamic_penalty(traj, weights.v_max, weights.a_max)
        br.effort += e
        br.time += t
        br.kinodynamic += weights.w_kin * kin
        grads.dc[i] += dce + weights.w_kin * dck
        grads.dT[i] += dTe + dTt + weights.w_kin * dTk

    order = sorted(range(N), key=lambda i: str(vehicles[i].id))
    for ai in range(N):
        for bi in range(ai + 1, N):
            i, j = order[ai], order[bi]
            ta, tb = trajectories[i], trajectories[j]
            if stage.include_collision:
                v, (dca, dTa), (dcb, dTb) = collision_penalty(
                    ta, tb, COLLISION_BUFFER * weights.d_safe
                )
                br.collision += weights.w_col * v
                grads.dc[i] += weights.w_col * dca
                grads.dT[i] += weights.w_col * dTa
                grads.dc[j] += weights.w_col * dcb
                grads.dT[j] += weights.w_col * dTb
            eta = scenario.pattern.get(vehicles[i].id, vehicles[j].id)
            if stage.include_topology and eta != 0:
                sol = closest_approach(ta, tb, pair_window(ta, tb))
                sens = keypoint_sensitivities(sol, ta, tb)
                v, (dca, dTa), (dcb, dTb) = topology_penalty(
                    sol, sens, eta, ta, tb,
                    cubic=weights.cubic_topology_hinge, margin=topo_margin,
                )
                br.topology += weights.w_topo * v
                grads.dc[i] += weights.w_topo * dca
                grads.dT[i] += weights.w_topo * dTa
                grads.dc[j] += weights.w_topo * dcb
                grads.dT[j] += weights.w_topo * dTb

    for i in order:
        ta = trajectories[i]
        for obs in scenario.obstacles:
            to = static_obstacle_trajectory(obs.center, ta.total_duration)
            d_req = vehicles[i].radius + obs.radius
            if stage.include_collision:
                v, (dca, dTa), _ = collision_penalty(
                    ta, to, COLLISION_BUFFER * d_req, static_b=True
                )
                br.collision += weights.w_col * v
                grads.dc[i] += weights.w_col * dca
                grads.dT[i] += weights.w_col * dTa
            eta = scenario.pattern.get(vehicles[i].id, obs.id)
            if stage.include_topology and eta != 0:
                sol = closest_approach(ta, to, (0.0, ta.total_duration))
                sens = keypoint_sensitivities(sol, ta, to)
                v, (dca, dTa), _ = topology_penalty(
                    sol, sens, eta, ta, to,
                    cubic=weights.cubic_topology_hinge, static_b=True,
                    margin=topo_margin,
                )
                br.topology += weights.w_topo * v
                grads.dc[i] += weights.w_topo * dca
                grads.dT[i] += weights.w_topo * dTa

    # pull back to (waypoints, tau) per vehicle and stack
    pieces = []
    for i, traj in enumerate(trajectories):
        dq, dT = minco_backprop(traj, grads.dc[i], grads.dT[i])
        tau = duration_transform_inverse(traj.durations)
        dtau = duration_transform_grad(tau, dT)
        pieces.append(np.concatenate([dq.ravel(), dtau]))
    return br, np.concatenate(pieces)
