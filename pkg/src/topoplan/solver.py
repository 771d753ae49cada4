"""Quasi-Newton solver and the two-stage optimization schedule.

Stage one ignores collision penalties and drives the pairwise orientation
constraints to satisfaction; stage two restores collision avoidance with a
stiffer topology weight and runs to convergence.  Splitting the schedule
avoids the local minimum created when a trajectory must approach the other
agent (raising the collision cost) in order to change sides (lowering the
topology cost).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .costs import StageMask, Weights, total_objective
from .scenario import Scenario, min_pairwise_distance
from .topology import closest_approach, metric_at_keypoint, static_obstacle_trajectory
from .trajectory import Trajectory, minco_solve
from .transforms import (
    T_MIN,
    duration_transform,
    duration_transform_inverse,
)


@dataclass(frozen=True)
class SolverOptions:
    memory: int = 8
    max_iterations: int = 300
    grad_tolerance: float = 1e-5
    rel_cost_tolerance: float = 1e-6
    armijo_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_search: int = 60
    topo_margin: float = 0.05  # stage-1 satisfaction margin on eta*M (m^2/s)
    # hinge activation margin of the topology penalty (m^2/s): the penalty
    # keeps pushing until eta*M clears -hinge_margin, so satisfied pairs sit
    # well inside their side and cannot drift across M = 0 while the other
    # terms straighten the paths
    hinge_margin: float = 0.25
    w_topo_stage1: float = 500.0
    w_topo_stage2: float = 5000.0
    piece_length: float = 1.5  # target meters of path per polynomial piece
    min_pieces: int = 4
    cruise_fraction: float = 0.8  # initial-guess cruise speed as a share of v_max

    def __post_init__(self):
        if self.memory < 3:
            raise ValueError("L-BFGS memory must be at least 3")
        if min(self.grad_tolerance, self.rel_cost_tolerance) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class PairStatus:
    pair: tuple[str, str]
    eta: int
    metric: float
    satisfied: bool


@dataclass
class OptimizationReport:
    stage_iterations: list
    breakdown: object
    pairs: list
    min_distance: float
    wall_clock_ms: float
    converged: bool
    convergence_reason: str
    all_satisfied: bool


# ---------------------------------------------------------------------------
# L-BFGS with weak Wolfe line search


def _weak_wolfe_search(fun, x, f0, g0, d, opts: SolverOptions):
    """Bisection/expansion line search enforcing Armijo + weak curvature."""
    deriv0 = float(g0 @ d)
    if deriv0 >= 0:
        return None
    lo, hi = 0.0, np.inf
    alpha = 1.0
    for _ in range(opts.max_line_search):
        f, g = fun(x + alpha * d)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            hi = alpha
        elif f > f0 + opts.armijo_c1 * alpha * deriv0:
            hi = alpha
        elif float(g @ d) < opts.wolfe_c2 * deriv0:
            lo = alpha
        else:
            return alpha, f, g
        alpha = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * alpha
        if hi - lo < 1e-16 * max(1.0, lo):
            break
    # fall back to the best Armijo point found by plain backtracking
    alpha = 1.0
    for _ in range(opts.max_line_search):
        f, g = fun(x + alpha * d)
        if np.isfinite(f) and np.all(np.isfinite(g)) and f < f0:
            return alpha, f, g
        alpha *= 0.5
    return None


def lbfgs_minimize(fun, x0, opts: SolverOptions = SolverOptions(), callback=None):
    """Minimize fun(x) -> (f, grad) from x0.

    Terminates on the gradient infinity norm, on three consecutive
    iterations of tiny relative cost decrease, on iteration budget, or when
    the callback returns True.  Returns (x, info dict).
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at the initial point")
    s_list, y_list, rho_list = [], [], []
    reason = "max_iterations"
    iterations = 0
    stall = 0
    for it in range(opts.max_iterations):
        if np.max(np.abs(g)) < opts.grad_tolerance:
            reason = "grad_tolerance"
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        if y_list:
            gamma = float(s_list[-1] @ y_list[-1]) / float(y_list[-1] @ y_list[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        d = -q
        res = _weak_wolfe_search(fun, x, f, g, d, opts)
        if res is None:
            # try steepest descent before giving up
            d = -g
            res = _weak_wolfe_search(fun, x, f, g, d, opts)
            if res is None:
                reason = "line_search_failure"
                break
        alpha, f_new, g_new = res
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > opts.memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        rel_drop = (f - f_new) / max(1.0, abs(f))
        x = x + s
        f, g = f_new, g_new
        iterations = it + 1
        if callback is not None and callback(x):
            reason = "callback_stop"
            break
        stall = stall + 1 if rel_drop < opts.rel_cost_tolerance else 0
        if stall >= 3:
            reason = "rel_cost_tolerance"
            break
    return x, {"iterations": iterations, "reason": reason, "final_cost": f,
               "final_grad_norm": float(np.max(np.abs(g)))}


# ---------------------------------------------------------------------------
# decision vector layout


class DecisionLayout:
    """Maps the stacked decision vector to per-vehicle (waypoints, tau)."""

    def __init__(self, scenario: Scenario, pieces: list[int]):
        self.scenario = scenario
        self.pieces = pieces
        self.slices = []
        off = 0
        for m in pieces:
            n = 2 * (m - 1) + m
            self.slices.append(slice(off, off + n))
            off += n
        self.size = off

    def decode(self, x: np.ndarray) -> list[Trajectory]:
        trajs = []
        for v, m, sl in zip(self.scenario.vehicles, self.pieces, self.slices):
            chunk = x[sl]
            q = chunk[: 2 * (m - 1)].reshape(m - 1, 2)
            T = duration_transform(chunk[2 * (m - 1) :])
            trajs.append(minco_solve(v.start, v.goal, q, T))
        return trajs

    def encode(self, waypoints_list, durations_list) -> np.ndarray:
        parts = []
        for q, T in zip(waypoints_list, durations_list):
            parts.append(np.asarray(q, dtype=float).ravel())
            parts.append(duration_transform_inverse(np.asarray(T, dtype=float)))
        return np.concatenate(parts) if parts else np.zeros(0)


def initialize(scenario: Scenario, opts: SolverOptions = SolverOptions()):
    """Deterministic initial guess.

    Waypoints follow the rest-to-rest minimum-jerk position profile along
    the straight start-goal line, with equal piece durations sized so that
    profile's peak speed and acceleration stay at a fraction of the limits
    (peaks of the unit quintic: 15/8 D/T and 10/sqrt(3) D/T^2).  With
    waypoints on that profile the interpolant is the global minimum-jerk
    quintic itself, so the guess starts kinodynamically feasible.
    """
    v_max = scenario.weights.v_max
    a_max = scenario.weights.a_max
    pieces = []
    qs, Ts = [], []
    for v in scenario.vehicles:
        delta = v.goal.position - v.start.position
        dist = float(np.linalg.norm(delta))
        m = max(opts.min_pieces, int(np.ceil(dist / opts.piece_length)))
        pieces.append(m)
        if dist <= 1e-9:
            total = 1.0
        else:
            t_vel = (15.0 / 8.0) * dist / (opts.cruise_fraction * v_max)
            t_acc = np.sqrt(10.0 / np.sqrt(3.0) * dist
                            / (opts.cruise_fraction * a_max))
            total = max(t_vel, t_acc)
        total = max(total, m * 4 * T_MIN)
        tau = np.arange(1, m) / m
        s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
        qs.append(v.start.position + s[:, None] * delta)
        Ts.append(np.full(m, total / m))
    layout = DecisionLayout(scenario, pieces)
    return layout, layout.encode(qs, Ts)


# ---------------------------------------------------------------------------
# pattern evaluation and the two-stage schedule


def evaluate_pattern(scenario: Scenario, trajectories) -> list[PairStatus]:
    """Orientation metric and satisfaction flag for every constrained pair."""
    by_id = {v.id: trajectories[i] for i, v in enumerate(scenario.vehicles)}
    out = []
    for (a, b), eta in scenario.pattern.items():
        if eta == 0:
            continue
        if a in by_id and b in by_id:
            ta, tb = by_id[a], by_id[b]
        else:
            vid, oid = (a, b) if a in by_id else (b, a)
            obs = next(o for o in scenario.obstacles if o.id == oid)
            ta = by_id[vid]
            tb = static_obstacle_trajectory(obs.center, ta.total_duration)
        sol = closest_approach(ta, tb)
        m = metric_at_keypoint(sol)
        out.append(PairStatus((a, b), eta, m, eta * m < 0.0))
    return out


def _pattern_satisfied(scenario, trajectories, margin: float) -> bool:
    return all(
        ps.eta * ps.metric <= -margin
        for ps in evaluate_pattern(scenario, trajectories)
    )


def make_objective(scenario: Scenario, layout: DecisionLayout,
                   stage: StageMask, weights: Weights, topo_margin: float = 0.0):
    def fun(x):
        trajs = layout.decode(x)
        br, grad = total_objective(scenario, trajs, stage, weights, topo_margin)
        return br.total, grad
    return fun


def two_stage_optimize(
    scenario: Scenario,
    opts: SolverOptions = SolverOptions(),
    x0: np.ndarray | None = None,
    layout: DecisionLayout | None = None,
):
    """Run the full schedule and report the outcome.

    Returns (trajectories, OptimizationReport).  A scenario whose pattern
    requests no interactions skips stage one entirely.
    """
    t_start = time.perf_counter()
    if layout is None:
        layout, x_init = initialize(scenario, opts)
        if x0 is None:
            x0 = x_init
    elif x0 is None:
        raise ValueError("x0 is required when a layout is supplied")

    stage_iters = []
    constrained = any(eta != 0 for _, eta in scenario.pattern.items())
    x = np.asarray(x0, dtype=float).copy()

    if constrained:
        w1 = Weights(**{**_weights_dict(scenario.weights), "w_topo": opts.w_topo_stage1})
        mask1 = StageMask(include_collision=False, include_topology=True)
        fun1 = make_objective(scenario, layout, mask1, w1, opts.hinge_margin)

        def stop_when_satisfied(xk):
            return _pattern_satisfied(scenario, layout.decode(xk), opts.topo_margin)

        if stop_when_satisfied(x):
            stage_iters.append(0)
        else:
            x, info1 = lbfgs_minimize(fun1, x, opts, callback=stop_when_satisfied)
            stage_iters.append(info1["iterations"])
    else:
        stage_iters.append(0)

    w2 = Weights(**{**_weights_dict(scenario.weights), "w_topo": opts.w_topo_stage2})
    mask2 = StageMask(include_collision=True, include_topology=True)
    fun2 = make_objective(scenario, layout, mask2, w2, opts.hinge_margin)
    x, info2 = lbfgs_minimize(fun2, x, opts)
    stage_iters.append(info2["iterations"])

    trajs = layout.decode(x)
    br, _ = total_objective(scenario, trajs, mask2, w2)
    pairs = evaluate_pattern(scenario, trajs)
    all_sat = all(p.satisfied for p in pairs)
    report = OptimizationReport(
        stage_iterations=stage_iters,
        breakdown=br,
        pairs=pairs,
        min_distance=min_pairwise_distance(trajs),
        wall_clock_ms=(time.perf_counter() - t_start) * 1e3,
        converged=info2["reason"] in ("grad_tolerance", "rel_cost_tolerance"),
        convergence_reason=info2["reason"],
        all_satisfied=all_sat,
    )
    return trajs, report


def _weights_dict(w: Weights) -> dict:
    return {
        "w_time": w.w_time, "w_topo": w.w_topo, "w_kin": w.w_kin,
        "w_col": w.w_col, "d_safe": w.d_safe, "v_max": w.v_max,
        "a_max": w.a_max, "cubic_topology_hinge": w.cubic_topology_hinge,
    }


@dataclass(frozen=True)
class FeasibilityAudit:
    max_speed: float
    max_acceleration: float
    min_distance: float
    min_obstacle_clearance: float
    ok: bool


def audit_feasibility(scenario: Scenario, trajectories,
                      samples: int = 1000) -> FeasibilityAudit:
    """Dense resampling check of limits and separations.

    Quadrature penalties allow tiny inter-sample violations, hence the
    documented slack factors: speed 1%, acceleration 5%, distance 1%.
    """
    w = scenario.weights
    horizon = max(t.total_duration for t in trajectories)
    times = np.linspace(0.0, horizon, samples)
    states = [t.sample(times) for t in trajectories]
    max_speed = max(float(np.linalg.norm(s[:, 1], axis=1).max()) for s in states)
    max_acc = max(float(np.linalg.norm(s[:, 2], axis=1).max()) for s in states)
    min_dist = min_pairwise_distance(trajectories, samples)
    min_clear = float("inf")
    for i, s in enumerate(states):
        for obs in scenario.obstacles:
            d = np.linalg.norm(s[:, 0] - obs.center, axis=1)
            clear = float(d.min()) - obs.radius - scenario.vehicles[i].radius
            min_clear = min(min_clear, clear)
    ok = (
        max_speed <= w.v_max * 1.01
        and max_acc <= w.a_max * 1.05
        and min_dist >= w.d_safe * 0.99
        and (not scenario.obstacles or min_clear >= -0.01)
    )
    return FeasibilityAudit(max_speed, max_acc, min_dist, min_clear, ok)
