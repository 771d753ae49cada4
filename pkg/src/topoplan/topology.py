"""Differentiable orientation metric for pairwise trajectory interactions.

The metric evaluates the signed areal velocity of the relative position
vector at the instant of closest approach between two trajectories.  Its
sign distinguishes counterclockwise (positive) from clockwise (negative)
relative motion, and its magnitude measures how far the pair is from
swapping sides.  Because closest approach is itself an argmin, gradients
through its timestamp come from the implicit function theorem on the inner
stationarity condition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import eval_basis
from .trajectory import Trajectory, locate_piece

#: Quarter-turn rotation; v^T B p equals the planar cross product p x v.
B = np.array([[0.0, -1.0], [1.0, 0.0]])

#: Curvature floor below which the inner argmin is treated as degenerate.
CURVATURE_EPS = 1e-8

#: Default classification threshold on |M| (m^2/s).
CLASSIFY_EPS = 1e-3


def homotopy_metric(rel_p, rel_v) -> float:
    """Signed areal velocity of the relative position vector.

    Positive when the ego point moves counterclockwise around the other
    agent, negative when clockwise, zero for purely radial motion.
    """
    rel_p = np.asarray(rel_p, dtype=float)
    rel_v = np.asarray(rel_v, dtype=float)
    return float(rel_v @ B @ rel_p)


class InteractionPattern:
    """Symmetric map from unordered agent pairs to labels in {-1, 0, +1}.

    +1 requests clockwise relative motion, -1 counterclockwise, 0 leaves
    the pair unconstrained.  Missing pairs read as 0.
    """

    def __init__(self, labels=None):
        self._labels: dict[frozenset, int] = {}
        if labels:
            for (a, b), eta in labels.items():
                self.set(a, b, eta)

    def set(self, a, b, eta: int) -> None:
        if a == b:
            raise ValueError("self-pairs are not allowed in a pattern")
        if eta not in (-1, 0, 1):
            raise ValueError(f"interaction label must be -1, 0 or +1, got {eta}")
        key = frozenset((a, b))
        if key in self._labels and self._labels[key] != eta:
            raise ValueError(f"conflicting labels for pair {a!r}, {b!r}")
        self._labels[key] = eta

    def get(self, a, b) -> int:
        return self._labels.get(frozenset((a, b)), 0)

    def items(self):
        for key, eta in sorted(self._labels.items(), key=lambda kv: sorted(map(str, kv[0]))):
            a, b = sorted(key, key=str)
            yield (a, b), eta

    def __eq__(self, other):
        return isinstance(other, InteractionPattern) and self._labels == other._labels


@dataclass(frozen=True)
class KeyPointSolution:
    """Closest-approach instant between two trajectories.

    f is the squared distance between the agents as a function of shared
    time; f_tt is its second time derivative at the minimizer (zero in the
    degenerate branch where the distance is flat).
    """

    t_star: float
    state_a: np.ndarray  # (4, 2): pos, vel, acc, jerk
    state_b: np.ndarray
    f_value: float
    f_tt: float
    on_boundary: bool

    @property
    def rel_p(self) -> np.ndarray:
        return self.state_a[0] - self.state_b[0]

    @property
    def rel_v(self) -> np.ndarray:
        return self.state_a[1] - self.state_b[1]


def _f_derivs(traj_a: Trajectory, traj_b: Trajectory, t: float):
    """(f, f_t, f_tt) of the squared inter-agent distance at time t."""
    from .kernels import pair_f

    return pair_f(traj_a.coeffs, traj_a.durations, traj_b.coeffs, traj_b.durations, t)


def closest_approach(
    traj_a: Trajectory,
    traj_b: Trajectory,
    window: tuple[float, float] | None = None,
    num_samples: int = 64,
    max_newton: int = 20,
) -> KeyPointSolution:
    """Find a local minimizer of the squared inter-agent distance.

    Coarse uniform sampling of the window picks the basin (global minimum
    over samples, earlier time on ties), then damped Newton iterations on
    the stationarity condition refine it.  The result never exceeds the
    best coarse sample's value.
    """
    if window is None:
        window = (0.0, max(traj_a.total_duration, traj_b.total_duration))
    t_lo, t_hi = float(window[0]), float(window[1])
    if not t_lo < t_hi:
        raise ValueError(f"invalid window [{t_lo}, {t_hi}]")

    times = np.linspace(t_lo, t_hi, num_samples)
    pa = traj_a.sample(times)[:, 0]
    pb = traj_b.sample(times)[:, 0]
    f_samples = np.sum((pa - pb) ** 2, axis=1)
    best = int(np.argmin(f_samples))  # argmin returns the first minimum

    from .kernels import refine_min

    span = t_hi - t_lo
    t, f, f_t, f_tt = refine_min(
        traj_a.coeffs, traj_a.durations, traj_b.coeffs, traj_b.durations,
        float(times[best]), t_lo, t_hi, max_newton, CURVATURE_EPS,
    )

    sa = traj_a.sample([t])[0]
    sb = traj_b.sample([t])[0]
    edge_tol = 1e-9 * max(1.0, span)
    on_boundary = (t - t_lo) <= edge_tol or (t_hi - t) <= edge_tol
    if not on_boundary and f_tt <= CURVATURE_EPS and abs(f_t) > 1e-6 * max(1.0, f):
        # failed to reach stationarity in a flat region: treat as degenerate
        on_boundary = True
    return KeyPointSolution(
        t_star=t,
        state_a=sa,
        state_b=sb,
        f_value=f,
        f_tt=f_tt,
        on_boundary=on_boundary,
    )


def metric_at_keypoint(sol: KeyPointSolution) -> float:
    """Orientation metric evaluated from the key-point states."""
    return homotopy_metric(sol.rel_p, sol.rel_v)


def _dtstar_one_side(
    traj: Trajectory,
    own_state: np.ndarray,
    other_state: np.ndarray,
    t_star: float,
    f_tt: float,
):
    """(dt*/dc (M,6,2), dt*/dT (M,)) for one trajectory of the pair.

    Mixed partials of the squared distance come from differentiating the
    stationarity condition; entries vanish for pieces after the one that
    contains t*, and everywhere past the trajectory's own end (held goal).
    """
    M = traj.num_pieces
    dts_dc = np.zeros((M, 6, 2))
    dts_dT = np.zeros(M)
    if t_star >= traj.total_duration:
        return dts_dc, dts_dT
    k, tbar = locate_piece(traj, t_star)
    p, v, a = own_state[0], own_state[1], own_state[2]
    p_hat, v_hat = other_state[0], other_state[1]
    beta = eval_basis(tbar, 0)
    dbeta = eval_basis(tbar, 1)
    # f_{c_k t} = -2 beta (v_hat - v)^T - 2 dbeta (p_hat - p)^T
    f_ct = -2.0 * np.outer(beta, v_hat - v) - 2.0 * np.outer(dbeta, p_hat - p)
    dts_dc[k] = -f_ct / f_tt
    # f_{T_i t} = 2((p_hat - p)^T a + (v_hat - v)^T v) for pieces before k
    f_Tt = 2.0 * (float((p_hat - p) @ a) + float((v_hat - v) @ v))
    dts_dT[:k] = -f_Tt / f_tt
    return dts_dc, dts_dT


def keypoint_sensitivities(
    sol: KeyPointSolution, traj_a: Trajectory, traj_b: Trajectory
):
    """Derivatives of the closest-approach time w.r.t. both trajectories'
    coefficients and durations.

    Returns ((dts_dc_a, dts_dT_a), (dts_dc_b, dts_dT_b)).  All zero when
    the solution sits on the window boundary or the curvature is too small
    for the implicit function theorem to apply.
    """
    za = (np.zeros((traj_a.num_pieces, 6, 2)), np.zeros(traj_a.num_pieces))
    zb = (np.zeros((traj_b.num_pieces, 6, 2)), np.zeros(traj_b.num_pieces))
    if sol.on_boundary or sol.f_tt <= CURVATURE_EPS:
        return za, zb
    side_a = _dtstar_one_side(traj_a, sol.state_a, sol.state_b, sol.t_star, sol.f_tt)
    side_b = _dtstar_one_side(traj_b, sol.state_b, sol.state_a, sol.t_star, sol.f_tt)
    return side_a, side_b


@dataclass(frozen=True)
class WindingRecord:
    """Accumulated signed rotation of the relative position vector."""

    total_angle: float


def winding_angle_oracle(
    traj_a: Trajectory,
    traj_b: Trajectory,
    window: tuple[float, float],
    samples: int = 1024,
) -> WindingRecord:
    """Reference winding angle by summing per-step rotation increments.

    Test oracle only: discrete, not differentiated, and requires the
    relative position to stay away from zero at every sample.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    times = np.linspace(window[0], window[1], samples)
    rel = traj_a.sample(times)[:, 0] - traj_b.sample(times)[:, 0]
    norms = np.linalg.norm(rel, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("relative position vanishes at a sample")
    x0, y0 = rel[:-1, 0], rel[:-1, 1]
    x1, y1 = rel[1:, 0], rel[1:, 1]
    increments = np.arctan2(x0 * y1 - y0 * x1, x0 * x1 + y0 * y1)
    return WindingRecord(total_angle=float(np.sum(increments)))


def classify_interaction(
    traj_a: Trajectory,
    traj_b: Trajectory,
    window: tuple[float, float] | None = None,
    threshold: float = CLASSIFY_EPS,
) -> int:
    """Label the pair with the interaction-pattern convention.

    +1 means clockwise relative motion (negative metric), -1 means
    counterclockwise (positive metric), 0 means no significant interaction.
    """
    sol = closest_approach(traj_a, traj_b, window)
    m = metric_at_keypoint(sol)
    if m > threshold:
        return -1
    if m < -threshold:
        return +1
    return 0


def static_obstacle_trajectory(center, duration: float) -> Trajectory:
    """Zero-velocity single-piece 'trajectory' parked at a point, so the
    pairwise machinery applies unchanged to vehicle-obstacle interactions."""
    c = np.zeros((1, 6, 2))
    c[0, 0] = np.asarray(center, dtype=float)
    return Trajectory(c, np.array([max(duration, 1e-3)]))
