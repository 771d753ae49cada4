"""Piecewise quintic trajectories parameterized by waypoints and durations.

A trajectory is a chain of degree-5 polynomial pieces in 2D.  Given boundary
states, interior waypoints and per-piece durations, the unique minimum-jerk
interpolant is obtained from a sparse linear system; gradients of any
downstream cost with respect to waypoints and durations are recovered by the
adjoint of that linear map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .basis import basis_rows, basis_rows_span, eval_basis
from .kernels import batch_eval, locate

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
# rescaled to [0, 1]
GL16_NODES = 0.5 * (_GL_NODES + 1.0)
GL16_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class BoundaryState:
    """Position/velocity/acceleration triple pinning one end of a trajectory."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    @staticmethod
    def at_rest(position) -> "BoundaryState":
        return BoundaryState(
            np.asarray(position, dtype=float), np.zeros(2), np.zeros(2)
        )


@dataclass(frozen=True)
class FlatState:
    """Position and its first three derivatives at a single time."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    jerk: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Immutable piecewise quintic: coeffs (M, 6, 2) and durations (M,).

    Row i of a coefficient matrix multiplies t^i; columns are x, y.
    Defined for every t >= 0: past the total duration the trajectory holds
    the final position with zero derivatives.
    """

    coeffs: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.coeffs, dtype=float)
        d = np.ascontiguousarray(self.durations, dtype=float)
        if c.ndim != 3 or c.shape[1:] != (6, 2):
            raise ValueError(f"coeffs must be (M, 6, 2), got {c.shape}")
        if d.shape != (c.shape[0],):
            raise ValueError("durations must match the number of pieces")
        if np.any(d <= 0):
            raise ValueError("piece durations must be strictly positive")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "durations", d)
        c.setflags(write=False)
        d.setflags(write=False)

    @property
    def num_pieces(self) -> int:
        return self.coeffs.shape[0]

    @property
    def total_duration(self) -> float:
        return float(self.durations.sum())

    def sample(self, times) -> np.ndarray:
        """States at many times, shape (K, 4, 2): pos, vel, acc, jerk."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(times < 0):
            raise ValueError("trajectory is not defined for negative time")
        return batch_eval(self.coeffs, self.durations, times)


def locate_piece(traj: Trajectory, t: float) -> tuple[int, float]:
    """Piece index (0-based) and in-piece time for t.

    Interior joints belong to the later piece; t past the total duration
    clamps to the end of the last piece.
    """
    if t < 0:
        raise ValueError("trajectory is not defined for negative time")
    k, tbar = locate(traj.durations, np.array([t], dtype=float))
    return int(k[0]), float(tbar[0])


def eval(traj: Trajectory, t: float) -> FlatState:  # noqa: A001
    """Flat state at time t (hold-at-goal past the total duration)."""
    s = traj.sample([t])[0]
    return FlatState(s[0].copy(), s[1].copy(), s[2].copy(), s[3].copy())


_ZERO_ROWS = np.stack([eval_basis(0.0, d) for d in range(5)])  # (5, 6)


def _system_matrix(durations: np.ndarray) -> np.ndarray:
    """6M x 6M constraint matrix mapping stacked coefficients to the
    boundary / waypoint / continuity right-hand side."""
    M = len(durations)
    n = 6 * M
    A = np.zeros((n, n))
    end_rows = basis_rows_span(durations, range(5))  # (5, M, 6)
    A[0:3, 0:6] = _ZERO_ROWS[:3]
    A[n - 3 :, n - 6 :] = end_rows[:3, M - 1]
    if M > 1:
        r0 = 3 + 6 * np.arange(M - 1)  # base row per interior joint
        cols = (6 * np.arange(M - 1))[:, None] + np.arange(6)
        A[r0[:, None], cols] = end_rows[0, : M - 1]
        for d in range(1, 5):
            A[(r0 + d)[:, None], cols] = end_rows[d, : M - 1]
            A[(r0 + d)[:, None], cols + 6] = -_ZERO_ROWS[d]
        A[(r0 + 5)[:, None], cols + 6] = _ZERO_ROWS[0]
    return A


def minco_solve(
    start: BoundaryState,
    goal: BoundaryState,
    waypoints,
    durations,
) -> Trajectory:
    """Minimum-jerk piecewise quintic through the given interior waypoints.

    The construction pins start/goal position, velocity and acceleration,
    forces interior joint positions onto the waypoints, and enforces
    continuity of derivatives 1..4 at every joint; that system has a unique
    solution which minimizes the integral of squared jerk.
    """
    durations = np.asarray(durations, dtype=float)
    waypoints = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    M = len(durations)
    if M < 1:
        raise ValueError("need at least one piece")
    if np.any(durations <= 0):
        raise ValueError("piece durations must be strictly positive")
    if len(waypoints) != M - 1:
        raise ValueError(f"expected {M - 1} waypoints, got {len(waypoints)}")

    A = _system_matrix(durations)
    b = np.zeros((6 * M, 2))
    b[0] = start.position
    b[1] = start.velocity
    b[2] = start.acceleration
    for j in range(M - 1):
        r = 3 + 6 * j
        b[r] = waypoints[j]
        b[r + 5] = waypoints[j]
    b[-3] = goal.position
    b[-2] = goal.velocity
    b[-1] = goal.acceleration

    lu = lu_factor(A)
    c = lu_solve(lu, b)
    traj = Trajectory(c.reshape(M, 6, 2), durations)
    # the adjoint pass needs the same factorization; keep it around
    object.__setattr__(traj, "_lu", lu)
    return traj


def minco_backprop(
    traj: Trajectory,
    dJ_dc: np.ndarray,
    dJ_dT_direct: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Pull gradients in coefficient space back to waypoint/duration space.

    dJ_dc is (M, 6, 2) and dJ_dT_direct (M,) holds the explicit dependence
    of the cost on the durations at fixed coefficients.  Returns
    (dJ_dq (M-1, 2), dJ_dT (M,)).
    """
    M = traj.num_pieces
    dJ_dc = np.asarray(dJ_dc, dtype=float)
    dJ_dT_direct = np.asarray(dJ_dT_direct, dtype=float)
    if dJ_dc.shape != (M, 6, 2) or dJ_dT_direct.shape != (M,):
        raise ValueError("gradient shapes do not match the trajectory")

    lu = getattr(traj, "_lu", None)
    if lu is None:
        lu = lu_factor(_system_matrix(traj.durations))
    g = dJ_dc.reshape(6 * M, 2)
    lam = lu_solve(lu, g, trans=1)  # A^T lam = dJ/dc

    r = 3 + 6 * np.arange(M - 1)
    dJ_dq = lam[r] + lam[r + 5]

    dJ_dT = dJ_dT_direct.copy()
    c = traj.coeffs
    # end-of-piece derivative values of orders 1..5, shape (5, M, 2)
    ders = np.einsum(
        "dmi,mix->dmx", basis_rows_span(traj.durations, range(1, 6)), c
    )
    for d in range(5):
        rows = 3 + 6 * np.arange(M - 1) + d
        dJ_dT[:-1] -= np.sum(lam[rows] * ders[d, :-1], axis=1)
        if d < 3:
            dJ_dT[-1] -= float(lam[6 * M - 3 + d] @ ders[d, -1])
    return dJ_dq, dJ_dT


def arc_length(traj: Trajectory) -> float:
    """Path length from fixed 16-node Gauss-Legendre quadrature per piece."""
    total = 0.0
    offset = 0.0
    for i in range(traj.num_pieces):
        T = traj.durations[i]
        times = offset + GL16_NODES * T
        states = traj.sample(times)
        speed = np.linalg.norm(states[:, 1], axis=1)
        total += float(T * (GL16_WEIGHTS @ speed))
        offset += T
    return total
