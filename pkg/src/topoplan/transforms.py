"""Unconstrained reparameterization of piece durations.

Durations must stay strictly positive under quasi-Newton steps, so the
solver works on tau in R and maps it through a shifted softplus:

    T(tau) = T_MIN + log(1 + exp(tau))

which is a smooth strictly increasing bijection R -> (T_MIN, inf).
"""

from __future__ import annotations

import numpy as np

T_MIN = 0.01


def duration_transform(tau: np.ndarray) -> np.ndarray:
    """tau -> T, elementwise shifted softplus."""
    tau = np.asarray(tau, dtype=float)
    # log1p(exp(tau)) stable on both tails
    return T_MIN + np.logaddexp(0.0, tau)


def duration_transform_inverse(T: np.ndarray) -> np.ndarray:
    """T -> tau; requires T > T_MIN."""
    T = np.asarray(T, dtype=float)
    if np.any(T < T_MIN):
        raise ValueError(f"durations must be at least {T_MIN}")
    # inverse softplus: log(exp(x) - 1), stable form; the floor keeps the
    # result finite when x underflows (sigmoid(tau) is ~0 there anyway)
    x = np.maximum(T - T_MIN, 1e-300)
    return x + np.log(-np.expm1(-x))


def duration_transform_grad(tau: np.ndarray, dJ_dT: np.ndarray) -> np.ndarray:
    """Chain rule dJ/dtau = dJ/dT * sigmoid(tau)."""
    tau = np.asarray(tau, dtype=float)
    sig = 1.0 / (1.0 + np.exp(-np.clip(tau, -700.0, 700.0)))
    return np.asarray(dJ_dT, dtype=float) * sig
