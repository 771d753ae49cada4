import numpy as np
import pytest

from topoplan.transforms import (
    T_MIN,
    duration_transform,
    duration_transform_grad,
    duration_transform_inverse,
)


def test_round_trip():
    T = np.array([0.05, 0.5, 1.0, 7.3, 100.0])
    back = duration_transform(duration_transform_inverse(T))
    assert np.allclose(back, T, rtol=0, atol=1e-10)


def test_strictly_monotone():
    tau = np.linspace(-20.0, 20.0, 500)
    T = duration_transform(tau)
    assert np.all(np.diff(T) > 0)
    assert np.all(T > T_MIN)


def test_inverse_rejects_below_floor():
    with pytest.raises(ValueError):
        duration_transform_inverse(np.array([T_MIN / 2]))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    tau = rng.uniform(-4.0, 4.0, 20)
    dJ_dT = rng.standard_normal(20)
    h = 1e-6
    fd = dJ_dT * (duration_transform(tau + h) - duration_transform(tau - h)) / (2 * h)
    analytic = duration_transform_grad(tau, dJ_dT)
    assert np.allclose(analytic, fd, rtol=1e-6, atol=1e-9)
