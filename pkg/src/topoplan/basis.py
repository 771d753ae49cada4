"""Monomial basis for degree-5 polynomial pieces and its time derivatives."""

from __future__ import annotations

import numpy as np

_FACT = [1, 1, 2, 6, 24, 120]


def eval_basis(t: float, order: int = 0) -> np.ndarray:
    """Row of the quintic monomial basis [1, t, ..., t^5] differentiated
    ``order`` times with respect to t.

    Valid for order 0..5; entries below the order are zero.
    """
    if not 0 <= order <= 5:
        raise ValueError(f"derivative order must be in 0..5, got {order}")
    row = np.zeros(6)
    for i in range(order, 6):
        row[i] = (_FACT[i] / _FACT[i - order]) * t ** (i - order)
    return row


def basis_rows(t: np.ndarray, order: int) -> np.ndarray:
    """Vectorized eval_basis: (...,) times -> (..., 6) basis rows."""
    if not 0 <= order <= 5:
        raise ValueError(f"derivative order must be in 0..5, got {order}")
    t = np.asarray(t, dtype=float)
    rows = np.zeros(t.shape + (6,))
    power = np.ones_like(t)
    for i in range(order, 6):
        rows[..., i] = (_FACT[i] / _FACT[i - order]) * power
        power = power * t
    return rows


def basis_rows_span(t: np.ndarray, orders) -> np.ndarray:
    """basis_rows for several derivative orders sharing the power table.

    Returns shape (len(orders),) + t.shape + (6,).
    """
    t = np.asarray(t, dtype=float)
    powers = np.ones((6,) + t.shape)
    for i in range(1, 6):
        powers[i] = powers[i - 1] * t
    out = np.zeros((len(orders),) + t.shape + (6,))
    for n, order in enumerate(orders):
        if not 0 <= order <= 5:
            raise ValueError(f"derivative order must be in 0..5, got {order}")
        for i in range(order, 6):
            out[n, ..., i] = (_FACT[i] / _FACT[i - order]) * powers[i - order]
    return out
