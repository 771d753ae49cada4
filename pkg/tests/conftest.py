"""Shared fixtures and trajectory-building helpers for the test suite."""

from pathlib import Path

import numpy as np
import pytest

from topoplan import BoundaryState, minco_solve

REPO_ROOT = Path(__file__).resolve().parents[1]
SCENARIO_DIR = REPO_ROOT / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR


def random_rest_trajectory(rng, pieces=3, box=10.0, wiggle=0.8):
    """Rest-to-rest trajectory with jittered waypoints inside a box."""
    start = rng.uniform(0.0, box, 2)
    goal = rng.uniform(0.0, box, 2)
    while np.linalg.norm(goal - start) < 2.0:
        goal = rng.uniform(0.0, box, 2)
    fractions = np.linspace(0.0, 1.0, pieces + 1)[1:-1, None]
    waypoints = start + fractions * (goal - start)
    waypoints = waypoints + rng.normal(0.0, wiggle, waypoints.shape)
    durations = rng.uniform(0.8, 2.0, pieces)
    return minco_solve(
        BoundaryState.at_rest(start), BoundaryState.at_rest(goal),
        waypoints, durations,
    )


def unit_minjerk():
    """Single-piece rest-to-rest segment (0,0) -> (1,0) over one second."""
    return minco_solve(
        BoundaryState.at_rest([0.0, 0.0]),
        BoundaryState.at_rest([1.0, 0.0]),
        np.zeros((0, 2)),
        [1.0],
    )
