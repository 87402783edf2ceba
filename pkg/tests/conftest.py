"""Pytest configuration for tv_wasserstein tests."""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the src directory to Python path so we can import tv_wasserstein
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))


def pytest_configure(config):
    """Configure pytest."""
    # Set test environment variables
    os.environ["LOG_LEVEL"] = "WARNING"  # Reduce noise during tests
    # Solver defaults must not leak in from the developer's shell
    for key in list(os.environ):
        if key.startswith("TVW_"):
            del os.environ[key]
    config.addinivalue_line(
        "markers", "slow: long-running acceptance scenarios (run with -m slow)"
    )


@pytest.fixture
def rng():
    """Seeded generator shared by the randomized tests."""
    return np.random.default_rng(20240611)


@pytest.fixture
def square_config():
    """Square-phantom scheme parameters with the built-in damping schedule."""
    from tv_wasserstein.newton import SolverConfig

    return SolverConfig(
        dt=1.0,
        eps=1e-3,
        tau0=1.0,
        tau_decay=0.5,
        tau_min=1e-8,
        eps_tol=1e-6,
        max_inner=50,
        tol_lin=1e-10,
        h=1.0,
    )
