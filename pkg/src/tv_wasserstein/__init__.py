"""
tv_wasserstein

Solvers for the fourth-order TV-Wasserstein gradient flow

    u_t = div(u grad q),  q in dTV(u),

using a penalty-relaxed primal-dual characterisation of TV subgradients and
an implicit damped-Newton time stepping with Schur-complement elimination,
plus the second-order TV denoiser built on the same machinery.

Quick usage:
    from tv_wasserstein.flow import FlowRun, evolve, normalize_mass
    from tv_wasserstein.imaging import gen_square
    from tv_wasserstein.newton import SolverConfig

    u0 = normalize_mass(gen_square(64))
    result = evolve(FlowRun(SolverConfig(dt=1.0, eps=1e-3), n_steps=20, initial=u0))
    print(result.diagnostics[-1])

Environment:
- Solver defaults come from TVW_* variables (see `tv_wasserstein.config`).
- A local `.env` can be loaded with `load_dotenv_if_present()`.
"""

from __future__ import annotations

import logging
import os
from typing import Optional

__all__ = [
    "__version__",
    "evolve",
    "denoise_tv",
    "setup_logging",
    "load_dotenv_if_present",
    "get_package_info",
]

__version__ = "0.1.0"


def setup_logging(level: Optional[str] = None) -> None:
    """
    Configure basic logging for the package.

    Args:
        level: Optional logging level string ("DEBUG", "INFO", "WARNING", "ERROR").
               If not provided, reads LOG_LEVEL from environment (default: INFO).
    """
    log_level = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    numeric_level = getattr(logging, log_level, None)
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO
    logging.basicConfig(
        level=numeric_level,
        format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
    )


def load_dotenv_if_present(dotenv_path: Optional[str] = None) -> bool:
    """
    Load environment variables from a .env file if python-dotenv is available.
    Returns True if a .env was successfully loaded; False otherwise.

    Call this before importing `tv_wasserstein.config` for the TVW_* values
    to take effect.
    """
    try:
        from dotenv import load_dotenv  # type: ignore
    except Exception:
        return False

    return bool(load_dotenv(dotenv_path))


def get_package_info() -> dict:
    """Return basic package metadata as a dictionary."""
    return {
        "name": "tv_wasserstein",
        "version": __version__,
        "description": "Primal-dual Newton solver for the TV-Wasserstein flow.",
        "license": "MIT",
        "env_vars": [
            "TVW_DT",
            "TVW_EPS",
            "TVW_TAU0",
            "TVW_TAU_DECAY",
            "TVW_TAU_MIN",
            "TVW_EPS_TOL",
            "TVW_MAX_INNER",
            "TVW_TOL_LIN",
            "TVW_LINEAR_METHOD",
            "TVW_H",
            "TVW_POSITIVITY_TOL",
            "TVW_ALPHA",
            "TVW_SEED",
            "LOG_LEVEL",
        ],
    }


# Convenience import(s)
try:
    from .flow import evolve
    from .tv_baseline import denoise_tv
except Exception:  # pragma: no cover - safe import guard
    # Users can still import directly from submodules.
    pass
