"""
Configuration module for tv_wasserstein.

Reads solver defaults from environment variables with sane fallbacks.
A local ".env" is loaded by tv_wasserstein.load_dotenv_if_present(); the
DEFAULT_* constants only see it when that runs before this import.

Usage:
    from tv_wasserstein.config import (
        DEFAULT_DT, DEFAULT_EPS, DEFAULT_TAU0, DEFAULT_TAU_DECAY, DEFAULT_TAU_MIN,
        DEFAULT_EPS_TOL, DEFAULT_MAX_INNER, DEFAULT_TOL_LIN, DEFAULT_LINEAR_METHOD,
        DEFAULT_H, DEFAULT_POSITIVITY_TOL, DEFAULT_ALPHA, DEFAULT_SEED,
        LOG_LEVEL,
    )

Environment variables (all optional):
    TVW_DT, TVW_EPS, TVW_TAU0, TVW_TAU_DECAY, TVW_TAU_MIN, TVW_EPS_TOL,
    TVW_MAX_INNER, TVW_TOL_LIN, TVW_LINEAR_METHOD, TVW_H,
    TVW_POSITIVITY_TOL, TVW_ALPHA, TVW_SEED, LOG_LEVEL

Notes:
- Values are read once at import time. Tests and scripts that want different
  defaults should pass explicit SolverConfig fields instead of mutating env.
- Malformed numeric values silently fall back to the built-in default.
"""

from __future__ import annotations

import os
from typing import Optional

__all__ = [
    # Time stepping / penalty
    "DEFAULT_DT",
    "DEFAULT_EPS",
    "DEFAULT_TAU0",
    "DEFAULT_TAU_DECAY",
    "DEFAULT_TAU_MIN",
    "DEFAULT_EPS_TOL",
    "DEFAULT_MAX_INNER",
    "DEFAULT_POSITIVITY_TOL",
    # Linear algebra
    "DEFAULT_TOL_LIN",
    "DEFAULT_LINEAR_METHOD",
    # Grid / experiments
    "DEFAULT_H",
    "DEFAULT_ALPHA",
    "DEFAULT_SEED",
    "LOG_LEVEL",
    # Helpers
    "get_env",
    "get_int",
    "get_float",
]


# --------
# Helpers
# --------


def get_env(name: str, default: Optional[str] = None) -> Optional[str]:
    """Fetch a string environment variable with optional default."""
    val = os.getenv(name)
    if val is None or val == "":
        return default
    return val


def get_int(name: str, default: int) -> int:
    """Fetch an integer environment variable with fallback default."""
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        return default


def get_float(name: str, default: float) -> float:
    """Fetch a float environment variable with fallback default."""
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        return default


# -------------------------
# Time stepping / penalty
# -------------------------

DEFAULT_DT: float = get_float("TVW_DT", 1.0)
DEFAULT_EPS: float = get_float("TVW_EPS", 1e-3)
DEFAULT_TAU0: float = get_float("TVW_TAU0", 1.0)
DEFAULT_TAU_DECAY: float = get_float("TVW_TAU_DECAY", 0.5)
DEFAULT_TAU_MIN: float = get_float("TVW_TAU_MIN", 1e-8)
DEFAULT_EPS_TOL: float = get_float("TVW_EPS_TOL", 1e-6)
DEFAULT_MAX_INNER: int = get_int("TVW_MAX_INNER", 50)
DEFAULT_POSITIVITY_TOL: float = get_float("TVW_POSITIVITY_TOL", 1e-3)

# -------------------------
# Linear algebra
# -------------------------

DEFAULT_TOL_LIN: float = get_float("TVW_TOL_LIN", 1e-10)
DEFAULT_LINEAR_METHOD: str = (
    get_env("TVW_LINEAR_METHOD", "direct") or "direct"
).lower()

# -------------------------
# Grid / experiment defaults
# -------------------------

DEFAULT_H: float = get_float("TVW_H", 1.0)  # pixel units
DEFAULT_ALPHA: float = get_float("TVW_ALPHA", 0.05)
DEFAULT_SEED: int = get_int("TVW_SEED", 0)

# -------------------------
# Logging
# -------------------------

LOG_LEVEL: str = (get_env("LOG_LEVEL", "INFO") or "INFO").upper()
