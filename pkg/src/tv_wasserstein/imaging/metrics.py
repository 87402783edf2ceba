"""
Quality metrics and integral quantities for grid fields.

    mass(u)          = h^2 * sum(u)
    discrete_tv(u)   = h * sum(|grad_1 u| + |grad_2 u|)    (anisotropic)
    psnr(u, ref)     = 10 log10(range^2 / MSE), range = max(ref) - min(ref)
    l2_distance(a,b) = ||a - b||_2 over pixels (unweighted)
    support_area(u)  = number of pixels above a fraction of max(u)

psnr returns math.inf for identical fields. A constant reference has no
range; the unit intensity range is used instead.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..grid_ops import ScalarField, grad

__all__ = ["mass", "psnr", "discrete_tv", "l2_distance", "support_area"]


def _check_shapes(a: ScalarField, b: ScalarField) -> None:
    if a.values.shape != b.values.shape:
        raise ValueError(f"shape mismatch: {a.values.shape} vs {b.values.shape}")


def mass(u: ScalarField, h: Optional[float] = None) -> float:
    h = u.grid.h if h is None else h
    return h * h * float(np.sum(u.values))


def psnr(u: ScalarField, ref: ScalarField) -> float:
    _check_shapes(u, ref)
    mse = float(np.mean((u.values - ref.values) ** 2))
    if mse == 0.0:
        return math.inf
    data_range = float(ref.values.max() - ref.values.min()) or 1.0
    return 10.0 * math.log10(data_range * data_range / mse)


def discrete_tv(u: ScalarField) -> float:
    g = grad(u)
    return u.grid.h * float(np.sum(np.abs(g.comp1)) + np.sum(np.abs(g.comp2)))


def l2_distance(a: ScalarField, b: ScalarField) -> float:
    _check_shapes(a, b)
    return float(np.linalg.norm(a.values - b.values))


def support_area(u: ScalarField, fraction: float = 0.1) -> int:
    """Pixels strictly above `fraction * max(u)`."""
    threshold = fraction * float(u.values.max())
    return int(np.count_nonzero(u.values > threshold))
