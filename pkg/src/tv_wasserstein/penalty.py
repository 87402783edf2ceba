"""
Anisotropic penalty relaxing the dual constraint |p^1|, |p^2| <= 1.

Definitions
-----------
For a dual field p = (p^1, p^2):

    F(p)  = 1/2 * sum max(|p^1| - 1, 0)^2 + 1/2 * sum max(|p^2| - 1, 0)^2
    H(p)  = componentwise  sgn(s) * (|s| - 1) * 1{|s| >= 1}
    H'(p) = diag(1{|p^1| >= 1}, 1{|p^2| >= 1})

H is continuous and vanishes inside the constraint set; H' is the indicator
of the closed exterior, so at |s| = 1 we have H = 0 and H' = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_ops import VectorField

__all__ = [
    "PenaltyEval",
    "penalty_value",
    "penalty_grad",
    "penalty_jac_diag",
    "penalty_eval",
]


@dataclass(frozen=True)
class PenaltyEval:
    """
    Penalty value together with its derivative and diagonal Jacobian.

    Attributes:
        value:    F(p) >= 0.
        grad:     H(p).
        jac_diag: diagonal of H'(p), entries exactly 0.0 or 1.0.
    """

    value: float
    grad: VectorField
    jac_diag: VectorField


def _excess(s: np.ndarray) -> np.ndarray:
    return np.maximum(np.abs(s) - 1.0, 0.0)


def _h(s: np.ndarray) -> np.ndarray:
    return np.sign(s) * _excess(s)


def _indicator(s: np.ndarray) -> np.ndarray:
    return (np.abs(s) >= 1.0).astype(np.float64)


def penalty_value(p: VectorField) -> float:
    """F(p); zero exactly when both components lie in [-1, 1]."""
    e1 = _excess(p.comp1)
    e2 = _excess(p.comp2)
    return 0.5 * float(np.sum(e1 * e1)) + 0.5 * float(np.sum(e2 * e2))


def penalty_grad(p: VectorField) -> VectorField:
    """H(p), odd in each component."""
    return VectorField(p.grid, _h(p.comp1), _h(p.comp2))


def penalty_jac_diag(p: VectorField) -> VectorField:
    """Diagonal of H'(p) as a 0/1 vector field."""
    return VectorField(p.grid, _indicator(p.comp1), _indicator(p.comp2))


def penalty_eval(p: VectorField) -> PenaltyEval:
    return PenaltyEval(
        value=penalty_value(p),
        grad=penalty_grad(p),
        jac_diag=penalty_jac_diag(p),
    )
