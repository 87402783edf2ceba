"""
Discrete differential operators on a uniform 2D grid.

The gradient uses forward differences with a zero last row/column (no-flux
closure); the divergence is its exact negative adjoint, so that

    <grad u, p> = -<u, div p>

holds for every u and p, and the divergence of any vector field sums to zero
over the grid (discrete mass identity).

Conventions
-----------
- Fields are stored as (nx, ny) arrays indexed [i, j]; i is the x index
  (first axis), j the y index. Flattening is row-major (C order), so pixel
  (i, j) sits at position i * ny + j.
- A VectorField stores the x-component p^1 in `comp1` and the y-component
  p^2 in `comp2`; flattened vector fields concatenate comp1 then comp2.

Example
-------
    import numpy as np
    from tv_wasserstein.grid_ops import Grid, ScalarField, grad, div

    grid = Grid(nx=4, ny=4, h=1.0)
    u = ScalarField(grid, np.arange(16.0).reshape(4, 4))
    p = grad(u)
    q = div(p)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "PositivityError",
    "grad",
    "div",
    "face_weights",
    "weighted_elliptic",
    "inner",
    "smoothed_subgradient",
    "check_nonnegative",
]


class PositivityError(ValueError):
    """Raised when a density or mobility has entries below the allowed tolerance."""

    def __init__(self, name: str, min_value: float, tol: float) -> None:
        super().__init__(
            f"{name} has negative entries (min {min_value:.6g} < -{tol:.3g}); "
            "positivity was lost upstream"
        )
        self.name = name
        self.min_value = min_value
        self.tol = tol


@dataclass(frozen=True)
class Grid:
    """
    Uniform 2D grid.

    Attributes:
        nx: Pixel count along the first axis (>= 2).
        ny: Pixel count along the second axis (>= 2).
        h:  Spatial step, shared by both axes (> 0).
    """

    nx: int
    ny: int
    h: float = 1.0

    def __post_init__(self) -> None:
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError(f"grid sizes must be integers; got {self.nx}x{self.ny}")
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid must be at least 2x2; got {self.nx}x{self.ny}")
        if not np.isfinite(self.h) or self.h <= 0:
            raise ValueError(f"h must be > 0; got {self.h}")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @classmethod
    def unit_square(cls, n: int) -> "Grid":
        """n x n grid sampling [0, 1]^2 including both end points."""
        return cls(nx=n, ny=n, h=1.0 / (n - 1))


def _as_grid_array(grid: Grid, values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != grid.shape:
        if arr.size == grid.size:
            arr = arr.reshape(grid.shape)
        else:
            raise ValueError(f"{name} has shape {arr.shape}; grid is {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A real grid function (density u, subgradient q, datum f)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _as_grid_array(self.grid, self.values, "values")
        object.__setattr__(self, "values", values)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @classmethod
    def from_flat(cls, grid: Grid, vec: np.ndarray) -> "ScalarField":
        return cls(grid, np.asarray(vec, dtype=np.float64).reshape(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """A pair of grid functions (p^1, p^2), the dual variable."""

    grid: Grid
    comp1: np.ndarray
    comp2: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "comp1", _as_grid_array(self.grid, self.comp1, "comp1")
        )
        object.__setattr__(
            self, "comp2", _as_grid_array(self.grid, self.comp2, "comp2")
        )

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.comp1.ravel(), self.comp2.ravel()])

    @classmethod
    def from_flat(cls, grid: Grid, vec: np.ndarray) -> "VectorField":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != 2 * grid.size:
            raise ValueError(f"expected {2 * grid.size} entries; got {vec.size}")
        n = grid.size
        return cls(grid, vec[:n].reshape(grid.shape), vec[n:].reshape(grid.shape))

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.comp1)), np.max(np.abs(self.comp2))))


def _check_same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


# -----------------------
# Array-level primitives
# -----------------------


def _forward_diff(u: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    d1 = np.zeros_like(u)
    d2 = np.zeros_like(u)
    d1[:-1, :] = (u[1:, :] - u[:-1, :]) / h
    d2[:, :-1] = (u[:, 1:] - u[:, :-1]) / h
    return d1, d2


def _backward_div(p1: np.ndarray, p2: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(p1)
    out[0, :] += p1[0, :]
    out[1:-1, :] += p1[1:-1, :] - p1[:-2, :]
    out[-1, :] -= p1[-2, :]
    out[:, 0] += p2[:, 0]
    out[:, 1:-1] += p2[:, 1:-1] - p2[:, :-2]
    out[:, -1] -= p2[:, -2]
    return out / h


# -----------------------
# Public operators
# -----------------------


def grad(u: ScalarField) -> VectorField:
    """
    Forward-difference gradient with zero last row/column.

    comp1[i, j] = (u[i+1, j] - u[i, j]) / h for i < nx - 1, 0 at i = nx - 1;
    comp2 analogously along j.
    """
    d1, d2 = _forward_diff(u.values, u.grid.h)
    return VectorField(u.grid, d1, d2)


def div(p: VectorField) -> ScalarField:
    """Backward-difference divergence, the negative adjoint of `grad`."""
    return ScalarField(p.grid, _backward_div(p.comp1, p.comp2, p.grid.h))


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean inner product of two equally shaped arrays (no h^2 weighting)."""
    return float(np.dot(np.ravel(a), np.ravel(b)))


def check_nonnegative(name: str, values: np.ndarray, tol: float = 1e-12) -> None:
    """
    Raise PositivityError if any entry is below -tol.

    Raises:
        PositivityError: on entries more negative than the tolerance.
    """
    vmin = float(np.min(values))
    if vmin < -tol:
        raise PositivityError(name, vmin, tol)


def face_weights(w: ScalarField) -> Tuple[np.ndarray, np.ndarray]:
    """
    Arithmetic-mean mobility on cell faces, clamped below at 0.

    Entry [i, j] of the first array weights the face between (i, j) and
    (i+1, j); the last row (no face) is 0. Same along j for the second array.
    """
    v = w.values
    w1 = np.zeros_like(v)
    w2 = np.zeros_like(v)
    w1[:-1, :] = 0.5 * (v[1:, :] + v[:-1, :])
    w2[:, :-1] = 0.5 * (v[:, 1:] + v[:, :-1])
    return np.maximum(w1, 0.0), np.maximum(w2, 0.0)


def weighted_elliptic(
    w: ScalarField, q: ScalarField, tol: float = 1e-12
) -> ScalarField:
    """
    Mobility-weighted operator L_w q = div(w grad q) = -G^T W G q.

    Symmetric negative semidefinite for any w >= 0.

    Raises:
        PositivityError: if w has entries below -tol.
    """
    _check_same_grid(w.grid, q.grid)
    check_nonnegative("mobility", w.values, tol)
    w1, w2 = face_weights(w)
    g1, g2 = _forward_diff(q.values, q.grid.h)
    return ScalarField(q.grid, _backward_div(w1 * g1, w2 * g2, q.grid.h))


def smoothed_subgradient(
    u: ScalarField, delta: float, anisotropic: bool = True
) -> ScalarField:
    """
    Smoothed TV subgradient -div(grad u / sqrt(|grad u|^2 + delta)).

    With `anisotropic=True` each component is normalised by its own
    magnitude, matching the anisotropic penalty used by the solvers. This is
    a cross-check oracle, not a solver ingredient.
    """
    if delta <= 0:
        raise ValueError(f"delta must be > 0; got {delta}")
    d1, d2 = _forward_diff(u.values, u.grid.h)
    if anisotropic:
        g1 = d1 / np.sqrt(d1 * d1 + delta)
        g2 = d2 / np.sqrt(d2 * d2 + delta)
    else:
        norm = np.sqrt(d1 * d1 + d2 * d2 + delta)
        g1, g2 = d1 / norm, d2 / norm
    return ScalarField(u.grid, -_backward_div(g1, g2, u.grid.h))
