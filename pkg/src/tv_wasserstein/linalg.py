"""
Sparse assembly and linear solves for the reduced Newton systems.

The gradient matrix G maps a row-major flattened scalar field to the
flattened vector field (comp1 then comp2); the divergence matrix is -G^T, so
the adjointness of the discrete operators is structural.

Solvers
-------
- "direct":    sparse LU (SuperLU via scipy.sparse.linalg.splu) followed by a
               few passes of iterative refinement.
- "iterative": restarted GMRES with an incomplete-LU preconditioner, for grids
               too large to factor comfortably.

Every successful return satisfies the normwise backward-error bound

    ||A x - b||_2 <= tol_lin * max(1, ||A||_F ||x||_2 + ||b||_2)

otherwise LinearSolveError is raised carrying the residual reached. The
||A|| ||x|| term is the floor LU reaches in double precision; the reduced Newton
systems carry entries of order 1/tau_min.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, spilu, splu
from scipy.sparse.linalg import norm as sparse_norm

from .config import DEFAULT_LINEAR_METHOD, DEFAULT_TOL_LIN
from .grid_ops import Grid, ScalarField, check_nonnegative, face_weights

__all__ = [
    "SparseMatrix",
    "LinearSolveReport",
    "LinearSolverSettings",
    "LinearSolveError",
    "assemble_grad_matrix",
    "weighted_laplacian_matrix",
    "solve_sparse",
]

logger = logging.getLogger(__name__)

SparseMatrix = sp.csr_matrix
SolveMethod = Literal["direct", "iterative"]


class LinearSolveError(RuntimeError):
    """Factorization failure or unmet residual contract."""

    def __init__(
        self, message: str, residual: float, method: str, iterations: int = 0
    ) -> None:
        super().__init__(f"{message} (method={method}, residual={residual:.3e})")
        self.residual = residual
        self.method = method
        self.iterations = iterations


@dataclass(frozen=True)
class LinearSolveReport:
    """
    Outcome of a linear solve.

    Attributes:
        iterations: Krylov iterations (0 for the direct path).
        relative_residual: ||A x - b|| / max(1, ||A|| ||x|| + ||b||).
        method: "direct" or "iterative".
    """

    iterations: int
    relative_residual: float
    method: str


@dataclass(frozen=True)
class LinearSolverSettings:
    """
    Attributes:
        method: "direct" (sparse LU) or "iterative" (ILU-preconditioned GMRES).
        tol_lin: Backward-error tolerance, see the module docstring.
        refine_steps: Most iterative refinement passes after LU (direct path);
            refinement also stops once a pass no longer halves the residual.
        restart: GMRES restart length.
        maxiter: GMRES restart cycles.
        ilu_drop_tol: Drop tolerance of the ILU preconditioner.
    """

    method: SolveMethod = "direct"
    tol_lin: float = 1e-10
    refine_steps: int = 5
    restart: int = 50
    maxiter: int = 200
    ilu_drop_tol: float = 1e-5

    def __post_init__(self) -> None:
        if self.method not in ("direct", "iterative"):
            raise ValueError(
                f"method must be 'direct' or 'iterative'; got {self.method!r}"
            )
        if self.tol_lin <= 0:
            raise ValueError(f"tol_lin must be > 0; got {self.tol_lin}")
        if self.refine_steps < 0 or self.restart < 1 or self.maxiter < 1:
            raise ValueError("refine_steps must be >= 0, restart and maxiter >= 1")

    @classmethod
    def default(cls) -> "LinearSolverSettings":
        method = DEFAULT_LINEAR_METHOD
        if method not in ("direct", "iterative"):
            method = "direct"
        return cls(method=method, tol_lin=DEFAULT_TOL_LIN)  # type: ignore[arg-type]


# -----------------
# Assembly
# -----------------


def _forward_diff_1d(n: int, h: float) -> sp.csr_matrix:
    main = -np.ones(n)
    main[-1] = 0.0
    upper = np.ones(n - 1)
    return (sp.diags([main, upper], [0, 1], shape=(n, n), format="csr") / h).tocsr()


def assemble_grad_matrix(grid: Grid) -> SparseMatrix:
    """
    Sparse G of shape (2 * nx * ny, nx * ny) with G @ u.flat == grad(u).flat.
    """
    g1 = sp.kron(_forward_diff_1d(grid.nx, grid.h), sp.identity(grid.ny), format="csr")
    g2 = sp.kron(sp.identity(grid.nx), _forward_diff_1d(grid.ny, grid.h), format="csr")
    G = sp.vstack([g1, g2], format="csr")
    G.eliminate_zeros()
    G.sort_indices()
    return G


def weighted_laplacian_matrix(
    w: ScalarField, G: Optional[SparseMatrix] = None, tol: float = 1e-12
) -> SparseMatrix:
    """
    Assembled form of grid_ops.weighted_elliptic: -G^T W G with arithmetic-mean
    face mobilities.
    """
    check_nonnegative("mobility", w.values, tol)
    if G is None:
        G = assemble_grad_matrix(w.grid)
    w1, w2 = face_weights(w)
    W = sp.diags(np.concatenate([w1.ravel(), w2.ravel()]))
    L = (-(G.T @ W @ G)).tocsr()
    L.sort_indices()
    return L


# -----------------
# Solve
# -----------------


def _residual(A: sp.spmatrix, x: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(A @ x - b))


def _solve_direct(
    A: sp.csr_matrix, b: np.ndarray, settings: LinearSolverSettings
) -> Tuple[np.ndarray, float]:
    try:
        lu = splu(A.tocsc())
    except RuntimeError as exc:
        msg = f"LU factorization failed: {exc}"
        raise LinearSolveError(msg, np.inf, "direct") from exc
    x = lu.solve(b)
    res = _residual(A, x, b)
    for _ in range(settings.refine_steps):
        if not np.isfinite(res) or res == 0.0:
            break
        x_new = x + lu.solve(b - A @ x)
        res_new = _residual(A, x_new, b)
        if not res_new < res:
            break
        stalled = res_new > 0.5 * res
        x, res = x_new, res_new
        if stalled:
            break
    return x, res


def _solve_iterative(
    A: sp.csr_matrix, b: np.ndarray, settings: LinearSolverSettings
) -> Tuple[np.ndarray, float, int]:
    M = None
    try:
        ilu = spilu(A.tocsc(), drop_tol=settings.ilu_drop_tol)
        M = LinearOperator(A.shape, ilu.solve)
    except RuntimeError as exc:
        logger.warning("ILU preconditioner unavailable (%s); running plain GMRES", exc)

    count = [0]

    def _tick(_: float) -> None:
        count[0] += 1

    x, info = gmres(
        A,
        b,
        rtol=settings.tol_lin,
        atol=settings.tol_lin,
        restart=settings.restart,
        maxiter=settings.maxiter,
        M=M,
        callback=_tick,
        callback_type="pr_norm",
    )
    if info < 0:
        raise LinearSolveError("GMRES breakdown", np.inf, "iterative", count[0])
    return x, _residual(A, x, b), count[0]


def solve_sparse(
    A: sp.spmatrix, b: np.ndarray, settings: Optional[LinearSolverSettings] = None
) -> Tuple[np.ndarray, LinearSolveReport]:
    """
    Solve A x = b under the residual contract of `settings`.

    Raises:
        ValueError: if A is not square or b has the wrong length.
        LinearSolveError: on factorization failure, breakdown or a residual
            above tol_lin * max(1, ||A||_F ||x|| + ||b||).
    """
    settings = settings or LinearSolverSettings.default()
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=np.float64).ravel()
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square; got {A.shape}")
    if b.size != A.shape[0]:
        raise ValueError(f"rhs length {b.size} does not match matrix size {A.shape[0]}")

    iterations = 0
    if settings.method == "direct":
        x, res = _solve_direct(A, b, settings)
    else:
        x, res, iterations = _solve_iterative(A, b, settings)

    if not np.all(np.isfinite(x)) or not np.isfinite(res):
        raise LinearSolveError(
            "non-finite solution", np.inf, settings.method, iterations
        )
    scale = max(
        1.0,
        float(sparse_norm(A)) * float(np.linalg.norm(x)) + float(np.linalg.norm(b)),
    )
    threshold = settings.tol_lin * scale
    if res > threshold:
        raise LinearSolveError(
            f"residual above tolerance {threshold:.3e}",
            res / scale,
            settings.method,
            iterations,
        )
    return x, LinearSolveReport(
        iterations=iterations, relative_residual=res / scale, method=settings.method
    )
