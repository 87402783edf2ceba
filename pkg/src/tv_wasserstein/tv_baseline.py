"""
Second-order TV denoising with the penalty-relaxed primal-dual Newton method.

Optimality system for the denoising problem with weight alpha:

    u = f - alpha * div p
    0 = -grad u - (1/eps) H(p)

Substituting u into the dual equation and linearising H with tau damping
(same penalty and schedule as the flow) gives one sparse SPD system per
iteration in p alone:

    (M + alpha G G^T) p = -G f + b_P,   u = f + alpha G^T p

with M = (1/eps) H'(p_old) + tau_k and b_P = -(1/eps) H(p_old) + M p_old.
Iterations stop on the relative l2 update of u, as in the flow.

`rof_reference` solves the exact discrete anisotropic ROF problem through its
box-constrained dual least-squares form and serves as an independent oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import lsq_linear

from .config import (
    DEFAULT_ALPHA,
    DEFAULT_EPS,
    DEFAULT_EPS_TOL,
    DEFAULT_LINEAR_METHOD,
    DEFAULT_MAX_INNER,
    DEFAULT_TAU0,
    DEFAULT_TAU_DECAY,
    DEFAULT_TAU_MIN,
    DEFAULT_TOL_LIN,
)
from .grid_ops import ScalarField, VectorField, grad
from .linalg import (
    LinearSolveError,
    LinearSolverSettings,
    assemble_grad_matrix,
    solve_sparse,
)
from .newton import (
    InnerReport,
    NewtonSolveError,
    constraint_violation,
    damped_penalty_system,
    tau_schedule,
    validate_positive,
)
from .penalty import penalty_grad

__all__ = [
    "TvDenoiseConfig",
    "TvSolution",
    "denoise_tv",
    "rof_reference",
    "staircase_metric",
]

logger = logging.getLogger(__name__)

# Relative flatness threshold for staircase detection.
FLAT_THRESHOLD = 1e-6


@dataclass(frozen=True)
class TvDenoiseConfig:
    """
    Attributes:
        alpha: Regularisation weight (> 0).
        eps, tau0, tau_decay, tau_min, eps_tol, max_inner, tol_lin,
        linear_method: as in newton.SolverConfig.
    """

    alpha: float = DEFAULT_ALPHA
    eps: float = DEFAULT_EPS
    tau0: float = DEFAULT_TAU0
    tau_decay: float = DEFAULT_TAU_DECAY
    tau_min: float = DEFAULT_TAU_MIN
    eps_tol: float = DEFAULT_EPS_TOL
    max_inner: int = DEFAULT_MAX_INNER
    tol_lin: float = DEFAULT_TOL_LIN
    linear_method: str = DEFAULT_LINEAR_METHOD

    def __post_init__(self) -> None:
        for name in ("alpha", "eps", "tau0", "tau_min", "eps_tol", "tol_lin"):
            validate_positive(name, getattr(self, name))
        if not 0.0 < self.tau_decay < 1.0:
            raise ValueError(f"tau_decay must lie in (0, 1); got {self.tau_decay}")
        if int(self.max_inner) != self.max_inner or self.max_inner < 1:
            raise ValueError(
                f"max_inner must be a positive integer; got {self.max_inner}"
            )
        self.linear_settings()

    def linear_settings(self) -> LinearSolverSettings:
        return LinearSolverSettings(
            method=self.linear_method, tol_lin=self.tol_lin  # type: ignore[arg-type]
        )


class TvSolution(NamedTuple):
    u: ScalarField
    report: InnerReport
    p: VectorField


def _relative_update(new: np.ndarray, old: np.ndarray) -> float:
    diff = float(np.linalg.norm(new - old))
    norm = float(np.linalg.norm(new))
    if norm == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / norm


def denoise_tv(f: ScalarField, cfg: Optional[TvDenoiseConfig] = None) -> TvSolution:
    """
    Denoise f by anisotropic TV with weight cfg.alpha.

    Returns:
        TvSolution(u, report, p). Non-convergence is flagged in the report and
        the last iterate is returned.

    Raises:
        NewtonSolveError: if a linear solve fails.
    """
    cfg = cfg or TvDenoiseConfig()
    grid = f.grid
    settings = cfg.linear_settings()
    G = assemble_grad_matrix(grid)
    GGt = (G @ G.T).tocsr()
    f_vec = f.flat
    grad_f = G @ f_vec

    p_vec = np.zeros(2 * grid.size)
    u_vec = f_vec.copy()
    rel_update = math.inf
    converged = False
    k = 0
    linear_iterations = 0
    history = []
    while k < cfg.max_inner:
        tau = tau_schedule(cfg, k)
        m, b_p = damped_penalty_system(VectorField.from_flat(grid, p_vec), cfg.eps, tau)
        A = (sp.diags(m) + cfg.alpha * GGt).tocsr()
        try:
            p_vec, lin = solve_sparse(A, -grad_f + b_p, settings)
        except LinearSolveError as exc:
            raise NewtonSolveError(k, tau, exc) from exc
        linear_iterations += lin.iterations
        u_new = f_vec + cfg.alpha * (G.T @ p_vec)
        rel_update = _relative_update(u_new, u_vec)
        u_vec = u_new
        k += 1
        history.append(rel_update)
        logger.debug("tv newton k=%d tau=%.3e rel_update=%.3e", k, tau, rel_update)
        if rel_update <= cfg.eps_tol:
            converged = True
            break

    if not converged:
        logger.warning(
            "TV denoising did not converge in %d iterations (rel_update=%.3e)",
            cfg.max_inner,
            rel_update,
        )

    u = ScalarField.from_flat(grid, u_vec)
    p = VectorField.from_flat(grid, p_vec)
    residual = -(G @ u_vec) - penalty_grad(p).flat / cfg.eps
    tail = history[-5:]
    report = InnerReport(
        iterations_used=k,
        converged=converged,
        final_rel_update=rel_update,
        final_nonlinear_residual=float(np.max(np.abs(residual))),
        max_constraint_violation=constraint_violation(p),
        monotone_tail=all(b <= a for a, b in zip(tail, tail[1:])),
        linear_iterations=linear_iterations,
    )
    return TvSolution(u=u, report=report, p=p)


def rof_reference(f: ScalarField, alpha: float) -> ScalarField:
    """
    Exact minimiser of 1/2 ||u - f||^2 + alpha * sum(|grad_1 u| + |grad_2 u|)
    (unweighted pixel sums), via the dual problem

        min_{|p| <= 1}  1/2 ||alpha G^T p + f||^2,   u = f + alpha G^T p,

    solved with bounded-variable least squares. Dense; meant for small grids.
    """
    validate_positive("alpha", alpha)
    G = assemble_grad_matrix(f.grid)
    A = alpha * G.T.toarray()
    result = lsq_linear(A, -f.flat, bounds=(-1.0, 1.0), method="bvls", tol=1e-14)
    if not result.success:
        logger.warning("ROF reference solve stopped early: %s", result.message)
    return ScalarField.from_flat(f.grid, f.flat + A @ result.x)


def staircase_metric(
    u: ScalarField,
    reference: Optional[ScalarField] = None,
    mask: Optional[np.ndarray] = None,
) -> float:
    """
    Fraction of flat pixels, a proxy for staircasing.

    An interior pixel (off the one-pixel border) is flat when both forward
    differences are below FLAT_THRESHOLD * (max u - min u). When `reference`
    is given, only pixels where the reference is not flat count; `mask`
    further restricts the pixels considered.
    """
    values = u.values
    span = float(values.max() - values.min())
    d = grad(u)
    h = u.grid.h
    if span == 0.0:
        flat = np.ones((u.grid.nx - 2, u.grid.ny - 2), dtype=bool)
    else:
        thr = FLAT_THRESHOLD * span
        flat = (np.abs(d.comp1[1:-1, 1:-1] * h) < thr) & (
            np.abs(d.comp2[1:-1, 1:-1] * h) < thr
        )

    selected = np.ones_like(flat)
    if reference is not None:
        r = reference.values
        r_span = float(r.max() - r.min())
        g = grad(reference)
        g_mag = np.hypot(g.comp1[1:-1, 1:-1], g.comp2[1:-1, 1:-1]) * reference.grid.h
        selected &= g_mag > FLAT_THRESHOLD * r_span
    if mask is not None:
        selected &= np.asarray(mask, dtype=bool)[1:-1, 1:-1]
    if not selected.any():
        return 0.0
    return float(np.mean(flat[selected]))
