"""
Inner damped-Newton iteration for one implicit time step.

Given U_n, the iteration k -> k+1 solves the linearised system

    (U - U_n) / dt = div(U_n grad Q)
    Q              = div P
    0              = -grad U - (1/eps) H(P_old) - (1/eps) H'(P_old)(P - P_old)
                     - tau_k (P - P_old)

by block elimination. With the diagonal M = (1/eps) H'(P_old) + tau_k I and
b_P = -(1/eps) H(P_old) + M P_old the third equation gives
P = M^-1 (-grad U + b_P), the second gives Q = div P, and the first reduces to
one sparse system in U:

    [I/dt + G^T W G G^T M^-1 G] U = U_n/dt + G^T W G G^T M^-1 b_P

where G is the gradient matrix and W the face mobilities of U_n. Column and
row sums of the fourth-order part vanish and A 1 = 1/dt, so after each solve U
is shifted by -dt * mean(A U - b); this removes the mass defect the linear
residual would otherwise leave, and sum(U) == sum(U_n) to rounding.

Damping follows tau_k = max(tau_min, tau0 * tau_decay**k), reset to tau0 at
every time step. Iteration stops when ||U^k - U^(k-1)|| / ||U^k|| <= eps_tol
(l2 norms) or after max_inner iterations; non-convergence is reported, not
raised.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Protocol, Tuple

import numpy as np
import scipy.sparse as sp

from .config import (
    DEFAULT_DT,
    DEFAULT_EPS,
    DEFAULT_EPS_TOL,
    DEFAULT_H,
    DEFAULT_LINEAR_METHOD,
    DEFAULT_MAX_INNER,
    DEFAULT_POSITIVITY_TOL,
    DEFAULT_TAU0,
    DEFAULT_TAU_DECAY,
    DEFAULT_TAU_MIN,
    DEFAULT_TOL_LIN,
)
from .grid_ops import ScalarField, VectorField, check_nonnegative
from .linalg import (
    LinearSolveError,
    LinearSolverSettings,
    SparseMatrix,
    assemble_grad_matrix,
    solve_sparse,
    weighted_laplacian_matrix,
)
from .penalty import penalty_grad, penalty_jac_diag

__all__ = [
    "SolverConfig",
    "DampingParams",
    "NewtonState",
    "InnerReport",
    "InnerSolution",
    "NewtonSolveError",
    "validate_positive",
    "tau_schedule",
    "damped_penalty_system",
    "nonlinear_residual",
    "constraint_violation",
    "positivity_floor",
    "reduce",
    "newton_step",
    "solve_inner",
]

logger = logging.getLogger(__name__)

# Window used for the rel_update monotonicity check.
MONOTONE_TAIL = 5


def validate_positive(name: str, value: float) -> None:
    """
    Ensure `value` is a positive finite number.

    Raises:
        ValueError: if value is None, not a number, or <= 0.
    """
    if value is None:
        raise ValueError(f"{name} must not be None")
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name} must be a number") from exc
    if not math.isfinite(v) or v <= 0:
        raise ValueError(f"{name} must be > 0; got {v}")


@dataclass(frozen=True)
class SolverConfig:
    """
    Parameters of the implicit scheme.

    Attributes:
        dt: Time step.
        eps: Penalty weight (1 >> eps > 0).
        tau0: Initial damping.
        tau_decay: Geometric damping factor, strictly inside (0, 1).
        tau_min: Damping floor; keeps M invertible.
        eps_tol: Stopping tolerance on the relative l2 update of U.
        max_inner: Newton iteration cap per time step.
        tol_lin: Linear solver tolerance.
        h: Grid step used when fields are built from raw pixel arrays.
        linear_method: "direct" or "iterative".
        positivity_tol: Largest tolerated negative entry of the mobility U_n,
            relative to max(U_n).
    """

    dt: float = DEFAULT_DT
    eps: float = DEFAULT_EPS
    tau0: float = DEFAULT_TAU0
    tau_decay: float = DEFAULT_TAU_DECAY
    tau_min: float = DEFAULT_TAU_MIN
    eps_tol: float = DEFAULT_EPS_TOL
    max_inner: int = DEFAULT_MAX_INNER
    tol_lin: float = DEFAULT_TOL_LIN
    h: float = DEFAULT_H
    linear_method: str = DEFAULT_LINEAR_METHOD
    positivity_tol: float = DEFAULT_POSITIVITY_TOL

    def __post_init__(self) -> None:
        for name in ("dt", "eps", "tau0", "tau_min", "eps_tol", "tol_lin", "h"):
            validate_positive(name, getattr(self, name))
        if not 0.0 < self.tau_decay < 1.0:
            raise ValueError(f"tau_decay must lie in (0, 1); got {self.tau_decay}")
        if int(self.max_inner) != self.max_inner or self.max_inner < 1:
            raise ValueError(
                f"max_inner must be a positive integer; got {self.max_inner}"
            )
        if self.positivity_tol < 0:
            raise ValueError(f"positivity_tol must be >= 0; got {self.positivity_tol}")
        # validates linear_method
        self.linear_settings()

    def linear_settings(self) -> LinearSolverSettings:
        return LinearSolverSettings(
            method=self.linear_method, tol_lin=self.tol_lin  # type: ignore[arg-type]
        )


@dataclass(frozen=True)
class NewtonState:
    """
    One inner iterate (U^(k), Q^(k), P^(k)) with its bookkeeping.

    rel_update is ||U^(k) - U^(k-1)|| / ||U^(k)|| (inf before the first step);
    nonlinear_residual is the sup norm of -grad U - (1/eps) H(P).
    """

    U: ScalarField
    Q: ScalarField
    P: VectorField
    k: int
    tau_k: float
    rel_update: float
    nonlinear_residual: float

    @classmethod
    def initial(
        cls, U_n: ScalarField, P_warm: VectorField, cfg: SolverConfig
    ) -> "NewtonState":
        G = assemble_grad_matrix(U_n.grid)
        return cls(
            U=U_n,
            Q=ScalarField.from_flat(U_n.grid, -(G.T @ P_warm.flat)),
            P=P_warm,
            k=0,
            tau_k=tau_schedule(cfg, 0),
            rel_update=math.inf,
            nonlinear_residual=nonlinear_residual(U_n, P_warm, cfg.eps),
        )


@dataclass(frozen=True)
class InnerReport:
    """
    Summary of one solve_inner call.

    Attributes:
        iterations_used: Newton iterations performed (<= max_inner).
        converged: True when the relative-update criterion was met.
        final_rel_update: Last relative l2 update of U.
        final_nonlinear_residual: Sup norm of -grad U - (1/eps) H(P).
        max_constraint_violation: max over pixels/components of max(|P| - 1, 0).
        monotone_tail: Whether rel_update decreased over the last iterations.
        linear_iterations: Krylov iterations summed over the solve (0 for LU).
    """

    iterations_used: int
    converged: bool
    final_rel_update: float
    final_nonlinear_residual: float
    max_constraint_violation: float
    monotone_tail: bool = True
    linear_iterations: int = 0


class InnerSolution(NamedTuple):
    U: ScalarField
    Q: ScalarField
    P: VectorField
    report: InnerReport


class NewtonSolveError(RuntimeError):
    """A linear solve failed inside the damped Newton iteration."""

    def __init__(self, k: int, tau_k: float, cause: LinearSolveError) -> None:
        super().__init__(f"Newton iteration {k} (tau={tau_k:.3e}) failed: {cause}")
        self.k = k
        self.tau_k = tau_k
        self.residual = cause.residual


# ----------------------
# Building blocks
# ----------------------


class DampingParams(Protocol):
    tau0: float
    tau_decay: float
    tau_min: float


def tau_schedule(cfg: DampingParams, k: int) -> float:
    """tau_k = max(tau_min, tau0 * tau_decay**k)."""
    return max(cfg.tau_min, cfg.tau0 * cfg.tau_decay**k)


def damped_penalty_system(
    P_prev: VectorField, eps: float, tau: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Diagonal M = (1/eps) H'(P_prev) + tau and b_P = -(1/eps) H(P_prev) + M P_prev,
    both flattened (comp1 then comp2). Every entry of M is >= tau.
    """
    m = penalty_jac_diag(P_prev).flat / eps + tau
    b_p = -penalty_grad(P_prev).flat / eps + m * P_prev.flat
    return m, b_p


def nonlinear_residual(U: ScalarField, P: VectorField, eps: float) -> float:
    """Sup norm of the unlinearised dual equation -grad U - (1/eps) H(P)."""
    G = assemble_grad_matrix(U.grid)
    r = -(G @ U.flat) - penalty_grad(P).flat / eps
    return float(np.max(np.abs(r)))


def constraint_violation(P: VectorField) -> float:
    """max(|P| - 1, 0) over all pixels and both components."""
    return max(0.0, P.max_abs() - 1.0)


def positivity_floor(U_n: ScalarField, cfg: SolverConfig) -> float:
    """Absolute tolerance for negative entries of U_n: positivity_tol * max(U_n)."""
    return cfg.positivity_tol * max(float(np.max(U_n.values)), 0.0)


@dataclass
class _StepContext:
    """Per-time-step operators that stay fixed across Newton iterations."""

    U_n: ScalarField
    G: SparseMatrix
    neg_L: SparseMatrix
    identity_dt: SparseMatrix
    settings: LinearSolverSettings
    linear_iterations: int = 0
    rel_history: List[float] = field(default_factory=list)

    @classmethod
    def build(cls, U_n: ScalarField, cfg: SolverConfig) -> "_StepContext":
        G = assemble_grad_matrix(U_n.grid)
        neg_L = -weighted_laplacian_matrix(U_n, G, tol=positivity_floor(U_n, cfg))
        identity_dt = sp.identity(U_n.grid.size, format="csr") / cfg.dt
        return cls(U_n, G, neg_L.tocsr(), identity_dt, cfg.linear_settings())


def _reduce_parts(
    ctx: _StepContext, P_prev: VectorField, cfg: SolverConfig, tau_k: float
) -> Tuple[SparseMatrix, np.ndarray, np.ndarray, np.ndarray]:
    m, b_p = damped_penalty_system(P_prev, cfg.eps, tau_k)
    G = ctx.G
    inner_op = G.T @ sp.diags(1.0 / m) @ G
    A = (ctx.identity_dt + ctx.neg_L @ inner_op).tocsr()
    A.sort_indices()
    b = ctx.U_n.flat / cfg.dt + ctx.neg_L @ (G.T @ (b_p / m))
    return A, b, m, b_p


def reduce(
    U_n: ScalarField, P_prev: VectorField, cfg: SolverConfig, tau_k: float
) -> Tuple[SparseMatrix, np.ndarray]:
    """
    Eliminate P and Q and return the reduced system A U = b.

    Raises:
        PositivityError: if U_n has entries below -positivity_floor(U_n, cfg).
    """
    ctx = _StepContext.build(U_n, cfg)
    A, b, _, _ = _reduce_parts(ctx, P_prev, cfg, tau_k)
    return A, b


def _relative_update(new: np.ndarray, old: np.ndarray) -> float:
    diff = float(np.linalg.norm(new - old))
    norm = float(np.linalg.norm(new))
    if norm == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / norm


def _step(ctx: _StepContext, state: NewtonState, cfg: SolverConfig) -> NewtonState:
    A, b, m, b_p = _reduce_parts(ctx, state.P, cfg, state.tau_k)
    try:
        u_vec, report = solve_sparse(A, b, ctx.settings)
    except LinearSolveError as exc:
        raise NewtonSolveError(state.k, state.tau_k, exc) from exc
    ctx.linear_iterations += report.iterations
    u_vec = u_vec - cfg.dt * float(np.mean(A @ u_vec - b))

    grid = ctx.U_n.grid
    p_vec = (-(ctx.G @ u_vec) + b_p) / m
    U = ScalarField.from_flat(grid, u_vec)
    P = VectorField.from_flat(grid, p_vec)
    Q = ScalarField.from_flat(grid, -(ctx.G.T @ p_vec))
    residual = -(ctx.G @ u_vec) - penalty_grad(P).flat / cfg.eps
    return NewtonState(
        U=U,
        Q=Q,
        P=P,
        k=state.k + 1,
        tau_k=tau_schedule(cfg, state.k + 1),
        rel_update=_relative_update(u_vec, state.U.flat),
        nonlinear_residual=float(np.max(np.abs(residual))),
    )


def newton_step(state: NewtonState, U_n: ScalarField, cfg: SolverConfig) -> NewtonState:
    """
    One damped Newton iteration from `state` for the time step leaving U_n.

    Raises:
        ValueError: if state and U_n live on different grids.
        NewtonSolveError: if the reduced linear system cannot be solved.
    """
    if state.U.grid != U_n.grid:
        raise ValueError(f"grid mismatch: {state.U.grid} vs {U_n.grid}")
    return _step(_StepContext.build(U_n, cfg), state, cfg)


def _monotone_tail(history: List[float]) -> bool:
    tail = history[-MONOTONE_TAIL:]
    return all(b <= a for a, b in zip(tail, tail[1:]))


def solve_inner(
    U_n: ScalarField, P_warm: Optional[VectorField], cfg: SolverConfig
) -> InnerSolution:
    """
    Iterate newton_step from (U_n, P_warm) until the relative update drops
    below cfg.eps_tol or cfg.max_inner iterations are used.

    Args:
        U_n: Current density (>= 0, positive mass).
        P_warm: Dual warm start; zeros when None.
        cfg: Scheme parameters.

    Returns:
        InnerSolution(U, Q, P, report). A non-converged solve returns the last
        iterate with report.converged == False.

    Raises:
        ValueError: on an empty (zero-mass) datum.
        PositivityError: on entries below -positivity_floor(U_n, cfg).
        NewtonSolveError: on linear solver failure.
    """
    check_nonnegative("U_n", U_n.values, positivity_floor(U_n, cfg))
    if float(np.sum(U_n.values)) <= 0.0:
        raise ValueError("U_n must have positive mass")
    if P_warm is None:
        P_warm = VectorField.zeros(U_n.grid)

    ctx = _StepContext.build(U_n, cfg)
    state = NewtonState.initial(U_n, P_warm, cfg)
    converged = False
    while state.k < cfg.max_inner:
        state = _step(ctx, state, cfg)
        ctx.rel_history.append(state.rel_update)
        logger.debug(
            "newton k=%d tau=%.3e rel_update=%.3e residual=%.3e",
            state.k,
            state.tau_k,
            state.rel_update,
            state.nonlinear_residual,
        )
        if state.rel_update <= cfg.eps_tol:
            converged = True
            break

    monotone = _monotone_tail(ctx.rel_history)
    if converged and not monotone:
        logger.warning(
            "rel_update not monotone over the last %d Newton iterations", MONOTONE_TAIL
        )
    if not converged:
        logger.warning(
            "Newton did not converge in %d iterations (rel_update=%.3e)",
            cfg.max_inner,
            state.rel_update,
        )

    report = InnerReport(
        iterations_used=state.k,
        converged=converged,
        final_rel_update=state.rel_update,
        final_nonlinear_residual=state.nonlinear_residual,
        max_constraint_violation=constraint_violation(state.P),
        monotone_tail=monotone,
        linear_iterations=ctx.linear_iterations,
    )
    return InnerSolution(state.U, state.Q, state.P, report)
