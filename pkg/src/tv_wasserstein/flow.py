"""
Outer time stepping of the TV-Wasserstein flow u_t = div(u grad q), q in dTV(u).

Each step calls newton.solve_inner with the dual variable of the previous
step as warm start (zeros at t = 0), then reports a StepDiagnostics record to
a sink and, every `frame_stride` steps, hands the current field to the sink
as a frame.

Diagnostics CSV columns (frozen; extend only by appending):
    step,mass,min_u,max_u,inner_iterations,converged,rel_update,
    max_constraint_violation,l2_change
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Union

import numpy as np
import pandas as pd

from .grid_ops import PositivityError, ScalarField, VectorField, check_nonnegative
from .imaging.metrics import mass
from .newton import NewtonSolveError, SolverConfig, solve_inner

__all__ = [
    "DIAGNOSTICS_COLUMNS",
    "FlowRun",
    "StepDiagnostics",
    "FlowResult",
    "FlowSink",
    "CollectingSink",
    "FlowAbortedError",
    "normalize_mass",
    "evolve",
    "diagnostics_frame",
    "write_diagnostics_csv",
]

logger = logging.getLogger(__name__)

DIAGNOSTICS_COLUMNS = [
    "step",
    "mass",
    "min_u",
    "max_u",
    "inner_iterations",
    "converged",
    "rel_update",
    "max_constraint_violation",
    "l2_change",
]


class FlowAbortedError(RuntimeError):
    """A time step failed the run policy (strict non-convergence or solver failure)."""

    def __init__(self, step: int, reason: str) -> None:
        super().__init__(f"flow aborted at step {step}: {reason}")
        self.step = step
        self.reason = reason


@dataclass(frozen=True, eq=False)
class FlowRun:
    """
    Attributes:
        config: Scheme parameters.
        n_steps: Number of time steps (>= 1).
        initial: Non-negative initial density with positive mass.
        clamp_renormalize: Clamp negatives after each step and restore the mass.
        frame_stride: Emit a frame every this many steps (0 = none).
        strict: Abort on inner non-convergence.
        log_every: INFO progress line every this many steps.
    """

    config: SolverConfig
    n_steps: int
    initial: ScalarField
    clamp_renormalize: bool = False
    frame_stride: int = 0
    strict: bool = False
    log_every: int = 10

    def __post_init__(self) -> None:
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer; got {self.n_steps}")
        if self.frame_stride < 0:
            raise ValueError(f"frame_stride must be >= 0; got {self.frame_stride}")
        check_nonnegative("initial", self.initial.values, 0.0)
        if float(np.sum(self.initial.values)) <= 0.0:
            raise ValueError("initial density must have positive mass")


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step record; `mass` is the raw h^2-weighted sum of U."""

    step: int
    mass: float
    min_u: float
    max_u: float
    inner_iterations: int
    converged: bool
    rel_update_final: float
    max_constraint_violation: float
    l2_change: float

    def to_row(self) -> Dict[str, Union[int, float, bool]]:
        return {
            "step": self.step,
            "mass": self.mass,
            "min_u": self.min_u,
            "max_u": self.max_u,
            "inner_iterations": self.inner_iterations,
            "converged": self.converged,
            "rel_update": self.rel_update_final,
            "max_constraint_violation": self.max_constraint_violation,
            "l2_change": self.l2_change,
        }


class FlowSink(Protocol):
    """Consumer of the diagnostics stream and frames, called from the run's thread."""

    def record(self, diag: StepDiagnostics) -> None: ...

    def frame(self, step: int, U: ScalarField) -> None: ...


@dataclass
class CollectingSink:
    """Keeps diagnostics and frames in memory."""

    diagnostics: List[StepDiagnostics] = field(default_factory=list)
    frames: Dict[int, ScalarField] = field(default_factory=dict)

    def record(self, diag: StepDiagnostics) -> None:
        self.diagnostics.append(diag)

    def frame(self, step: int, U: ScalarField) -> None:
        self.frames[step] = U


@dataclass(frozen=True, eq=False)
class FlowResult:
    """
    Attributes:
        final: U after the last step.
        P: Dual variable of the last step.
        diagnostics: One record per step.
        newton_iterations: Cumulative inner iterations over the run.
    """

    final: ScalarField
    P: VectorField
    diagnostics: List[StepDiagnostics]
    newton_iterations: int


def normalize_mass(u: ScalarField, h: Optional[float] = None) -> ScalarField:
    """
    Scale u so that h^2 * sum(u) == 1.

    Raises:
        PositivityError: if u has negative entries.
        ValueError: if u has zero mass.
    """
    h = u.grid.h if h is None else h
    check_nonnegative("u", u.values, 0.0)
    total = mass(u, h)
    if total <= 0.0:
        raise ValueError("cannot normalise a field with zero mass")
    if total == 1.0:
        return u
    return u.with_values(u.values * (1.0 / total))


def _clamp_renormalize(U: ScalarField, target_sum: float) -> ScalarField:
    clamped = np.maximum(U.values, 0.0)
    n_neg = int(np.count_nonzero(U.values < 0.0))
    if n_neg:
        logger.warning(
            "clamped %d negative pixels (min %.3e)", n_neg, float(U.values.min())
        )
    total = float(np.sum(clamped))
    if total > 0.0:
        clamped = clamped * (target_sum / total)
    return U.with_values(clamped)


def evolve(run: FlowRun, sink: Optional[FlowSink] = None) -> FlowResult:
    """
    Evolve run.initial through run.n_steps implicit steps.

    Raises:
        FlowAbortedError: on strict-mode non-convergence, linear solver
            failure or loss of positivity; carries the 1-based step index.
    """
    cfg = run.config
    sink = sink if sink is not None else CollectingSink()
    h = run.initial.grid.h
    U = run.initial
    P: VectorField = VectorField.zeros(U.grid)
    diagnostics: List[StepDiagnostics] = []
    newton_iterations = 0

    if run.frame_stride:
        sink.frame(0, U)

    for n in range(run.n_steps):
        step = n + 1
        try:
            U_next, _, P, report = solve_inner(U, P, cfg)
        except NewtonSolveError as exc:
            raise FlowAbortedError(step, str(exc)) from exc
        except PositivityError as exc:
            raise FlowAbortedError(step, str(exc)) from exc

        if not report.converged and run.strict:
            raise FlowAbortedError(
                step,
                f"inner solve did not converge in {report.iterations_used} iterations",
            )
        if run.clamp_renormalize:
            U_next = _clamp_renormalize(U_next, float(np.sum(U.values)))

        newton_iterations += report.iterations_used
        diag = StepDiagnostics(
            step=step,
            mass=mass(U_next, h),
            min_u=float(U_next.values.min()),
            max_u=float(U_next.values.max()),
            inner_iterations=report.iterations_used,
            converged=report.converged,
            rel_update_final=report.final_rel_update,
            max_constraint_violation=report.max_constraint_violation,
            l2_change=float(np.linalg.norm(U_next.values - U.values)),
        )
        diagnostics.append(diag)
        sink.record(diag)
        if run.frame_stride and step % run.frame_stride == 0:
            sink.frame(step, U_next)
        if run.log_every and step % run.log_every == 0:
            logger.info(
                "step %d/%d mass=%.12g min=%.3e max=%.3e newton=%d",
                step,
                run.n_steps,
                diag.mass,
                diag.min_u,
                diag.max_u,
                diag.inner_iterations,
            )
        U = U_next

    return FlowResult(
        final=U, P=P, diagnostics=diagnostics, newton_iterations=newton_iterations
    )


def diagnostics_frame(diagnostics: List[StepDiagnostics]) -> pd.DataFrame:
    """Diagnostics as a DataFrame with the frozen column order."""
    return pd.DataFrame([d.to_row() for d in diagnostics], columns=DIAGNOSTICS_COLUMNS)


def write_diagnostics_csv(
    diagnostics: List[StepDiagnostics], path: Union[str, Path]
) -> None:
    """Write the diagnostics CSV with round-trip float formatting."""
    diagnostics_frame(diagnostics).to_csv(path, index=False, float_format="%.17g")
