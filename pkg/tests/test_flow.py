"""Tests for tv_wasserstein.flow module."""

import dataclasses

import numpy as np
import pandas as pd
import pytest
from tv_wasserstein import flow as flow_module
from tv_wasserstein.flow import (
    DIAGNOSTICS_COLUMNS,
    CollectingSink,
    FlowAbortedError,
    FlowRun,
    diagnostics_frame,
    evolve,
    normalize_mass,
    write_diagnostics_csv,
)
from tv_wasserstein.grid_ops import Grid, PositivityError, ScalarField
from tv_wasserstein.imaging import gen_square, mass, support_area
from tv_wasserstein.linalg import LinearSolveError, assemble_grad_matrix
from tv_wasserstein.newton import NewtonSolveError, SolverConfig


def _phantom():
    """Square on a positive background, so no pixel starts at zero mobility."""
    return normalize_mass(gen_square(12, inside=2.0, outside=1.0))


def _constant_run(n_steps):
    return FlowRun(SolverConfig(), n_steps, ScalarField.constant(Grid(4, 4), 1.0))


class TestNormalizeMass:
    """Test normalize_mass."""

    def test_unit_mass_returns_same_object(self):
        """Test a field that already has unit mass is returned unchanged."""
        u = ScalarField.constant(Grid(4, 4, h=0.25), 1.0)
        assert normalize_mass(u) is u

    def test_unit_square_constant(self):
        """Test a constant on the unit square normalises to 1 / (h^2 n^2)."""
        grid = Grid.unit_square(9)
        u = normalize_mass(ScalarField.constant(grid, 3.0))
        expected = 1.0 / (grid.h**2 * grid.size)
        np.testing.assert_allclose(u.values, expected, rtol=1e-14)

    def test_random_field(self, rng):
        """Test random non-negative fields end up with mass 1."""
        grid = Grid(13, 7, h=0.3)
        u = normalize_mass(ScalarField(grid, rng.uniform(0.0, 5.0, grid.shape)))
        assert mass(u) == pytest.approx(1.0, abs=1e-14)

    def test_explicit_h(self):
        """Test the h argument overrides the grid step."""
        u = normalize_mass(ScalarField.constant(Grid(4, 4), 1.0), h=0.5)
        assert mass(u, 0.5) == pytest.approx(1.0)

    def test_zero_mass(self):
        """Test a zero field cannot be normalised."""
        with pytest.raises(ValueError, match="zero mass"):
            normalize_mass(ScalarField.zeros(Grid(3, 3)))

    def test_negative_entries(self):
        """Test negative entries are rejected."""
        values = np.ones((3, 3))
        values[0, 0] = -1.0
        with pytest.raises(PositivityError):
            normalize_mass(ScalarField(Grid(3, 3), values))


class TestFlowRun:
    """Test FlowRun validation."""

    def test_nonpositive_steps(self):
        """Test n_steps must be at least 1."""
        with pytest.raises(ValueError, match="n_steps must be a positive integer"):
            FlowRun(SolverConfig(), 0, ScalarField.constant(Grid(4, 4), 1.0))

    def test_negative_frame_stride(self):
        """Test frame_stride must be non-negative."""
        with pytest.raises(ValueError, match="frame_stride must be >= 0"):
            FlowRun(
                SolverConfig(),
                1,
                ScalarField.constant(Grid(4, 4), 1.0),
                frame_stride=-1,
            )

    def test_negative_initial(self):
        """Test the initial density must be non-negative."""
        values = np.ones((4, 4))
        values[2, 2] = -1e-3
        with pytest.raises(PositivityError):
            FlowRun(SolverConfig(), 1, ScalarField(Grid(4, 4), values))

    def test_empty_initial(self):
        """Test the initial density must carry mass."""
        with pytest.raises(ValueError, match="positive mass"):
            FlowRun(SolverConfig(), 1, ScalarField.zeros(Grid(4, 4)))


class TestEvolve:
    """Test the outer time loop."""

    def test_constant_is_steady(self):
        """Test a constant density does not move over 10 steps."""
        u0 = ScalarField.constant(Grid(8, 8), 0.5)
        sink = CollectingSink()
        result = evolve(FlowRun(SolverConfig(dt=1.0), 10, u0, frame_stride=1), sink)
        for frame in sink.frames.values():
            assert np.abs(frame.values - u0.values).max() <= 1e-10
        assert len(result.diagnostics) == 10
        for diag in result.diagnostics:
            assert diag.l2_change <= 1e-12
            assert diag.converged
        assert result.newton_iterations == 10

    def test_frames_follow_stride(self, square_config):
        """Test frames are emitted at step 0 and every stride steps."""
        sink = CollectingSink()
        u0 = _phantom()
        evolve(FlowRun(square_config, 4, u0, frame_stride=2), sink)
        assert sorted(sink.frames) == [0, 2, 4]
        assert sink.frames[0] is u0
        assert [d.step for d in sink.diagnostics] == [1, 2, 3, 4]

    def test_no_frames_by_default(self):
        """Test frame_stride 0 emits no frames."""
        sink = CollectingSink()
        evolve(_constant_run(1), sink)
        assert sink.frames == {}
        assert len(sink.diagnostics) == 1

    def test_mass_is_conserved(self, square_config):
        """Test the mass drift stays below 1e-8 on the square phantom."""
        u0 = _phantom()
        result = evolve(FlowRun(square_config, 3, u0))
        for diag in result.diagnostics:
            assert abs(diag.mass - 1.0) <= 1e-8
        assert mass(result.final) == pytest.approx(1.0, abs=1e-8)

    def test_deterministic(self, square_config):
        """Test two identical runs produce identical bits."""
        u0 = _phantom()
        a = evolve(FlowRun(square_config, 2, u0))
        b = evolve(FlowRun(square_config, 2, u0))
        assert np.array_equal(a.final.values, b.final.values)
        assert diagnostics_frame(a.diagnostics).equals(diagnostics_frame(b.diagnostics))

    def test_strict_aborts_on_non_convergence(self, square_config):
        """Test strict mode raises with the failing step index."""
        cfg = dataclasses.replace(square_config, max_inner=1, eps_tol=1e-14)
        run = FlowRun(cfg, 3, _phantom(), strict=True)
        with pytest.raises(FlowAbortedError, match="step 1") as info:
            evolve(run)
        assert info.value.step == 1

    def test_non_strict_continues(self, square_config):
        """Test non-convergence is recorded but not fatal by default."""
        cfg = dataclasses.replace(square_config, max_inner=1, eps_tol=1e-14)
        result = evolve(FlowRun(cfg, 2, _phantom()))
        assert [d.converged for d in result.diagnostics] == [False, False]
        assert [d.inner_iterations for d in result.diagnostics] == [1, 1]

    def test_clamp_keeps_density_nonnegative(self, square_config):
        """Test clamping leaves no negative pixel and restores the sum."""
        u0 = normalize_mass(gen_square(12))
        result = evolve(FlowRun(square_config, 2, u0, clamp_renormalize=True))
        assert result.final.values.min() >= 0.0
        assert result.final.values.sum() == pytest.approx(u0.values.sum(), rel=1e-12)

    def test_small_undershoot_does_not_abort(self, monkeypatch, square_config):
        """Test a negative pixel far inside the relative floor is carried on."""
        real_solve = flow_module.solve_inner

        def undershooting(U_n, P_warm, cfg):
            U, Q, P, report = real_solve(U_n, P_warm, cfg)
            values = U.values.copy()
            values[0, 0] = -1e-9 * values.max()
            return U.with_values(values), Q, P, report

        monkeypatch.setattr(flow_module, "solve_inner", undershooting)
        result = evolve(FlowRun(square_config, 3, _phantom()))
        assert len(result.diagnostics) == 3
        assert all(d.min_u < 0.0 for d in result.diagnostics)

    def test_newton_failure_aborts(self, monkeypatch):
        """Test a linear solver failure surfaces as FlowAbortedError."""

        def failing(U_n, P_warm, cfg):
            raise NewtonSolveError(0, 1.0, LinearSolveError("singular", 1.0, "direct"))

        monkeypatch.setattr(flow_module, "solve_inner", failing)
        run = FlowRun(SolverConfig(), 2, ScalarField.constant(Grid(4, 4), 1.0))
        with pytest.raises(FlowAbortedError, match="step 1") as info:
            evolve(run)
        assert isinstance(info.value.__cause__, NewtonSolveError)

    def test_positivity_failure_aborts(self, monkeypatch):
        """Test a positivity breach surfaces as FlowAbortedError."""

        def failing(U_n, P_warm, cfg):
            raise PositivityError("U_n", -1.0, 1e-12)

        monkeypatch.setattr(flow_module, "solve_inner", failing)
        run = FlowRun(SolverConfig(), 2, ScalarField.constant(Grid(4, 4), 1.0))
        with pytest.raises(FlowAbortedError) as info:
            evolve(run)
        assert isinstance(info.value.__cause__, PositivityError)


class TestDiagnosticsOutput:
    """Test the diagnostics table and CSV."""

    def test_frame_columns(self):
        """Test the DataFrame keeps the frozen column order."""
        result = evolve(_constant_run(2))
        df = diagnostics_frame(result.diagnostics)
        assert list(df.columns) == DIAGNOSTICS_COLUMNS
        assert df["step"].tolist() == [1, 2]

    def test_csv_header(self, tmp_path):
        """Test the CSV header line and row count."""
        result = evolve(_constant_run(2))
        path = tmp_path / "diagnostics.csv"
        write_diagnostics_csv(result.diagnostics, path)
        lines = path.read_text().splitlines()
        assert lines[0] == (
            "step,mass,min_u,max_u,inner_iterations,converged,rel_update,"
            "max_constraint_violation,l2_change"
        )
        assert len(lines) == 3
        df = pd.read_csv(path)
        assert df["mass"].tolist() == [d.mass for d in result.diagnostics]


@pytest.mark.slow
class TestSquareAcceptance:
    """Long run of the flow on the 64x64 square."""

    def test_square_spreads_and_conserves_mass(self):
        """Test mass, support growth and the decreasing maximum over 100 steps."""
        cfg = SolverConfig(dt=1.0, eps=1e-3, tau0=1.0, eps_tol=1e-6, max_inner=50)
        u0 = normalize_mass(gen_square(64))
        sink = CollectingSink()
        result = evolve(FlowRun(cfg, 100, u0, frame_stride=1), sink)

        m0 = mass(u0)
        for diag in result.diagnostics:
            assert abs(diag.mass - m0) <= 1e-8 * m0
        areas = [support_area(sink.frames[s]) for s in range(0, 101, 10)]
        assert all(b >= a for a, b in zip(areas, areas[1:]))
        assert areas[-1] >= 1.05 * areas[0]
        assert result.final.values.max() < u0.values.max()

        G = assemble_grad_matrix(u0.grid)
        for diag in result.diagnostics:
            if not diag.converged:
                continue
            grad_inf = float(np.abs(G @ sink.frames[diag.step].flat).max())
            bound = cfg.eps * grad_inf * (1 + 10 * cfg.eps_tol)
            assert diag.max_constraint_violation <= bound
