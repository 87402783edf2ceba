"""Tests for tv_wasserstein.tv_baseline module."""

import numpy as np
import pytest
from tv_wasserstein.flow import CollectingSink, FlowRun, evolve, normalize_mass
from tv_wasserstein.grid_ops import Grid, ScalarField
from tv_wasserstein.imaging import add_gaussian_noise, gen_pyramid, mass, psnr
from tv_wasserstein.newton import SolverConfig
from tv_wasserstein.tv_baseline import (
    TvDenoiseConfig,
    TvSolution,
    denoise_tv,
    rof_reference,
    staircase_metric,
)


def _step_image(n=16):
    values = np.zeros((n, n))
    values[:, n // 2 :] = 1.0
    return ScalarField(Grid(n, n), values)


class TestTvDenoiseConfig:
    """Test TvDenoiseConfig validation."""

    def test_defaults(self):
        """Test the default weight."""
        assert TvDenoiseConfig().alpha == 0.05

    def test_nonpositive_alpha(self):
        """Test alpha must be positive."""
        with pytest.raises(ValueError, match="alpha must be > 0"):
            TvDenoiseConfig(alpha=0.0)

    def test_tau_decay(self):
        """Test tau_decay must lie inside (0, 1)."""
        with pytest.raises(ValueError, match="tau_decay must lie in"):
            TvDenoiseConfig(tau_decay=0.0)

    def test_linear_method(self):
        """Test unknown linear methods are rejected."""
        with pytest.raises(ValueError, match="method must be"):
            TvDenoiseConfig(linear_method="jacobi")


class TestDenoiseTv:
    """Test the primal-dual Newton TV denoiser."""

    def test_constant_image_is_unchanged(self):
        """Test a constant image is returned as is."""
        f = ScalarField.constant(Grid(8, 8), 0.3)
        result = denoise_tv(f, TvDenoiseConfig(alpha=0.5))
        assert isinstance(result, TvSolution)
        assert np.array_equal(result.u.values, f.values)
        assert result.report.converged
        assert result.report.iterations_used == 1

    def test_tiny_alpha_keeps_data(self, rng):
        """Test alpha = 1e-8 leaves the data essentially untouched."""
        f = ScalarField(Grid(8, 8), rng.uniform(0.0, 1.0, (8, 8)))
        result = denoise_tv(f, TvDenoiseConfig(alpha=1e-8))
        err = float(np.abs(result.u.values - f.values).max())
        assert err <= 1e-6 * float(np.abs(f.values).max())

    def test_mean_is_preserved(self, rng):
        """Test the denoised image keeps the mean of the data."""
        f = ScalarField(Grid(10, 10), rng.uniform(0.0, 1.0, (10, 10)))
        cfg = TvDenoiseConfig(alpha=0.1)
        result = denoise_tv(f, cfg)
        assert result.u.values.mean() == pytest.approx(f.values.mean(), abs=1e-12)

    def test_step_plateaus(self):
        """Test a two-level step shrinks by alpha / 8 on each side."""
        cfg = TvDenoiseConfig(alpha=1.0, eps=1e-6, eps_tol=1e-10)
        result = denoise_tv(_step_image(), cfg)
        u = result.u.values
        np.testing.assert_allclose(u[:, :8], 0.125, atol=1e-4)
        np.testing.assert_allclose(u[:, 8:], 0.875, atol=1e-4)
        assert result.report.max_constraint_violation <= 1e-4

    def test_step_matches_rof_reference(self):
        """Test agreement with the exact dual least-squares solution."""
        f = _step_image()
        cfg = TvDenoiseConfig(alpha=1.0, eps=1e-6, eps_tol=1e-10)
        u = denoise_tv(f, cfg).u.values
        ref = rof_reference(f, 1.0).values
        assert float(np.abs(u - ref).max()) <= 1e-4


class TestRofReference:
    """Test the bounded least-squares oracle."""

    def test_step(self):
        """Test the oracle reproduces the analytic plateaus."""
        ref = rof_reference(_step_image(), 1.0).values
        np.testing.assert_allclose(ref[:, :8], 0.125, atol=1e-8)
        np.testing.assert_allclose(ref[:, 8:], 0.875, atol=1e-8)

    def test_rejects_nonpositive_alpha(self):
        """Test alpha must be positive."""
        with pytest.raises(ValueError, match="alpha must be > 0"):
            rof_reference(_step_image(8), 0.0)


class TestStaircaseMetric:
    """Test the flat-pixel fraction."""

    def test_constant_is_fully_flat(self):
        """Test a constant image scores 1."""
        assert staircase_metric(ScalarField.constant(Grid(6, 6), 2.0)) == 1.0

    def test_ramp_has_no_flat_pixels(self):
        """Test a linear ramp scores 0."""
        i, j = np.meshgrid(np.arange(6.0), np.arange(6.0), indexing="ij")
        assert staircase_metric(ScalarField(Grid(6, 6), i + j)) == 0.0

    def test_step_fraction(self):
        """Test only the column next to the jump is not flat."""
        # 14x14 interior pixels; column 7 carries the jump
        assert staircase_metric(_step_image()) == pytest.approx(13.0 / 14.0)

    def test_border_is_ignored(self):
        """Test jumps next to the first row and column are not scored."""
        values = np.zeros((6, 6))
        values[0, :] = 1.0
        values[:, 0] = 1.0
        assert staircase_metric(ScalarField(Grid(6, 6), values)) == 1.0

    def test_reference_selects_sloped_pixels(self):
        """Test a ramp reference counts every pixel of a constant result."""
        i, j = np.meshgrid(np.arange(6.0), np.arange(6.0), indexing="ij")
        ramp = ScalarField(Grid(6, 6), i + j)
        flat = ScalarField.constant(Grid(6, 6), 1.0)
        assert staircase_metric(flat, reference=ramp) == 1.0
        assert staircase_metric(ramp, reference=ramp) == 0.0

    def test_flat_reference_selects_nothing(self):
        """Test a constant reference leaves no pixel to score."""
        flat = ScalarField.constant(Grid(6, 6), 1.0)
        assert staircase_metric(flat, reference=flat) == 0.0

    def test_empty_mask(self):
        """Test an all-false mask scores 0."""
        flat = ScalarField.constant(Grid(6, 6), 1.0)
        assert staircase_metric(flat, mask=np.zeros((6, 6), dtype=bool)) == 0.0


def _noisy_pyramid(n=64):
    clean = ScalarField(Grid(n, n), gen_pyramid(n).values)
    return clean, add_gaussian_noise(clean, 0.001, seed=1)


def _best_tv(noisy, clean):
    results = []
    for alpha in (0.01, 0.02, 0.05):
        u = denoise_tv(noisy, TvDenoiseConfig(alpha=alpha, eps=1e-5)).u
        results.append((psnr(u, clean), u))
    return max(results, key=lambda item: item[0])


def _best_flow(noisy, clean, dt=1e-3, n_steps=12):
    u0 = noisy.with_values(np.maximum(noisy.values, 0.0))
    scale = mass(u0)
    cfg = SolverConfig(dt=dt, eps=1e-5, tau0=1.0)
    sink = CollectingSink()
    run = FlowRun(
        cfg, n_steps, normalize_mass(u0), clamp_renormalize=True, frame_stride=1
    )
    evolve(run, sink)
    results = []
    for step, frame in sink.frames.items():
        if step == 0:
            continue
        u = frame.with_values(frame.values * scale)
        results.append((psnr(u, clean), u))
    return max(results, key=lambda item: item[0])


@pytest.mark.slow
class TestPyramidDenoising:
    """Denoising of the noisy 64x64 pyramid."""

    def test_tv_psnr_improves(self):
        """Test the best TV weight beats the noisy input."""
        clean, noisy = _noisy_pyramid()
        best_psnr, _ = _best_tv(noisy, clean)
        assert best_psnr > psnr(noisy, clean)

    def test_flow_keeps_faces_sloped(self):
        """Test the flow denoises with fewer flat pixels on the faces than TV."""
        clean, noisy = _noisy_pyramid()
        noisy_psnr = psnr(noisy, clean)
        tv_psnr, tv_u = _best_tv(noisy, clean)
        flow_psnr, flow_u = _best_flow(noisy, clean)
        assert tv_psnr > noisy_psnr
        assert flow_psnr > noisy_psnr
        tv_stairs = staircase_metric(tv_u, reference=clean)
        flow_stairs = staircase_metric(flow_u, reference=clean)
        assert flow_stairs < tv_stairs
