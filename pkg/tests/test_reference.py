"""
Tests for the reference integrator and the checks built on it.
"""

import numpy as np
import pytest

from services.asympt import fundamental_solutions
from services.charpoly import vandermonde
from services.example5 import example5_config
from services.perturb import PerturbedODE
from services.pipeline import PipelineService, make_grid
from services.reference import (
    CompanionIntegrator,
    IntegrationError,
    fundamental_trajectories,
    log_derivative_profile,
    mode_solution,
    ode_residual,
    predicted_wronskian,
    reference_integrate,
    wronskian_check,
)


@pytest.fixture
def growth():
    """y'' = y."""
    return PerturbedODE.from_strings([-1, 0], ["0", "0"], 0.0)


class TestReferenceIntegrate:
    """Test the fixed-step Dormand-Prince integration."""

    def test_exponential(self, growth):
        """Test y = e^t from (1, 1)."""
        traj = reference_integrate(growth, [1, 1], (0.0, 5.0), h=0.01)
        exact = np.exp(traj.grid)
        assert np.max(np.abs(traj.values(0) - exact) / exact) < 1e-8
        assert np.max(np.abs(traj.values(1) - exact) / exact) < 1e-8
        assert traj.max_error < 1e-8

    def test_fifth_order_convergence(self, growth):
        """Test that halving the step cuts the error by more than 16."""
        errors = []
        for h in (0.25, 0.125):
            traj = reference_integrate(growth, [1, 1], (0.0, 5.0), h=h)
            errors.append(abs(traj.values(0)[-1] - np.exp(5.0)))
        assert errors[0] / errors[1] > 16

    def test_rescaling_keeps_log_scale(self, growth):
        """Test log |y| = t past the rescale threshold."""
        traj = reference_integrate(growth, [1, 1], (0.0, 150.0), h=0.1)
        assert traj.rescalings >= 1
        assert np.max(np.abs(traj.log_abs() - traj.grid)) < 1e-5

    def test_residual(self, growth):
        """Test the re-substitution residual of an accurate trajectory."""
        traj = reference_integrate(growth, [1, 1], (0.0, 5.0), h=0.01)
        assert ode_residual(growth, traj) < 1e-6

    def test_residual_across_rescalings(self, growth):
        """Test that rescaled stencils keep the residual small."""
        traj = reference_integrate(growth, [1, 1], (0.0, 150.0), h=0.1)
        assert traj.rescalings >= 1
        assert ode_residual(growth, traj) < 1e-4

    def test_bad_input(self, growth):
        """Test the input guards."""
        with pytest.raises(IntegrationError):
            reference_integrate(growth, [1, 1, 1], (0.0, 1.0))
        with pytest.raises(IntegrationError):
            reference_integrate(growth, [1, 1], (1.0, 1.0))
        with pytest.raises(IntegrationError):
            CompanionIntegrator(growth, h=-0.1)


class TestModeSolution:
    """Test the deflated solutions of recessive roots."""

    def test_recessive_mode(self, growth):
        """Test that the e^{-t} solution stays clean of e^t."""
        traj = mode_solution(growth, [-1, 1], 0, (0.0, 10.0), h=0.05)
        profile = log_derivative_profile(traj, 1)
        assert not np.any(profile.gaps)
        assert np.allclose(profile.values, -1.0, atol=1e-6)

    def test_dominant_mode_is_plain_integration(self, growth):
        """Test that the root of largest real part needs no deflation."""
        traj = mode_solution(growth, [-1, 1], 1, (0.0, 5.0), h=0.05)
        assert np.allclose(traj.values(0), np.exp(traj.grid), rtol=1e-7)

    def test_wronskian_limit(self, growth):
        """Test W / prod y_k against the Vandermonde product."""
        trajs = fundamental_trajectories(growth, [-1, 1], (0.0, 5.0), h=0.05)
        ratio = wronskian_check(trajs)
        assert vandermonde([-1, 1]) == pytest.approx(2.0)
        assert np.allclose(ratio.values, 2.0, atol=1e-6)

    def test_wronskian_needs_n_trajectories(self, growth):
        """Test that one trajectory of a second-order equation is refused."""
        traj = reference_integrate(growth, [1, 1], (0.0, 1.0), h=0.1)
        with pytest.raises(IntegrationError):
            wronskian_check([traj])


class TestPredictedWronskian:
    """Test the Wronskian limit predicted from the reduced-equation solutions."""

    def test_unperturbed_is_vandermonde(self):
        """Test that z = 0 for both roots gives the Vandermonde product."""
        ode = PerturbedODE.from_strings([-1, 0], ["0", "0"], 5.0)
        grid = make_grid(5.0, 20.0, 0.5)
        solutions = fundamental_solutions(ode, grid, roots=[-1, 1])
        predicted = predicted_wronskian(solutions)
        assert np.allclose(predicted.values, 2.0, atol=1e-10)

    def test_needs_one_solution_per_root(self):
        """Test that a single solution of a second-order equation is refused."""
        ode = PerturbedODE.from_strings([-1, 0], ["0", "0"], 5.0)
        solutions = fundamental_solutions(ode, make_grid(5.0, 20.0, 0.5), roots=[-1, 1])
        with pytest.raises(IntegrationError):
            predicted_wronskian(solutions[:1])

    def test_fifth_order_example(self):
        """Test the measured ratio against the prediction where the Vandermonde product is still off."""
        pipeline = PipelineService(example5_config())
        pipeline.build()
        grid = pipeline.grid
        trajs = fundamental_trajectories(pipeline.ode, pipeline.roots, (grid[0], grid[-1]), h=0.02)
        measured = wronskian_check(trajs)(grid)
        predicted = predicted_wronskian(
            fundamental_solutions(pipeline.ode, grid, pipeline.run.quad, pipeline.roots, force=True)
        ).values
        limit = vandermonde(pipeline.roots)

        tail = (grid >= 20.0) & (grid <= 40.0)
        assert np.max(np.abs(measured[tail] / predicted[tail] - 1)) < 0.02
        at_20 = int(np.argmin(np.abs(grid - 20.0)))
        assert abs(measured[at_20] / limit - 1) > 0.05


class TestLogDerivativeProfile:
    """Test y^(i)/y along a trajectory."""

    def test_zero_crossing_gap(self):
        """Test that y = sin t has a gap at t = 0."""
        ode = PerturbedODE.from_strings([1, 0], ["0", "0"], 0.0)
        traj = reference_integrate(ode, [0, 1], (0.0, 1.0), h=0.1)
        profile = log_derivative_profile(traj, 1)
        assert profile.gaps[0]
        assert not np.any(profile.gaps[1:])
        assert np.isnan(profile.values[0])
        with pytest.raises(IntegrationError):
            profile.grid_function()

    def test_index_range(self, growth):
        """Test that the derivative index must be below the order."""
        traj = reference_integrate(growth, [1, 1], (0.0, 1.0), h=0.1)
        with pytest.raises(IntegrationError):
            log_derivative_profile(traj, 2)


if __name__ == "__main__":
    pytest.main([__file__])
