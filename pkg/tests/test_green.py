"""
Tests for the scalar and composite Green operators.

Closed forms for f = e^{-s}, the ODE identity z' - w z = f, and D(G[f]) = f
for the composite operator.
"""

import warnings

import numpy as np
import pytest

from models.schemas import QuadConfig
from services.charpoly import spectral_data
from services.green import (
    GreenError,
    GreenOperator,
    GridFunction,
    TruncationWarning,
    composite_green,
    composite_stack,
    kernel,
    scalar_abs,
    scalar_green,
    tail_bound,
)


def decaying(s):
    return np.exp(-np.asarray(s, dtype=float)) + 0j


def exact_green(omega, t, t0):
    """G_w[e^{-s}] on [t0, inf)."""
    value = -np.exp(-t) / (omega + 1)
    if np.real(omega) < 0:
        value = value + np.exp(omega * (t - t0)) * np.exp(-t0) / (omega + 1)
    return value


@pytest.fixture
def q():
    return QuadConfig()


class TestScalarGreen:
    """Test pointwise G_w and I_w."""

    @pytest.mark.parametrize("omega", [-2.0, -0.5, 0.5, 2.0 + 1j, -1.5 - 2j])
    def test_closed_form(self, q, omega):
        """Test G_w[e^{-s}] against the closed form."""
        for t in (1.0, 2.5, 4.0):
            assert scalar_green(omega, decaying, t, q, 1.0) == pytest.approx(
                exact_green(omega, t, 1.0), abs=1e-9
            )

    def test_abs_depends_on_real_part_only(self, q):
        """Test that I_w ignores Im w."""
        f = lambda s: np.cos(np.asarray(s)) * np.exp(-np.asarray(s)) + 0j
        assert scalar_abs(0.7 + 3j, f, 2.0, q, 1.0) == pytest.approx(scalar_abs(0.7, f, 2.0, q, 1.0))
        assert scalar_abs(-0.7, f, 2.0, q, 1.0) >= abs(scalar_green(-0.7, f, 2.0, q, 1.0))

    def test_kernel_support(self):
        """Test the one-sided support of the kernel."""
        assert kernel(-1.0, 2.0, 1.0) == pytest.approx(np.exp(-1.0))
        assert kernel(-1.0, 1.0, 2.0) == 0
        assert kernel(1.0, 1.0, 2.0) == pytest.approx(-np.exp(-1.0))
        assert kernel(1.0, 2.0, 1.0) == 0

    def test_zero_real_part(self, q):
        """Test that Re w = 0 is rejected."""
        with pytest.raises(GreenError):
            scalar_green(2j, decaying, 1.0, q, 0.0)

    def test_tail_bound_is_grid_aligned(self, q):
        """Test the tail cut for w = 1 and a flat envelope."""
        cut = tail_bound(1.0, lambda s: np.ones_like(s), 3.0, 1e-6, q)
        assert (cut - 3.0) / q.panel_width == pytest.approx(round((cut - 3.0) / q.panel_width))
        assert np.exp(-(cut - 3.0)) < 1e-6

    def test_truncation_warning(self):
        """Test that an unreachable tail tolerance warns and carries the bound."""
        q = QuadConfig(max_interval=2.0)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cut = tail_bound(0.1, lambda s: np.ones_like(s), 0.0, 1e-12, q)
        assert cut == pytest.approx(2.0)
        assert any(isinstance(w.message, TruncationWarning) for w in caught)


class TestGreenOperator:
    """Test the grid recurrences."""

    @pytest.mark.parametrize("omega", [-2.0, -0.5, 0.5, 2.0 + 1j])
    def test_matches_closed_form(self, q, omega):
        """Test grid values against the closed form."""
        grid = np.linspace(1.0, 6.0, 51)
        op = GreenOperator.for_spectrum(grid, q, [np.real(omega)], envelope=decaying)
        values = op.green(omega, decaying(op.nodes), decaying(op.tail_nodes))
        assert np.max(np.abs(values - exact_green(omega, grid, 1.0))) < 1e-6

    def test_ode_identity(self, q):
        """Test z' - w z = f for a complex w with negative real part."""
        grid = np.linspace(0.0, 4.0, 401)
        omega = -1.0 + 2j
        f = lambda s: np.sin(np.asarray(s)) + 0j
        op = GreenOperator(grid, q)
        z = op.green(omega, f(op.nodes))
        dz = np.gradient(z, grid)
        inner = slice(5, -5)
        assert np.max(np.abs(dz[inner] - omega * z[inner] - f(grid[inner]))) < 1e-3

    def test_integral_and_tail(self, q):
        """Test the cumulative and tail integrals of e^{-s}."""
        grid = np.linspace(0.0, 3.0, 13)
        op = GreenOperator(grid, q, t_cut=40.0)
        cumulative = op.integral(decaying(op.nodes))
        assert np.allclose(cumulative, 1 - np.exp(-grid))
        tail = op.tail_integral(decaying(op.nodes), decaying(op.tail_nodes))
        assert np.allclose(tail, np.exp(-grid), atol=1e-12)

    def test_green_abs_is_nonnegative(self, q):
        """Test I_alpha of an oscillating function."""
        grid = np.linspace(0.0, 5.0, 21)
        op = GreenOperator.for_spectrum(grid, q, [1.0])
        f = np.sin(3 * op.all_nodes)
        inner, tail = op.split(f)
        for alpha in (-1.0, 1.0):
            assert np.all(op.green_abs(alpha, inner, tail) >= 0)

    def test_bad_grid(self, q):
        """Test that grids must increase."""
        with pytest.raises(GreenError):
            GreenOperator([0.0, 1.0, 1.0], q)


class TestComposite:
    """Test the composite operator of D."""

    def test_inverts_constant_coefficient_operator(self, q):
        """Test D(G[f]) = f for the shifted spectrum (-2, -1, 1, 2)."""
        s = spectral_data([-2, -1, 0, 1, 2], 0)
        grid = np.linspace(0.0, 6.0, 61)
        op = GreenOperator.for_spectrum(grid, q, s.alphas, envelope=decaying)
        f_nodes, f_tail = decaying(op.nodes), decaying(op.tail_nodes)
        stack = composite_stack(s, op.components(s, f_nodes, f_tail), decaying(grid))
        # P_D(x) = x^4 - 5x^2 + 4: z'''' - 5 z'' + 4 z
        assert stack.shape == (5, 61)
        assert np.allclose(stack[4] - 5 * stack[2] + 4 * stack[0], decaying(grid), atol=1e-8)

    def test_derivative_rows(self, q):
        """Test that row i+1 is the derivative of row i."""
        s = spectral_data([-2, -1, 0, 1, 2], 0)
        grid = np.linspace(0.0, 6.0, 601)
        op = GreenOperator.for_spectrum(grid, q, s.alphas, envelope=decaying)
        stack = composite_stack(s, op.components(s, decaying(op.nodes), decaying(op.tail_nodes)), decaying(grid))
        for i in range(3):
            dz = np.gradient(stack[i], grid)
            assert np.max(np.abs(dz[5:-5] - stack[i + 1][5:-5])) < 1e-3

    def test_pointwise_agrees_with_grid(self, q):
        """Test composite_green against the grid operator at one point."""
        s = spectral_data([-1, 0, 2], 0)
        grid = np.linspace(0.0, 4.0, 41)
        op = GreenOperator.for_spectrum(grid, q, s.alphas, envelope=decaying)
        stack = composite_stack(s, op.components(s, decaying(op.nodes), decaying(op.tail_nodes)), decaying(grid))
        for i in range(3):
            value = composite_green(s, decaying, 2.0, i, q, 0.0)
            assert value == pytest.approx(stack[i][20], abs=1e-8)


class TestGridFunction:
    """Test interpolation and extension of grid samples."""

    def test_interpolation(self):
        """Test that the spline reproduces a cubic."""
        grid = np.linspace(0, 2, 11)
        fn = GridFunction(grid, grid ** 2 + 0j)
        assert fn(0.55) == pytest.approx(0.55 ** 2, abs=1e-3)

    def test_envelope_extension(self):
        """Test that values past the grid follow the envelope."""
        grid = np.linspace(1, 2, 5)
        fn = GridFunction(grid, 3.0 / grid, envelope=lambda s: 1 / np.asarray(s))
        assert fn(4.0) == pytest.approx(3.0 / 4.0)

    def test_length_mismatch(self):
        """Test that grid and values must match."""
        with pytest.raises(GreenError):
            GridFunction(np.linspace(0, 1, 3), np.zeros(4))


if __name__ == "__main__":
    pytest.main([__file__])
