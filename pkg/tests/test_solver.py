"""
Tests for the Picard solver, the contraction constants and the theta ladder.
"""

import numpy as np
import pytest

from models.schemas import QuadConfig
from services.charpoly import find_roots, spectral_data
from services.example5 import example5_config
from services.perturb import PerturbedODE
from services.pipeline import PipelineService, make_grid
from services.riccati import RiccatiError, build_riccati, riccati_residual
from services.solver import (
    ContractionError,
    DivergenceError,
    LadderError,
    bound_check,
    certified_radius,
    contraction_constants,
    l1_tail,
    make_operator,
    picard_solve,
    theta_ladder,
)


def reduce(coeffs, perturbations, lam, t0=5.0, t_end=40.0, step=0.25):
    """Equation, spectral data, reduced system and grid for one root."""
    ode = PerturbedODE.from_strings(coeffs, perturbations, t0)
    s = spectral_data(find_roots(ode.charpoly()), lam)
    return ode, s, build_riccati(ode, s.lam), make_grid(t0, t_end, step)


class TestPicard:
    """Test the fixed-point iteration."""

    def test_unperturbed_gives_zero(self):
        """Test that r = 0 converges to z = 0 in one iteration."""
        _, s, sys, grid = reduce([-1, 0], ["0", "0"], -1.0)
        z = picard_solve(sys, s, grid)
        assert z.iterations == 1
        assert z.converged
        assert np.all(z.stack == 0)
        assert np.all(z.envelope == 0)

    def test_inverse_square_perturbation(self):
        """Test z ~ -c/(2t^2) for y'' = (1 + c/t^2) y at lambda = -1."""
        c = 0.5
        _, s, sys, grid = reduce([-1, 0], [f"-{c}/t^2", "0"], -1.0)
        report = contraction_constants(sys, s, 1.0, grid)
        assert report.cl0
        z = picard_solve(sys, s, grid, report=report)
        assert z.converged
        assert z.residual < 1e-8
        late = grid >= 20
        ratio = z.stack[0][late] * 2 * grid[late] ** 2 / (-c)
        assert np.all(np.abs(ratio - 1) < 0.1)

    def test_residual_of_reduced_equation(self):
        """Test the reduced equation at grid nodes using the Green top derivative."""
        _, s, sys, grid = reduce([-1, 0], ["-0.5/t^2", "0.2/t^2"], -1.0)
        z = picard_solve(sys, s, grid)
        for t in (6.0, 15.0, 30.0):
            assert abs(riccati_residual(sys, z, t)) < 1e-7
        with pytest.raises(RiccatiError):
            riccati_residual(sys, z, 50.0)

    def test_geometric_updates(self):
        """Test that updates shrink along the iteration."""
        _, s, sys, grid = reduce([-1, 0], ["-0.5/t^2", "0"], -1.0)
        z = picard_solve(sys, s, grid)
        assert z.update_history == sorted(z.update_history, reverse=True)
        assert all(ratio < 1 for ratio in z.update_ratios())

    def test_contraction_refused(self):
        """Test that a failing (cl0) stops the solve unless forced."""
        _, s, sys, grid = reduce([-1, 0], ["0", "50/t"], -1.0)
        report = contraction_constants(sys, s, 1.0, grid)
        assert not report.cl0
        assert report.L0 >= 1
        assert report.t_cl0 is not None and 20 < report.t_cl0 < 30
        with pytest.raises(ContractionError, match="cl0"):
            picard_solve(sys, s, grid, report=report)

    def test_divergence(self):
        """Test that a large perturbation makes the updates grow."""
        _, s, sys, grid = reduce([-1, 0], ["10", "0"], -1.0, t_end=15.0)
        with pytest.raises(DivergenceError):
            picard_solve(sys, s, grid, max_iter=50)

    def test_large_perturbation_fails_cl0_and_diverges(self):
        """Test that a large first-derivative perturbation breaks (cl0) and forced Picard diverges."""
        _, s, sys, grid = reduce([-1, 0], ["0", "50/t"], -1.0)
        report = contraction_constants(sys, s, 1.0, grid)
        assert report.cl0 is False
        assert report.certified_radius is None
        assert report.eps0_certified is None
        with pytest.raises(DivergenceError):
            picard_solve(sys, s, grid, report=report, force=True)

    def test_random_decaying_perturbations_contract(self):
        """Test observed update ratios against eps0 for random decaying third-order perturbations."""
        rng = np.random.default_rng(20)
        for _ in range(20):
            perturbations = []
            for _ in range(3):
                c = rng.uniform(0.02, 0.1) * rng.choice([-1.0, 1.0])
                p = rng.uniform(1.5, 2.5)
                perturbations.append(f"({c:.4f})*t^(-{p:.3f})")
            _, s, sys, grid = reduce([2, -1, -2], perturbations, 1.0, t0=5.0, t_end=30.0, step=0.5)
            report = contraction_constants(sys, s, 1.0, grid)
            assert report.cl0
            z = picard_solve(sys, s, grid, report=report)
            observed = max(z.update_ratios(), default=0.0)
            assert observed <= report.eps0 + 0.1
            assert report.eps0_certified < 1
            assert observed <= report.eps0_certified + 0.1

    def test_bound(self):
        """Test ||Z|| against the envelope bound."""
        _, s, sys, grid = reduce([-1, 0], ["-0.5/t^2", "0"], -1.0)
        report = contraction_constants(sys, s, 1.0, grid)
        z = picard_solve(sys, s, grid, report=report)
        bound = bound_check(z, s, report)
        assert bound["holds"]
        assert bound["certified"] == (report.K < 0.5)
        assert bound["N"] >= 1


class TestContractionConstants:
    """Test the constants of the contraction argument."""

    def test_linear_in_perturbation(self):
        """Test that doubling r doubles L0."""
        ode, s, sys, grid = reduce([-1, 0], ["1/t^2", "1/t^2"], 1.0)
        single = contraction_constants(sys, s, 1.0, grid)
        double = contraction_constants(build_riccati(ode.scaled(2.0), s.lam), s, 1.0, grid)
        assert double.L0 == pytest.approx(2 * single.L0, rel=1e-6)
        assert double.L_beta == pytest.approx(2 * single.L_beta, rel=1e-6)

    def test_zero_perturbation(self):
        """Test the constants of the unperturbed equation."""
        _, s, sys, grid = reduce([0, 4, 0, -5, 0], ["0"] * 5, 1.0, t0=10.0, t_end=20.0, step=0.5)
        report = contraction_constants(sys, s, 1.0, grid)
        assert report.L0 == 0
        assert report.cl0 and report.cl
        assert report.gamma_tilde == pytest.approx(s.gamma_tilde)
        assert report.eps0 == pytest.approx(report.m_M * report.Q0)
        assert 0 < report.certified_radius <= report.M
        assert report.eps0_certified <= 0.5 + 1e-9
        assert report.summary()["eps0_certified"] == report.eps0_certified

    def test_certified_radius(self):
        """Test the radius where m(rho) Q0 + L0 stays at (1 + L0) / 2."""
        assert certified_radius(3, 1.0, 5.0, 1.0) is None
        assert certified_radius(3, 0.2, 0.0, 1.0) == 1.0
        wide = certified_radius(3, 0.2, 1.0, 1.0)
        narrow = certified_radius(3, 0.2, 10.0, 1.0)
        assert 0 < narrow < wide <= 1.0

    def test_rejects_nonpositive_radius(self):
        """Test that the ball radius must be positive."""
        _, s, sys, grid = reduce([-1, 0], ["0", "0"], 1.0)
        with pytest.raises(ValueError):
            contraction_constants(sys, s, 0.0, grid)


class TestThetaLadder:
    """Test the theta ladder."""

    def test_first_rung_is_first_iterate(self):
        """Test theta_1 = -G[P(r; lambda)] against one Picard step."""
        _, s, sys, grid = reduce([-1, 0], ["-0.5/t^2", "0.3/t"], -1.0)
        ladder = theta_ladder(sys, s, 1, grid)
        first = picard_solve(sys, s, grid, max_iter=1)
        assert np.allclose(ladder.thetas[0][0], first.stack[0], rtol=1e-12, atol=1e-15)

    def test_explicit_fifth_order_recursion_matches_generic(self):
        """Test the written-out n = 5 terms against the series recursion."""
        _, s, sys, grid = reduce(
            [0, 4, 0, -5, 0],
            ["(t^2+1)^(-1/3)", "(t^2+1)^(-1/3)", "0", "t^(-2/3)", "0"],
            1.0, t0=10.0, t_end=20.0, step=0.5,
        )
        q = QuadConfig()
        op = make_operator(sys, s, grid, q)
        explicit = theta_ladder(sys, s, 3, grid, q, explicit=True, op=op)
        generic = theta_ladder(sys, s, 3, grid, q, explicit=False, op=op)
        assert explicit.explicit and not generic.explicit
        for a, b in zip(explicit.thetas, generic.thetas):
            scale = np.max(np.abs(a))
            assert np.max(np.abs(a - b)) <= 1e-9 * scale

    def test_psi_closes_the_sum(self):
        """Test z = theta_1 + theta_2 + psi_2."""
        _, s, sys, grid = reduce([-1, 0], ["-0.5/t^2", "0"], -1.0)
        z = picard_solve(sys, s, grid)
        ladder = theta_ladder(sys, s, 2, grid, z=z)
        total = ladder.partial_sum(2)[0] + ladder.psi[0]
        assert np.allclose(total, z.stack[0])
        # the second rung is an order smaller than the first
        assert np.max(np.abs(ladder.thetas[1][0])) < np.max(np.abs(ladder.thetas[0][0]))

    @pytest.mark.parametrize("scale", [1.0, 0.5])
    def test_second_correction_has_smaller_tail(self, scale):
        """Test that psi_2 has a smaller L1 tail than psi_1 on the fifth-order family."""
        run = example5_config()
        run = run.copy(update={"perturbations": [f"{scale}*({r})" for r in run.perturbations]})
        pipeline = PipelineService(run)
        first = pipeline.ladder(1).psi[0]
        second = pipeline.ladder(2).psi[0]
        assert l1_tail(pipeline.grid, second) < l1_tail(pipeline.grid, first)

    def test_depth_checks(self):
        """Test the depth and recursion-kind guards."""
        _, s, sys, grid = reduce([-1, 0], ["-0.5/t^2", "0"], -1.0)
        with pytest.raises(LadderError):
            theta_ladder(sys, s, 0, grid)
        with pytest.raises(LadderError, match="n = 5"):
            theta_ladder(sys, s, 2, grid, explicit=True)
        with pytest.raises(LadderError, match="cap"):
            theta_ladder(sys, s, 9, grid)


class TestL1Tail:
    """Test the trapezoid tail integral."""

    def test_constant(self):
        """Test the tail integral of a constant."""
        grid = np.linspace(0, 10, 101)
        assert l1_tail(grid, np.ones(101)) == pytest.approx(5.0)


if __name__ == "__main__":
    pytest.main([__file__])
