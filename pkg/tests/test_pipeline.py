"""
Tests for the pipeline service.
"""

import numpy as np
import pytest

from models.schemas import RunConfig
from services.pipeline import PipelineService, make_grid
from utils.errors import ConfigError, NumericalError, StageError


def second_order(**overrides):
    data = {
        "order": 2,
        "coefficients": [-1, 0],
        "perturbations": ["-0.5/t^2", "0"],
        "t0": 5.0,
        "t_end": 40.0,
        "step": 0.25,
        "lambda": -1.0,
    }
    data.update(overrides)
    return RunConfig.parse_obj(data)


class TestMakeGrid:
    """Test grid construction."""

    def test_uniform_grid(self):
        """Test that the grid ends exactly at t_end."""
        grid = make_grid(10.0, 50.0, 0.25)
        assert len(grid) == 161
        assert grid[0] == 10.0 and grid[-1] == 50.0

    def test_step_is_adjusted(self):
        """Test a step that does not divide the interval."""
        grid = make_grid(0.0, 1.0, 0.3)
        assert grid[-1] == 1.0
        assert len(grid) == 4


class TestPipelineService:
    """Test the staged run."""

    def test_build_selects_lambda(self):
        """Test explicit and indexed root selection."""
        pipeline = PipelineService(second_order())
        pipeline.build()
        assert pipeline.spectral.lam == pytest.approx(-1.0)
        assert pipeline.roots == pytest.approx([-1.0, 1.0])

        indexed = PipelineService(second_order(**{"lambda": "index:1"}))
        indexed.build()
        assert indexed.spectral.lam == pytest.approx(1.0)

    def test_bad_root_index(self):
        """Test that an index past the roots is a configuration error."""
        with pytest.raises(ConfigError, match="lambda"):
            PipelineService(second_order(**{"lambda": "index:5"})).build()

    def test_bad_expression(self):
        """Test that a malformed perturbation is a configuration error."""
        with pytest.raises(ConfigError, match="perturbations"):
            PipelineService(second_order(perturbations=["t+", "0"])).build()

    def test_stages_are_cached(self):
        """Test that repeated calls reuse the stage results."""
        pipeline = PipelineService(second_order())
        z = pipeline.solve()
        assert pipeline.solve() is z
        assert pipeline.contraction() is pipeline.contraction()
        assert z.converged

    def test_formula_and_ladder(self):
        """Test the configured and the requested formula."""
        pipeline = PipelineService(second_order(formula="levinson", ladder_depth=2))
        assert pipeline.formula().kind == "levinson"
        rep = pipeline.formula("ladder")
        assert [term.name for term in rep.components] == ["theta_1", "theta_2"]
        assert len(pipeline.ladder(3).thetas) == 3

    def test_refused_contraction_names_the_stage(self):
        """Test that a failing (cl0) surfaces as a picard stage error."""
        pipeline = PipelineService(second_order(perturbations=["0", "50/t"]))
        with pytest.raises(StageError) as caught:
            pipeline.solve()
        assert caught.value.stage == "picard"
        assert caught.value.exit_code == 3

    def test_stage_wraps_numerical_errors(self):
        """Test the stage context manager."""
        pipeline = PipelineService(second_order())
        with pytest.raises(StageError, match="reference"):
            with pipeline.stage("reference"):
                raise NumericalError("boom")
        with pytest.raises(ValueError):
            with pipeline.stage("reference"):
                raise ValueError("not numerical")

    def test_grid_follows_config(self):
        """Test the grid of the service."""
        pipeline = PipelineService(second_order(step=0.5))
        assert np.allclose(np.diff(pipeline.grid), 0.5)


if __name__ == "__main__":
    pytest.main([__file__])
