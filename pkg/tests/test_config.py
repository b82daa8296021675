"""
Tests for configuration management.

This module contains tests for the configuration validation
and environment variable handling.
"""

import os
from unittest.mock import patch

import pytest

from config import Config


class TestConfig:
    """Test configuration management."""

    def test_config_validation_success(self):
        """Test successful configuration validation with defaults."""
        with patch.dict(os.environ, {}, clear=True):
            config = Config()
            # Should not raise any exception
            config.validate()

    def test_config_validation_bell_cap(self):
        """Test validation failure with a Bell cache cap above 16."""
        with patch.dict(os.environ, {'BELL_MAX_ORDER': '17'}):
            config = Config()
            with pytest.raises(ValueError, match="BELL_MAX_ORDER"):
                config.validate()

    def test_config_validation_panel_order(self):
        """Test validation failure with a too small quadrature rule."""
        with patch.dict(os.environ, {'QUAD_PANEL_ORDER': '2'}):
            config = Config()
            with pytest.raises(ValueError, match="QUAD_PANEL_ORDER must be at least 4"):
                config.validate()

    def test_config_validation_negative_tolerance(self):
        """Test validation failure with a nonpositive Picard tolerance."""
        with patch.dict(os.environ, {'PICARD_TOL': '0'}):
            config = Config()
            with pytest.raises(ValueError, match="PICARD_TOL must be positive"):
                config.validate()

    def test_config_validation_invalid_step(self):
        """Test validation failure with a negative integrator step."""
        with patch.dict(os.environ, {'RK_STEP': '-0.1'}):
            config = Config()
            with pytest.raises(ValueError, match="RK_STEP must be positive"):
                config.validate()

    def test_config_validation_log_level(self):
        """Test validation failure with an unknown log level."""
        with patch.dict(os.environ, {'LOG_LEVEL': 'CHATTY'}):
            config = Config()
            with pytest.raises(ValueError, match="LOG_LEVEL"):
                config.validate()

    def test_default_values(self):
        """Test that default values are set correctly."""
        with patch.dict(os.environ, {}, clear=True):
            config = Config()

            assert config.LOG_LEVEL == "INFO"
            assert config.BELL_MAX_ORDER == 16
            assert config.QUAD_PANEL_ORDER == 8
            assert config.QUAD_PANEL_WIDTH == 0.5
            assert config.PICARD_TOL == 1e-10
            assert config.PICARD_MAX_ITER == 200
            assert config.LADDER_MAX_DEPTH == 4
            assert config.RK_STEP == 0.01
            assert config.RANDOM_SEED == 0

    def test_environment_override(self):
        """Test that environment variables override defaults."""
        with patch.dict(os.environ, {
            'PICARD_MAX_ITER': '50',
            'QUAD_PANEL_WIDTH': '0.25',
            'RK_STEP': '0.005',
            'LOG_LEVEL': 'DEBUG'
        }):
            config = Config()

            assert config.PICARD_MAX_ITER == 50
            assert config.QUAD_PANEL_WIDTH == 0.25
            assert config.RK_STEP == 0.005
            assert config.LOG_LEVEL == "DEBUG"


if __name__ == "__main__":
    pytest.main([__file__])
