"""
Configuration settings for the Poincaré–Perron asymptotics toolkit.

This module handles all environment variables and numerical defaults,
providing a centralized configuration management system. Per-run problem
data (equation, perturbations, grid) lives in TOML run configs validated by
models.schemas.RunConfig; the values here are the process-wide defaults.
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

VERSION = "1.0.0"


class Config:
    """
    Application configuration class.

    Reads logging options, algebra caps, quadrature, Picard and integrator
    defaults from the environment. Values are read when the instance is
    created, so a fresh ``Config()`` picks up a patched environment.
    """

    def __init__(self):
        # Logging configuration
        self.LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
        self.LOG_DIR: str = os.getenv("LOG_DIR", "logs")

        # Bell polynomial cache cap
        self.BELL_MAX_ORDER: int = int(os.getenv("BELL_MAX_ORDER", "16"))

        # Root finding
        self.ROOT_TOL: float = float(os.getenv("ROOT_TOL", "1e-10"))
        self.ROOT_MAX_ITER: int = int(os.getenv("ROOT_MAX_ITER", "500"))
        self.REAL_PART_TOL: float = float(os.getenv("REAL_PART_TOL", "1e-8"))

        # Quadrature
        self.QUAD_PANEL_ORDER: int = int(os.getenv("QUAD_PANEL_ORDER", "8"))
        self.QUAD_PANEL_WIDTH: float = float(os.getenv("QUAD_PANEL_WIDTH", "0.5"))
        self.QUAD_TAIL_TOL: float = float(os.getenv("QUAD_TAIL_TOL", "1e-12"))
        self.QUAD_MAX_INTERVAL: float = float(os.getenv("QUAD_MAX_INTERVAL", "200"))

        # Picard iteration and theta ladder
        self.PICARD_TOL: float = float(os.getenv("PICARD_TOL", "1e-10"))
        self.PICARD_MAX_ITER: int = int(os.getenv("PICARD_MAX_ITER", "200"))
        self.PICARD_BALL_RADIUS: float = float(os.getenv("PICARD_BALL_RADIUS", "1.0"))
        self.LADDER_MAX_DEPTH: int = int(os.getenv("LADDER_MAX_DEPTH", "4"))

        # Reference integrator
        self.RK_STEP: float = float(os.getenv("RK_STEP", "0.01"))
        self.RESCALE_THRESHOLD: float = float(os.getenv("RESCALE_THRESHOLD", "1e50"))
        self.ADJOINT_PAD: float = float(os.getenv("ADJOINT_PAD", "10"))

        self.RANDOM_SEED: int = int(os.getenv("RANDOM_SEED", "0"))

    def validate(self) -> None:
        """
        Validate configuration settings.

        Raises:
            ValueError: If a setting is out of its admissible range
        """
        if not 1 <= self.BELL_MAX_ORDER <= 16:
            raise ValueError("BELL_MAX_ORDER must be between 1 and 16")

        if self.QUAD_PANEL_ORDER < 4:
            raise ValueError("QUAD_PANEL_ORDER must be at least 4")

        for name in ("ROOT_TOL", "REAL_PART_TOL", "QUAD_TAIL_TOL", "PICARD_TOL"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

        for name in ("QUAD_PANEL_WIDTH", "QUAD_MAX_INTERVAL", "RK_STEP", "PICARD_BALL_RADIUS"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

        if self.PICARD_MAX_ITER < 1 or self.ROOT_MAX_ITER < 1:
            raise ValueError("iteration limits must be at least 1")

        if self.LADDER_MAX_DEPTH < 1:
            raise ValueError("LADDER_MAX_DEPTH must be at least 1")

        if self.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"LOG_LEVEL has unknown value {self.LOG_LEVEL!r}")


# Global configuration instance
config = Config()
