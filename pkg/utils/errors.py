"""
Exception hierarchy shared by the services and the command line.

The three direct children of ToolkitError fix the process exit code:
configuration problems exit with 2, numerical failures with 3 and failed
acceptance checks with 4. Service modules derive their own exceptions
from these.
"""


class ToolkitError(Exception):
    """Base exception for the toolkit."""
    exit_code = 1


class ConfigError(ToolkitError):
    """Invalid run configuration or environment settings."""
    exit_code = 2


class NumericalError(ToolkitError):
    """A numerical stage failed or a precondition of the theory is violated."""
    exit_code = 3


class AcceptanceError(ToolkitError):
    """A validation check ran but did not meet its tolerance."""
    exit_code = 4


class StageError(NumericalError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
