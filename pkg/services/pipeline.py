"""
Pipeline service: one run configuration through every stage.

Stages run lazily and in order (build, contraction, picard, formula,
ladder); each result is cached on the service. A numerical failure inside a
stage is re-raised as StageError carrying the stage name.
"""

from contextlib import contextmanager
from typing import Iterator, List, Optional

import numpy as np

from models.schemas import ContractionReport, RunConfig
from services.asympt import AsymptoticReport, assemble
from services.charpoly import SpectralData, find_roots, spectral_data
from services.expression import ExprSyntaxError
from services.green import GreenOperator
from services.perturb import PerturbedODE
from services.riccati import RiccatiSystem, build_riccati
from services.solver import (
    LadderResult,
    ZSolution,
    contraction_constants,
    make_operator,
    picard_solve,
    theta_ladder,
)
from utils.errors import ConfigError, NumericalError, StageError
from utils.logger import get_logger

logger = get_logger("pipeline")


def make_grid(t0: float, t_end: float, step: float) -> np.ndarray:
    """Uniform grid from t0 to t_end; the step is shrunk to land on t_end."""
    count = max(1, int(round((t_end - t0) / step)))
    return np.linspace(t0, t_end, count + 1)


class PipelineService:
    """
    Runs the stages of one configuration.

    The service keeps every intermediate result so subcommands can report
    whatever stage they stop at.
    """

    def __init__(self, run: RunConfig):
        """
        Initialize the pipeline.

        Args:
            run: Validated run configuration
        """
        self.run = run
        self.grid = make_grid(run.t0, run.t_end, run.step)
        self.ode: Optional[PerturbedODE] = None
        self.roots: List[complex] = []
        self.spectral: Optional[SpectralData] = None
        self.system: Optional[RiccatiSystem] = None
        self.operator: Optional[GreenOperator] = None
        self._contraction: Optional[ContractionReport] = None
        self._solution: Optional[ZSolution] = None
        self._ladder: Optional[LadderResult] = None
        logger.info(f"PipelineService initialized for order {run.order} on [{run.t0}, {run.t_end}]")

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Tag failures inside the block with the stage name."""
        logger.debug(f"Stage '{name}' started")
        try:
            yield
        except StageError:
            raise
        except NumericalError as e:
            logger.error(f"Stage '{name}' failed: {e}")
            raise StageError(name, str(e)) from e
        logger.debug(f"Stage '{name}' finished")

    def build(self) -> RiccatiSystem:
        """Parse the equation, find the roots, select lambda and reduce."""
        if self.system is not None:
            return self.system

        try:
            self.ode = PerturbedODE.from_strings(self.run.complex_coefficients(), self.run.perturbations, self.run.t0)
        except ExprSyntaxError as e:
            raise ConfigError(f"perturbations: {e}") from e

        with self.stage("build"):
            self.roots = find_roots(self.ode.charpoly(), seed=self.run.seed)
            selector = self.run.root_selector()
            if isinstance(selector, int):
                if not -len(self.roots) <= selector < len(self.roots):
                    raise ConfigError(f"lambda: index {selector} outside 0..{len(self.roots) - 1}")
                lam = self.roots[selector]
            else:
                lam = selector
            self.spectral = spectral_data(self.roots, lam, self.run.beta)
            self.system = build_riccati(self.ode, self.spectral.lam)
            self.operator = make_operator(self.system, self.spectral, self.grid, self.run.quad)
        logger.info(f"Selected lambda={self.spectral.lam} among roots {self.roots} (seed {self.run.seed})")
        return self.system

    def contraction(self) -> ContractionReport:
        if self._contraction is None:
            self.build()
            with self.stage("contraction"):
                self._contraction = contraction_constants(
                    self.system, self.spectral, self.run.picard.ball_radius, self.grid,
                    self.run.quad, op=self.operator,
                )
        return self._contraction

    def solve(self, force: Optional[bool] = None) -> ZSolution:
        """Picard stage; ``force`` defaults to the configuration flag."""
        if self._solution is None:
            report = self.contraction()
            force = self.run.picard.force if force is None else force
            with self.stage("picard"):
                self._solution = picard_solve(
                    self.system, self.spectral, self.grid, self.run.quad,
                    tol=self.run.picard.tol, max_iter=self.run.picard.max_iter,
                    report=report, force=force, op=self.operator,
                )
        return self._solution

    def ladder(self, depth: Optional[int] = None) -> LadderResult:
        if self._ladder is None or (depth is not None and len(self._ladder.thetas) != depth):
            z = self.solve()
            with self.stage("ladder"):
                self._ladder = theta_ladder(
                    self.system, self.spectral, depth or self.run.ladder_depth, self.grid,
                    self.run.quad, z=z, op=self.operator,
                )
        return self._ladder

    def formula(self, kind: Optional[str] = None) -> AsymptoticReport:
        kind = kind or self.run.formula
        z = self.solve()
        ladder = self.ladder() if kind == "ladder" else None
        with self.stage("formula"):
            return assemble(kind, z, self.spectral, self.system, self.run.quad, ladder=ladder)
