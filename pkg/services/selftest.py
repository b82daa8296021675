"""
Property suites behind the ``selftest`` subcommand.

Each suite draws its cases from numpy's generator seeded with the configured
seed and returns a SuiteResult; run_selftest collects them into one summary.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from config import config
from models.schemas import QuadConfig
from services.bellpoly import binomial_identity_residual, complete_bell, format_poly
from services.charpoly import CharPoly, partial_fraction_weights_check, root_shift_residual, spectral_data
from services.green import GreenOperator
from utils.logger import get_logger

logger = get_logger("selftest")

BELL_GOLDEN = {
    0: "1",
    1: "x1",
    2: "x1^2+x2",
    3: "x1^3+3*x1*x2+x3",
    4: "x1^4+6*x1^2*x2+4*x1*x3+3*x2^2+x4",
    5: "x1^5+10*x1^3*x2+10*x1^2*x3+15*x1*x2^2+5*x1*x4+10*x2*x3+x5",
}


@dataclass
class SuiteResult:
    name: str
    cases: int
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tol)

    def to_dict(self) -> dict:
        return {"cases": self.cases, "worst": self.worst, "tol": self.tol, "passed": self.passed}


def bell_golden_suite(rng: np.random.Generator) -> SuiteResult:
    mismatches = sum(format_poly(complete_bell(i)) != text for i, text in BELL_GOLDEN.items())
    return SuiteResult("bell_golden", len(BELL_GOLDEN), float(mismatches), 0.0)


def bell_identity_suite(rng: np.random.Generator, points: int = 100) -> SuiteResult:
    worst = 0.0
    for i in range(1, 9):
        for _ in range(points):
            x = rng.normal(size=i) + 1j * rng.normal(size=i)
            y = rng.normal(size=i) + 1j * rng.normal(size=i)
            worst = max(worst, binomial_identity_residual(i, x, y))
    return SuiteResult("bell_identity", 8 * points, worst, 1e-9)


def random_spectrum(rng: np.random.Generator, n: int) -> List[complex]:
    """n roots with real parts at least 0.5 apart."""
    reals = np.cumsum(0.5 + rng.random(n)) - 0.25 * n
    imags = rng.normal(scale=0.5, size=n)
    return [complex(r, i) for r, i in zip(reals, imags)]


def root_shift_suite(rng: np.random.Generator, cases: int = 50) -> SuiteResult:
    worst = 0.0
    for _ in range(cases):
        roots = random_spectrum(rng, int(rng.integers(5, 9)))
        p = CharPoly.from_roots(roots)
        lam = roots[int(rng.integers(len(roots)))]
        worst = max(worst, root_shift_residual(p, spectral_data(roots, lam)))
    return SuiteResult("root_shift", cases, worst, 1e-8)


def partial_fraction_suite(rng: np.random.Generator, cases: int = 50) -> SuiteResult:
    worst = 0.0
    for _ in range(cases):
        roots = random_spectrum(rng, int(rng.integers(3, 9)))
        s = spectral_data(roots, roots[int(rng.integers(len(roots)))])
        worst = max(worst, partial_fraction_weights_check(s)[1])
    s = spectral_data([-1.0, 0.0, 1.0, 2.0, 3.0], 1.0)
    worst = max(worst, partial_fraction_weights_check(s)[1])
    return SuiteResult("partial_fraction", cases + 1, worst, 1e-10)


def green_identity_suite(rng: np.random.Generator, omegas=(-2.0, -0.5, 0.5, 2.0 + 1j)) -> SuiteResult:
    """G_w[e^{-s}] against the closed form -e^{-t}/(w+1) (Re w > 0) on [1, 6]."""
    q = QuadConfig()
    grid = np.linspace(1.0, 6.0, 51)
    worst = 0.0
    for omega in omegas:
        op = GreenOperator.for_spectrum(grid, q, [np.real(omega)], envelope=lambda s: np.exp(-np.asarray(s)))
        values = op.green(omega, np.exp(-op.nodes), np.exp(-op.tail_nodes))
        exact = -np.exp(-grid) / (omega + 1)
        if np.real(omega) < 0:
            exact = exact + np.exp(omega * (grid - grid[0])) * np.exp(-grid[0]) / (omega + 1)
        worst = max(worst, float(np.max(np.abs(values - exact))))
    return SuiteResult("green_identity", len(omegas), worst, 1e-6)


SUITES: Dict[str, Callable[[np.random.Generator], SuiteResult]] = {
    "bell_golden": bell_golden_suite,
    "bell_identity": bell_identity_suite,
    "root_shift": root_shift_suite,
    "partial_fraction": partial_fraction_suite,
    "green_identity": green_identity_suite,
}


def run_selftest(seed: Optional[int] = None, names: Optional[List[str]] = None) -> Dict[str, dict]:
    """Run the named suites (all by default) and return their summaries."""
    seed = config.RANDOM_SEED if seed is None else seed
    results = {}
    for name in names or list(SUITES):
        rng = np.random.default_rng(seed)
        result = SUITES[name](rng)
        level = "info" if result.passed else "error"
        getattr(logger, level)(f"Selftest {name}: worst {result.worst:.3e} (tol {result.tol:.0e})")
        results[name] = result.to_dict()
    return results
