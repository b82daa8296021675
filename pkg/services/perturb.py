"""
Perturbed equations and the perturbation bundle P(r; lambda).

PerturbedODE is the problem statement y^(n) + sum (a_i + r_i(t)) y^(i) = 0.
PerturbationBundle evaluates the r_i at a selected root lambda: the scaled
lambda-derivatives (1/k!) d^k/dx^k P(r(t); lambda) that make up P(r; lambda)
and the variable linear part L. The smallness diagnostics sample the three
equivalent measures of a decaying coefficient on a grid.
"""

from dataclasses import dataclass
from math import comb
from typing import Optional, Sequence, Tuple

import numpy as np

from models.schemas import QuadConfig
from services.charpoly import CharPoly
from services.expression import BinOp, Expr, Num, evaluate, is_zero, parse_expr, to_text
from services.green import GreenOperator, panel_nodes
from utils.logger import get_logger

logger = get_logger("perturb")


@dataclass(frozen=True)
class PerturbationBundle:
    """The r_0..r_{n-1} of an equation together with the selected root lambda."""

    exprs: Tuple[Expr, ...]
    lam: complex
    t0: float

    @property
    def n(self) -> int:
        return len(self.exprs)

    @property
    def is_zero(self) -> bool:
        return all(is_zero(e) for e in self.exprs)

    def r_values(self, t) -> np.ndarray:
        """r_i(t) for i = 0..n-1, shape (n,) + shape(t)."""
        t = np.asarray(t, dtype=float)
        rows = []
        for expr in self.exprs:
            rows.append(np.zeros(t.shape, dtype=complex) if is_zero(expr) else np.asarray(evaluate(expr, t)))
        return np.array(rows)

    def derivative_stack(self, t, r: Optional[np.ndarray] = None) -> np.ndarray:
        """(1/k!) d^k P(r(t); lambda) for k = 0..n-1, shape (n,) + shape(t)."""
        r = self.r_values(t) if r is None else r
        n = self.n
        out = np.zeros_like(r)
        for k in range(n):
            for i in range(k, n):
                out[k] = out[k] + r[i] * comb(i, k) * self.lam ** (i - k)
        return out

    def p_r_lambda(self, k: int, t):
        """(1/k!) d^k/dx^k P(r(t); x) at x = lambda; zero for k = n."""
        if not 0 <= k <= self.n:
            raise ValueError(f"derivative order {k} outside 0..{self.n}")
        if k == self.n:
            return np.zeros(np.shape(t), dtype=complex) if np.ndim(t) else 0j
        r = self.r_values(t)
        total = sum(r[i] * comb(i, k) * self.lam ** (i - k) for i in range(k, self.n))
        return complex(total) if np.ndim(t) == 0 else total

    def envelope(self, t) -> np.ndarray:
        """sum_i |r_i(t)| (1+|lambda|)^i, a majorant of every |(1/k!) d^k P| up to binomials."""
        r = self.r_values(t)
        weights = (1 + abs(self.lam)) ** np.arange(self.n)
        return np.tensordot(weights, np.abs(r), axes=1)


def p_r_lambda(b: PerturbationBundle, k: int, t):
    """Module-level form of PerturbationBundle.p_r_lambda."""
    return b.p_r_lambda(k, t)


@dataclass(frozen=True)
class PerturbedODE:
    """y^(n) + sum_{i<n} (a_i + r_i(t)) y^(i) = 0 on [t0, inf)."""

    coeffs: Tuple[complex, ...]
    perturbations: Tuple[Expr, ...]
    t0: float

    def __post_init__(self):
        if len(self.coeffs) != len(self.perturbations):
            raise ValueError(
                f"{len(self.coeffs)} coefficients but {len(self.perturbations)} perturbations"
            )
        if len(self.coeffs) < 2:
            raise ValueError("order must be at least 2")

    @classmethod
    def from_strings(cls, coeffs: Sequence[complex], perturbations: Sequence[str], t0: float) -> "PerturbedODE":
        return cls(tuple(complex(a) for a in coeffs), tuple(parse_expr(p) for p in perturbations), float(t0))

    @property
    def n(self) -> int:
        return len(self.coeffs)

    def charpoly(self) -> CharPoly:
        return CharPoly.from_coefficients(self.coeffs)

    def bundle(self, lam: complex) -> PerturbationBundle:
        return PerturbationBundle(self.perturbations, complex(lam), self.t0)

    def unperturbed(self) -> "PerturbedODE":
        return PerturbedODE(self.coeffs, tuple(Num(0) for _ in self.coeffs), self.t0)

    def scaled(self, factor: float) -> "PerturbedODE":
        """Same equation with every r_i multiplied by ``factor``."""
        exprs = tuple(e if is_zero(e) else BinOp("*", Num(factor), e) for e in self.perturbations)
        return PerturbedODE(self.coeffs, exprs, self.t0)

    def coefficient_values(self, t) -> np.ndarray:
        """a_i + r_i(t), shape (n,) + shape(t)."""
        r = PerturbationBundle(self.perturbations, 0j, self.t0).r_values(t)
        a = np.asarray(self.coeffs, dtype=complex).reshape((-1,) + (1,) * np.ndim(t))
        return a + r

    def describe(self) -> dict:
        return {
            "order": self.n,
            "coefficients": [[float(np.real(a)), float(np.imag(a))] for a in self.coeffs],
            "perturbations": [to_text(e) for e in self.perturbations],
            "t0": self.t0,
        }


@dataclass(frozen=True)
class SmallnessReport:
    """Grid samples of r*(t), the finite-horizon r-bar(t) and I_gamma[r](t)."""

    grid: np.ndarray
    r_star: np.ndarray
    r_bar: np.ndarray
    I_gamma: np.ndarray
    horizon: float


def smallness_diagnostics(
    r: Expr,
    gamma: complex,
    t_grid: Sequence[float],
    q: Optional[QuadConfig] = None,
    horizon: Optional[float] = None,
) -> SmallnessReport:
    """
    Sample the three smallness measures of a coefficient r.

    r*(t) = int_t^{t+1} |r|, r-bar(t) = sup_{t<=s<=H} (1+s-t)^{-1} int_t^s |r|
    and I_gamma[r](t). The supremum is taken over grid nodes up to the
    horizon H, which defaults to the grid end and is returned with the report.

    Args:
        r: Coefficient expression
        gamma: Exponent of the Green operator, Re gamma != 0
        t_grid: Strictly increasing sample points
        q: Quadrature settings
        horizon: Sup horizon H

    Returns:
        SmallnessReport
    """
    q = q or QuadConfig()
    grid = np.asarray(t_grid, dtype=float)
    horizon = float(grid[-1] if horizon is None else horizon)
    absr = lambda s: np.abs(np.asarray(evaluate(r, s)))

    x, w = panel_nodes(0.0, 1.0, q)
    r_star = np.array([np.sum(w * absr(t + x)) for t in grid])

    sup_grid = grid if horizon <= grid[-1] else np.concatenate([grid, [horizon]])
    op = GreenOperator(sup_grid, q)
    cumulative = np.real(op.integral(absr(op.nodes)))
    r_bar = np.zeros(len(grid))
    for k, t in enumerate(grid):
        mask = (sup_grid >= t) & (sup_grid <= horizon)
        span = sup_grid[mask] - t
        r_bar[k] = np.max((cumulative[mask] - cumulative[k]) / (1 + span)) if np.any(mask) else 0.0

    alpha = float(np.real(gamma))
    green_op = GreenOperator.for_spectrum(grid, q, [alpha], envelope=absr)
    I_gamma = green_op.green_abs(alpha, absr(green_op.nodes), absr(green_op.tail_nodes))
    logger.debug(f"Smallness diagnostics on {len(grid)} points with horizon {horizon}")
    return SmallnessReport(grid=grid, r_star=r_star, r_bar=r_bar, I_gamma=I_gamma, horizon=horizon)


def decay_order(grid: Sequence[float], values: Sequence[complex], window: float = 0.5) -> float:
    """
    Estimated p in |v(t)| ~ t^{-p} from the log-log slope over the last part of the grid.

    Returns inf for values that vanish identically on the window.
    """
    grid = np.asarray(grid, dtype=float)
    mag = np.abs(np.asarray(values))
    start = int(len(grid) * (1 - window))
    t, v = grid[start:], mag[start:]
    keep = v > 1e-300
    if keep.sum() < 2:
        return float("inf")
    slope = np.polyfit(np.log(t[keep]), np.log(v[keep]), 1)[0]
    return float(-slope)


def in_lp(order: float, p: float) -> bool:
    """Membership of a t^{-order} tail in L^p."""
    return order * p > 1
