"""
Characteristic polynomial machinery.

Evaluation of P(a; x) and its scaled derivatives, simultaneous root finding,
and the shifted spectrum gamma_j = lambda_j - lambda with the partial-fraction
denominators Gamma_j that weight the composite Green operator.
"""

from dataclasses import dataclass
from math import comb
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from config import config
from utils.errors import NumericalError
from utils.logger import get_logger

logger = get_logger("charpoly")


class RootFindingError(NumericalError):
    """Root iteration did not reach the residual tolerance."""

    def __init__(self, message: str, residuals: Sequence[float] = ()):
        super().__init__(message)
        self.residuals = list(residuals)


class SpectralError(NumericalError):
    """The spectrum violates a hypothesis of the reduction (gap, root membership)."""
    pass


@dataclass(frozen=True)
class CharPoly:
    """Monic polynomial x^n + a_{n-1} x^{n-1} + ... + a_0, coefficients low to high."""

    coeffs: Tuple[complex, ...]

    def __post_init__(self):
        if len(self.coeffs) < 3:
            raise ValueError("characteristic polynomial must have degree at least 2")
        if self.coeffs[-1] != 1:
            raise ValueError("characteristic polynomial must be monic")

    @classmethod
    def from_coefficients(cls, a: Sequence[complex]) -> "CharPoly":
        """Build from a_0..a_{n-1}; the leading 1 is appended."""
        return cls(tuple(complex(x) for x in a) + (1,))

    @classmethod
    def from_roots(cls, roots: Sequence[complex]) -> "CharPoly":
        coeffs = np.poly(np.asarray(roots, dtype=complex))[::-1]
        return cls(tuple(complex(c) for c in coeffs[:-1]) + (1,))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        return poly_derivative_at(self, x, 0)


def poly_derivative_at(p: CharPoly, lam, j: int):
    """
    (1/j!) P^(j)(lam) = sum_{i >= j} a_i C(i, j) lam^(i-j).

    ``lam`` may be a scalar or a numpy array.
    """
    n = p.degree
    if not 0 <= j <= n:
        raise ValueError(f"derivative order {j} outside 0..{n}")
    total = 0
    for i in range(n, j - 1, -1):
        total = total * lam + p.coeffs[i] * comb(i, j)
    return total


def d_coefficients(p: CharPoly, lam: complex) -> List[complex]:
    """Coefficients of z, z', ..., z^(n-1) in the constant-coefficient operator D."""
    return [complex(poly_derivative_at(p, lam, j)) for j in range(1, p.degree + 1)]


def _cauchy_radius(coeffs: np.ndarray) -> float:
    return 1.0 + float(np.max(np.abs(coeffs[:-1])))


def _durand_kerner(coeffs: np.ndarray, tol: float, max_iter: int, rng: np.random.Generator) -> np.ndarray:
    n = len(coeffs) - 1
    radius = _cauchy_radius(coeffs)
    angles = 2 * np.pi * np.arange(n) / n + 0.4
    z = 0.5 * radius * np.exp(1j * angles) * (1 + 0.01 * rng.standard_normal(n))
    poly = np.polynomial.Polynomial(coeffs)

    for iteration in range(max_iter):
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        delta = poly(z) / np.prod(diff, axis=1)
        z = z - delta
        if np.max(np.abs(delta)) <= tol * (1 + np.max(np.abs(z))):
            logger.debug(f"Durand-Kerner converged in {iteration + 1} iterations")
            break
    return z


def _polish(coeffs: np.ndarray, z: np.ndarray, steps: int = 3) -> np.ndarray:
    poly = np.polynomial.Polynomial(coeffs)
    dpoly = poly.deriv()
    for _ in range(steps):
        d = dpoly(z)
        safe = np.abs(d) > 0
        z = np.where(safe, z - poly(z) / np.where(safe, d, 1), z)
    return z


def _residuals(coeffs: np.ndarray, z: np.ndarray) -> np.ndarray:
    n = len(coeffs) - 1
    return np.abs(np.polynomial.Polynomial(coeffs)(z)) / (1 + np.abs(z)) ** n


def sort_roots(roots: Sequence[complex], tol: float = 1e-12) -> List[complex]:
    """Order roots by (Re, Im) after rounding away tolerance-level noise."""
    scale = 1 + max(abs(r) for r in roots)
    digits = max(0, int(-np.log10(tol * scale)))
    return sorted((complex(r) for r in roots), key=lambda r: (round(r.real, digits), round(r.imag, digits)))


def find_roots(
    p: CharPoly,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    seed: Optional[int] = None,
) -> List[complex]:
    """
    All roots of p by simultaneous iteration.

    Durand-Kerner from a slightly perturbed circle, polished by Newton steps;
    companion-matrix eigenvalues serve as the fallback when the residual test
    fails.

    Args:
        p: Monic polynomial
        tol: Residual tolerance, |P(root)| <= tol (1 + |root|)^n
        max_iter: Iteration cap of the simultaneous iteration
        seed: Seed of the starting-circle perturbation (RANDOM_SEED by default)

    Returns:
        The n roots ordered by (Re, Im)

    Raises:
        RootFindingError: If neither method meets the tolerance
    """
    tol = config.ROOT_TOL if tol is None else tol
    max_iter = config.ROOT_MAX_ITER if max_iter is None else max_iter
    coeffs = np.asarray(p.coeffs, dtype=complex)
    rng = np.random.default_rng(config.RANDOM_SEED if seed is None else seed)

    z = _polish(coeffs, _durand_kerner(coeffs, tol * 1e-2, max_iter, rng))
    res = _residuals(coeffs, z)
    if not np.all(np.isfinite(z)) or np.max(res) > tol:
        logger.warning(f"Durand-Kerner residual {np.max(res):.3e} above {tol:.1e}, using companion eigenvalues")
        companion = np.zeros((p.degree, p.degree), dtype=complex)
        companion[1:, :-1] = np.eye(p.degree - 1)
        companion[:, -1] = -coeffs[:-1]
        z = _polish(coeffs, np.linalg.eigvals(companion))
        res = _residuals(coeffs, z)
        if np.max(res) > tol:
            raise RootFindingError(
                f"root finding did not converge (max residual {np.max(res):.3e})", res.tolist()
            )

    # Snap imaginary noise of real roots
    cleaned = np.where(np.abs(z.imag) <= 1e3 * tol * (1 + np.abs(z)), z.real + 0j, z)
    return sort_roots(cleaned)


@dataclass(frozen=True)
class SpectralData:
    """
    Spectrum around the selected root lam.

    ``gammas`` are the other roots shifted by -lam, kept in the sorted root
    order; ``index`` is the position of lam in ``roots``.
    """

    roots: Tuple[complex, ...]
    lam: complex
    index: int
    gammas: np.ndarray
    Gammas: np.ndarray
    alphas: np.ndarray
    alpha_tilde: np.ndarray
    gamma_tilde: float
    beta: float

    @property
    def n(self) -> int:
        return len(self.roots)

    @property
    def prefactor(self) -> complex:
        """(-1)^n prod(gamma_j)^-1, the weight of the integral term."""
        return complex((-1) ** self.n / np.prod(self.gammas)) if len(self.gammas) else 1.0

    @property
    def weight_sum(self) -> complex:
        """sum_j 1/(Gamma_j gamma_j); equals ``prefactor``."""
        return complex(np.sum(1.0 / (self.Gammas * self.gammas)))

    def to_dict(self) -> dict:
        pair = lambda c: [float(np.real(c)), float(np.imag(c))]
        return {
            "roots": [pair(r) for r in self.roots],
            "lambda": pair(self.lam),
            "gammas": [pair(g) for g in self.gammas],
            "Gammas": [pair(g) for g in self.Gammas],
            "alpha_tilde": [float(a) for a in self.alpha_tilde],
            "gamma_tilde": float(self.gamma_tilde),
            "beta": float(self.beta),
            "prefactor": pair(self.prefactor),
        }


def spectral_data(roots: Sequence[complex], lam: complex, beta: Optional[float] = None) -> SpectralData:
    """
    Shifted spectrum, partial-fraction denominators and gap parameter.

    Args:
        roots: All roots of the characteristic polynomial
        lam: The selected root
        beta: Gap parameter; defaults to half the smallest |Re gamma_j|

    Returns:
        SpectralData for lam

    Raises:
        SpectralError: If lam is not a root, two roots share a real part
            within tolerance, or beta is outside (0, min |Re gamma_j|)
    """
    roots = sort_roots(roots)
    lam = complex(lam)
    scale = 1 + max(abs(r) for r in roots)

    distances = [abs(r - lam) for r in roots]
    index = int(np.argmin(distances))
    if distances[index] > config.REAL_PART_TOL * (1 + abs(lam)):
        raise SpectralError(f"lambda={lam} is not a root (closest root {roots[index]})")

    for i in range(len(roots)):
        for k in range(i + 1, len(roots)):
            if abs(roots[i].real - roots[k].real) < config.REAL_PART_TOL * scale:
                raise SpectralError(
                    f"roots {roots[i]} and {roots[k]} have coincident real parts"
                )

    lam = roots[index]
    gammas = np.array([r - lam for j, r in enumerate(roots) if j != index], dtype=complex)
    Gammas = np.array(
        [np.prod([gammas[j] - gammas[k] for k in range(len(gammas)) if k != j]) for j in range(len(gammas))],
        dtype=complex,
    )
    alphas = gammas.real
    n = len(roots)
    alpha_tilde = np.array([sum(abs(g) ** i for i in range(n - 1)) for g in gammas])
    gamma_tilde = float(np.sum(alpha_tilde / np.abs(Gammas)))

    min_alpha = float(np.min(np.abs(alphas)))
    if beta is None:
        beta = 0.5 * min_alpha
    elif not 0 < beta < min_alpha:
        raise SpectralError(f"beta={beta} must lie in (0, {min_alpha})")

    return SpectralData(
        roots=tuple(roots), lam=lam, index=index, gammas=gammas, Gammas=Gammas,
        alphas=alphas, alpha_tilde=alpha_tilde, gamma_tilde=gamma_tilde, beta=float(beta),
    )


def partial_fraction_weights_check(s: SpectralData, tol: float = 1e-10) -> Tuple[bool, float]:
    """
    Check sum_j gamma_j^i / Gamma_j = 0 for i <= n-2 and = 1 for i = n-1.

    Returns:
        (passed, max residual)
    """
    n = s.n
    worst = 0.0
    for i in range(n - 1):
        total = np.sum(s.gammas ** i / s.Gammas)
        target = 1.0 if i == n - 2 else 0.0
        scale = 1 + float(np.sum(np.abs(s.gammas) ** i / np.abs(s.Gammas)))
        worst = max(worst, abs(total - target) / scale)
    return worst <= tol, worst


def root_shift_residual(p: CharPoly, s: SpectralData) -> float:
    """
    Max distance between the roots of P_D and the shifted roots, after optimal matching.

    For n = 2, P_D is linear and its root is read off directly.
    """
    coeffs = d_coefficients(p, s.lam)
    if len(coeffs) == 2:
        d_roots = np.array([-coeffs[0] / coeffs[1]], dtype=complex)
    else:
        d_roots = np.array(find_roots(CharPoly(tuple(coeffs))))
    cost = np.abs(d_roots[:, None] - s.gammas[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


def vandermonde(roots: Sequence[complex]) -> complex:
    """prod_{i > j} (lambda_i - lambda_j) in the given order."""
    total = 1 + 0j
    for i in range(len(roots)):
        for j in range(i):
            total *= roots[i] - roots[j]
    return total
