"""
Fixed-point solution of the reduced equation.

z solves D z + P(r; lambda) + L + F = 0 and decays at infinity exactly when
it is a fixed point of z -> -G[P(r; lambda) + L(., z) + F(., Z)], where G is
the composite Green operator of D. This module runs that Picard iteration on
a grid, evaluates the constants that certify it is a contraction, and builds
the theta ladder z = theta_1 + ... + theta_m + psi_m.
"""

from dataclasses import dataclass, field
from math import comb
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from config import config
from models.schemas import ContractionReport, QuadConfig
from services.bellpoly import MultiIndexPoly, nonlinear_remainder
from services.charpoly import SpectralData
from services.green import GreenOperator, GridFunction, composite_stack
from services.riccati import RiccatiSystem, eval_F, eval_L
from utils.errors import NumericalError
from utils.logger import get_logger

logger = get_logger("solver")


class ContractionError(NumericalError):
    """The contraction condition fails and was not overridden."""
    pass


class DivergenceError(NumericalError):
    """Picard updates kept growing."""

    def __init__(self, message: str, growth: float):
        super().__init__(message)
        self.growth = growth


class LadderError(NumericalError):
    """Requested ladder depth is not supported."""
    pass


@dataclass
class ZSolution:
    """
    Grid solution of the reduced equation.

    ``stack`` holds z..z^(n-2) (shape (n-1, N)); ``top`` is z^(n-1) from the
    Green representation; ``integrand`` is P(r; lambda) + L + F at the
    returned iterate; ``envelope`` samples (I_beta + I_-beta)[P(r; lambda)].
    """

    grid: np.ndarray
    stack: np.ndarray
    top: np.ndarray
    integrand: np.ndarray
    lam: complex
    iterations: int
    update_norm: float
    update_history: List[float]
    envelope: np.ndarray
    residual: float
    converged: bool
    _spline: Optional[Tuple[CubicSpline, CubicSpline]] = field(default=None, init=False, repr=False)

    @property
    def n(self) -> int:
        return self.stack.shape[0] + 1

    def at(self, t) -> np.ndarray:
        """Interpolated z..z^(n-2) at t (cubic between nodes)."""
        if self._spline is None:
            self._spline = (
                CubicSpline(self.grid, self.stack.real, axis=1),
                CubicSpline(self.grid, self.stack.imag, axis=1),
            )
        t = np.asarray(t, dtype=float)
        re, im = self._spline
        return re(t) + 1j * im(t)

    def full_stack_at(self, t) -> List[np.ndarray]:
        rows = list(self.at(t))
        rows.append(GridFunction(self.grid, self.top)(t))
        return rows

    def norm_profile(self) -> np.ndarray:
        """||Z(t)|| = sum_i |z^(i)(t)| on the grid."""
        return np.sum(np.abs(self.stack), axis=0)

    def update_ratios(self) -> List[float]:
        h = self.update_history
        return [h[k] / h[k - 1] for k in range(1, len(h)) if h[k - 1] > 0]


def _suffix_max(values: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(values[::-1])[::-1]


class ReducedIntegrand:
    """
    P(r; lambda) + L(., z) + F(., Z) on the quadrature nodes of a GreenOperator.

    Perturbation data is tabulated once. Inside the grid Z comes from the
    cubic spline of its grid values; past the grid end P is exact and the
    z-dependent part is carried by the decay envelope of the perturbations.
    """

    def __init__(self, sys: RiccatiSystem, op: GreenOperator):
        self.sys = sys
        self.op = op
        bundle = sys.bundle
        self.points = np.concatenate([op.nodes, op.grid])
        self.r = bundle.r_values(self.points)
        self.dstack = bundle.derivative_stack(self.points, self.r)
        self.P = self.dstack[0]
        self.tail_P = bundle.p_r_lambda(0, op.tail_nodes) if len(op.tail_nodes) else np.empty(0, dtype=complex)

        env_end = float(bundle.envelope(np.array([op.grid[-1]]))[0])
        if len(op.tail_nodes) and env_end > 0:
            self.tail_ratio = bundle.envelope(op.tail_nodes) / env_end
        else:
            self.tail_ratio = np.zeros(len(op.tail_nodes))

    def split(self, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        k = len(self.op.nodes)
        return values[..., :k], values[..., k:]

    def interpolate(self, grid_rows: np.ndarray) -> np.ndarray:
        """Rows given on the grid, evaluated at nodes followed by grid points."""
        re = CubicSpline(self.op.grid, grid_rows.real, axis=1)(self.op.nodes)
        im = CubicSpline(self.op.grid, grid_rows.imag, axis=1)(self.op.nodes)
        return np.concatenate([re + 1j * im, grid_rows], axis=1)

    def nonlinear(self, Z_points: np.ndarray) -> np.ndarray:
        """L + F at the evaluation points."""
        Z = list(Z_points)
        return eval_L(self.sys, self.points, Z, self.dstack) + eval_F(self.sys, self.points, Z, self.r)

    def tail(self, rest_end: complex, with_P: bool = True) -> np.ndarray:
        tail = rest_end * self.tail_ratio
        return tail + self.tail_P if with_P else tail

    def evaluate(self, Z_grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(f at nodes, f at tail nodes, f on grid) for the iterate Z_grid."""
        rest = self.nonlinear(self.interpolate(Z_grid))
        f = self.P + rest
        f_nodes, f_grid = self.split(f)
        return f_nodes, self.tail(f_grid[-1] - self.P[-1]), f_grid


def make_operator(sys: RiccatiSystem, s: SpectralData, grid: Sequence[float], q: QuadConfig) -> GreenOperator:
    """GreenOperator whose tail covers every Re gamma_j > 0 and the gap beta."""
    alphas = list(s.alphas) + [s.beta, -s.beta]
    return GreenOperator.for_spectrum(grid, q, alphas, envelope=sys.bundle.envelope)


def _lipschitz_bound(n: int, radius: float) -> float:
    return max(nonlinear_remainder(i).lipschitz_majorant(radius) for i in range(1, n))


def certified_radius(n: int, L0: float, Q0: float, M: float) -> Optional[float]:
    """
    Largest radius rho <= M with m(rho) Q0 + L0 <= (1 + L0) / 2.

    On that ball the Picard map contracts with constant at most (1 + L0) / 2.
    None when L0 >= 1, where no radius works.
    """
    if L0 >= 1:
        return None
    target = 0.5 * (1.0 + L0)

    def excess(rho: float) -> float:
        return _lipschitz_bound(n, rho) * Q0 + L0 - target

    if excess(M) <= 0:
        return M
    return float(brentq(excess, 0.0, M, xtol=1e-12 * M))


def contraction_constants(
    sys: RiccatiSystem,
    s: SpectralData,
    M: float,
    grid: Sequence[float],
    q: Optional[QuadConfig] = None,
    op: Optional[GreenOperator] = None,
) -> ContractionReport:
    """
    Constants of the contraction argument on the ball of radius M.

    Args:
        sys: Reduced system
        s: Spectral data of the same root
        M: Ball radius
        grid: Evaluation grid
        q: Quadrature settings
        op: Prebuilt GreenOperator for the grid

    Returns:
        ContractionReport with L0, L_beta, Q0, Q_beta, m(M), eps0, K and the
        (gpr), (cl0), (cl) flags

    Raises:
        ValueError: If M is not positive
    """
    if M <= 0:
        raise ValueError("ball radius M must be positive")
    q = q or QuadConfig()
    op = op or make_operator(sys, s, grid, q)
    n = sys.n
    lam_abs = abs(sys.lam)
    beta = s.beta
    a_abs = np.abs(np.asarray(sys.a))

    points = op.all_nodes
    r_abs = np.abs(sys.bundle.r_values(points))
    d_abs = np.abs(sys.bundle.derivative_stack(points))
    grid_r_abs = np.abs(sys.bundle.r_values(op.grid))
    grid_d_abs = np.abs(sys.bundle.derivative_stack(op.grid))
    m_M = _lipschitz_bound(n, M)

    def I(alpha: float, values: np.ndarray) -> np.ndarray:
        inner, tail = op.split(values)
        return op.green_abs(alpha, inner, tail)

    L0 = L_beta = Q0 = Q_beta = 0.0
    L0_suffix = np.zeros(len(op.grid))
    K_profile = np.zeros(len(op.grid))

    # xi_M on nodes: linear coefficients plus the Lipschitz part of F
    xi = np.sum(d_abs[1:], axis=0)
    xi_grid = np.sum(grid_d_abs[1:], axis=0)
    for i in range(2, n + 1):
        ri = r_abs[i] if i < n else 0.0
        ri_grid = grid_r_abs[i] if i < n else 0.0
        for k in range(i - 1):
            xi = xi + m_M * comb(i, k) * (a_abs[i] + ri) * lam_abs ** k
            xi_grid = xi_grid + m_M * comb(i, k) * (a_abs[i] + ri_grid) * lam_abs ** k

    for alpha, at, Gamma in zip(s.alphas, s.alpha_tilde, s.Gammas):
        weight = at / abs(Gamma)
        shifted = alpha - np.sign(alpha) * beta
        for k in range(1, n):
            I0 = I(alpha, d_abs[k])
            L0 += weight * float(np.max(I0))
            L_beta += weight * float(np.max(I(shifted, d_abs[k])))
            L0_suffix += weight * _suffix_max(I0)
        for i in range(2, n + 1):
            sup0 = float(np.max(I(alpha, r_abs[i]))) if i < n else 0.0
            supb = float(np.max(I(shifted, r_abs[i]))) if i < n else 0.0
            for k in range(i - 1):
                c = comb(i, k) * lam_abs ** k
                Q0 += weight * c * (a_abs[i] / abs(alpha) + sup0)
                Q_beta += weight * c * (a_abs[i] / abs(shifted) + supb)
        K_profile += weight * I(shifted, xi)

    # (gpr): G[P(r; lambda)] and its derivatives decay along the grid
    P_inner, P_tail = op.split(sys.bundle.p_r_lambda(0, points))
    GP = composite_stack(s, op.components(s, P_inner, P_tail))[: n - 1]
    profile = np.sum(np.abs(GP), axis=0)
    quarter = max(1, len(profile) // 4)
    gpr = bool(np.all(np.isfinite(profile)) and np.max(profile[-quarter:]) <= np.max(profile[:quarter]))

    admissible = np.nonzero(L0_suffix < 1)[0]
    t_cl0 = float(op.grid[admissible[0]]) if len(admissible) else None

    rho = certified_radius(n, L0, Q0, M)
    report = ContractionReport(
        M=M, m_M=m_M, xi_profile=[float(x) for x in xi_grid],
        L0=L0, L_beta=L_beta, Q0=Q0, Q_beta=Q_beta, gamma_tilde=s.gamma_tilde,
        eps0=m_M * Q0 + L0, K=float(np.max(K_profile)),
        gpr=gpr, cl0=L0 < 1, cl=L_beta < 0.5, t_cl0=t_cl0, beta=beta,
        certified_radius=rho,
        eps0_certified=None if rho is None else _lipschitz_bound(n, rho) * Q0 + L0,
    )
    logger.info(
        f"Contraction constants: L0={L0:.4g} L_beta={L_beta:.4g} Q0={Q0:.4g} "
        f"m(M)={m_M:.4g} eps0={report.eps0:.4g} cl0={report.cl0} cl={report.cl}"
        f" certified radius={rho}"
    )
    return report


def picard_solve(
    sys: RiccatiSystem,
    s: SpectralData,
    grid: Sequence[float],
    q: Optional[QuadConfig] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    report: Optional[ContractionReport] = None,
    force: bool = False,
    op: Optional[GreenOperator] = None,
) -> ZSolution:
    """
    Picard iteration z_{k+1} = -G[P(r; lambda) + L(., z_k) + F(., Z_k)] from z_0 = 0.

    Args:
        sys: Reduced system
        s: Spectral data of the same root
        grid: Solution grid
        q: Quadrature settings
        tol: Stop when the sup-norm of the stacked update falls below tol
        max_iter: Iteration cap
        report: Contraction report; when it says (cl0) fails the solve
            is refused unless ``force`` is set
        force: Run even when (cl0) fails, with a warning
        op: Prebuilt GreenOperator for the grid

    Returns:
        ZSolution

    Raises:
        ContractionError: If (cl0) fails and force is not set
        DivergenceError: If the update grows three iterations in a row
    """
    q = q or QuadConfig()
    tol = config.PICARD_TOL if tol is None else tol
    max_iter = config.PICARD_MAX_ITER if max_iter is None else max_iter
    op = op or make_operator(sys, s, grid, q)
    n = sys.n

    if report is not None and not report.cl0:
        if not force:
            raise ContractionError(
                f"condition (cl0) fails: L0={report.L0:.4g} >= 1; smallest admissible start "
                f"{report.t_cl0}"
            )
        logger.warning(f"Condition (cl0) fails (L0={report.L0:.4g}); iterating anyway")

    integrand = ReducedIntegrand(sys, op)
    Z = np.zeros((n - 1, len(op.grid)), dtype=complex)
    history: List[float] = []
    growing = 0
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        f_nodes, f_tail, f_grid = integrand.evaluate(Z)
        full = -composite_stack(s, op.components(s, f_nodes, f_tail), f_grid)
        Z_new = full[: n - 1]
        update = float(np.max(np.sum(np.abs(Z_new - Z), axis=0)))
        if not np.isfinite(update):
            raise DivergenceError("Picard iterate became non-finite", float("inf"))
        if history and update > history[-1]:
            growing += 1
            if growing >= 3:
                growth = update / history[-1] if history[-1] > 0 else float("inf")
                raise DivergenceError(
                    f"Picard update grew for 3 consecutive iterations (factor {growth:.3g})", growth
                )
        else:
            growing = 0
        history.append(update)
        Z = Z_new
        logger.debug(f"Picard iteration {iterations}: update {update:.3e}")
        if update < tol:
            converged = True
            break

    if not converged:
        logger.warning(f"Picard iteration stopped at max_iter={max_iter} with update {history[-1]:.3e}")

    # One more sweep gives the residual of the integral equation and the top derivative
    f_nodes, f_tail, f_grid = integrand.evaluate(Z)
    full = -composite_stack(s, op.components(s, f_nodes, f_tail), f_grid)
    residual = float(np.max(np.sum(np.abs(full[: n - 1] - Z), axis=0)))

    P_nodes, _ = integrand.split(integrand.P)
    envelope = op.green_abs(s.beta, P_nodes, integrand.tail_P) + op.green_abs(-s.beta, P_nodes, integrand.tail_P)

    logger.info(
        f"Picard finished after {iterations} iterations: update {history[-1]:.3e}, residual {residual:.3e}"
    )
    return ZSolution(
        grid=op.grid.copy(), stack=Z, top=full[n - 1], integrand=f_grid, lam=sys.lam,
        iterations=iterations, update_norm=history[-1], update_history=history,
        envelope=envelope, residual=residual, converged=converged,
    )


def bound_check(z: ZSolution, s: SpectralData, report: ContractionReport, fallback_N: float = 2.0) -> dict:
    """
    Compare ||Z(t)|| with gamma~ N (I_beta + I_-beta)[P(r; lambda)](t).

    N = 1/(1-2K) when K < 1/2; otherwise the certificate is unavailable and
    ``fallback_N`` is used, which the result records.
    """
    certified = report.N is not None
    N = report.N if certified else fallback_N
    bound = s.gamma_tilde * N * z.envelope
    norm = z.norm_profile()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, norm / bound, np.where(norm > 0, np.inf, 0.0))
    return {
        "certified": certified,
        "N": N,
        "max_ratio": float(np.max(ratio)),
        "holds": bool(np.all(norm <= bound + 1e-14)),
    }


# Theta ladder =====================================================================

@dataclass
class LadderResult:
    """theta_1..theta_m as full derivative stacks (rows z..z^(n-1)) plus psi_m."""

    grid: np.ndarray
    thetas: List[np.ndarray]
    integrands: List[np.ndarray]
    psi: Optional[np.ndarray] = None
    explicit: bool = False

    def partial_sum(self, m: int) -> np.ndarray:
        return sum(self.thetas[:m])


def _series_mul(a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros_like(a)
    for k in range(order + 1):
        for i in range(k + 1):
            out[k] = out[k] + a[i] * b[k - i]
    return out


def graded_poly(poly: MultiIndexPoly, series: List[np.ndarray], order: int) -> np.ndarray:
    """
    Coefficients of eps^0..eps^order of poly evaluated at graded series.

    ``series[v]`` has shape (order+1, M) with series[v][k] the eps^k part of
    variable v.
    """
    shape = series[0].shape
    out = np.zeros(shape, dtype=complex)
    powers = [{0: _unit(shape)} for _ in series]
    for exponent, coeff in poly.terms.items():
        if sum(exponent) > order:
            continue
        term = _unit(shape)
        for v, e in enumerate(exponent):
            if e:
                term = _series_mul(term, _power_of(powers[v], series[v], e, order), order)
        out = out + coeff * term
    return out


def _unit(shape) -> np.ndarray:
    one = np.zeros(shape, dtype=complex)
    one[0] = 1
    return one


def _power_of(cache: dict, base: np.ndarray, e: int, order: int) -> np.ndarray:
    if e not in cache:
        cache[e] = _series_mul(_power_of(cache, base, e - 1, order), base, order)
    return cache[e]


def _compositions(total: int, parts: int):
    """Ordered tuples of positive integers of the given length and sum."""
    if parts == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _n5_monomials(sys: RiccatiSystem):
    """F for n = 5 as (coefficient, variables, r-index) triples, grouped as in the reduced equation."""
    at = sys.a_tilde
    constant = [
        (at[2], (0, 0)), (3 * at[3], (0, 1)), (4 * at[4], (0, 2)), (3 * at[4], (1, 1)),
        (5, (0, 3)), (10, (1, 2)),
        (at[3], (0, 0, 0)), (6 * at[4], (0, 0, 1)), (10, (0, 0, 2)), (15, (0, 1, 1)),
        (at[4], (0, 0, 0, 0)), (10, (0, 0, 0, 1)),
        (1, (0, 0, 0, 0, 0)),
    ]
    # r~_2, r~_3 and r_4 (= r~_4) multiply these
    perturbed = [
        (1, (0, 0), 2), (3, (0, 1), 3), (4, (0, 2), 4), (3, (1, 1), 4),
        (1, (0, 0, 0), 3), (6, (0, 0, 1), 4),
        (1, (0, 0, 0, 0), 4),
    ]
    return constant, perturbed


def _explicit_n5_terms(sys: RiccatiSystem, thetas_at: List[np.ndarray], dstack: np.ndarray, l: int) -> np.ndarray:
    constant, perturbed = _n5_monomials(sys)
    out = np.zeros(dstack.shape[1:], dtype=complex)

    def ordered_sum(variables, target):
        acc = 0
        for parts in _compositions(target, len(variables)):
            term = 1
            for v, order in zip(variables, parts):
                term = term * thetas_at[order - 1][v]
            acc = acc + term
        return acc

    for coeff, variables in constant:
        if len(variables) <= l:
            out = out + coeff * ordered_sum(variables, l)
    for coeff, variables, idx in perturbed:
        if len(variables) <= l - 1:
            out = out + coeff * dstack[idx] * ordered_sum(variables, l - 1)
    return out


def theta_ladder(
    sys: RiccatiSystem,
    s: SpectralData,
    m: int,
    grid: Sequence[float],
    q: Optional[QuadConfig] = None,
    z: Optional[ZSolution] = None,
    explicit: Optional[bool] = None,
    op: Optional[GreenOperator] = None,
) -> LadderResult:
    """
    theta_1 = -G[P(r; lambda)] and theta_l = -G[h_l] for l = 2..m.

    h_l = L(., theta_{l-1}) + (order-l part of F_a(phi)) + (order-(l-1) part
    of the r-dependent part of F(phi)), phi = sum_k theta_k, counting theta_k
    and every r_i as small of orders k and 1. For n = 5 the terms are written
    out monomial by monomial; otherwise they come from the stored polynomials
    of F by truncated series products.

    Args:
        sys: Reduced system
        s: Spectral data
        m: Ladder depth
        grid: Grid
        q: Quadrature settings
        z: When given, psi_m = z - sum theta_l is returned too
        explicit: Force (or forbid) the written-out n = 5 recursion
        op: Prebuilt GreenOperator

    Returns:
        LadderResult

    Raises:
        LadderError: If m < 1, or m exceeds LADDER_MAX_DEPTH for the generic recursion
    """
    n = sys.n
    explicit = (n == 5) if explicit is None else explicit
    if explicit and n != 5:
        raise LadderError("the written-out recursion exists for n = 5 only")
    if m < 1:
        raise LadderError("ladder depth must be at least 1")
    if not explicit and m > config.LADDER_MAX_DEPTH:
        raise LadderError(f"generic ladder depth {m} exceeds the cap {config.LADDER_MAX_DEPTH}")

    q = q or QuadConfig()
    op = op or make_operator(sys, s, grid, q)
    base = ReducedIntegrand(sys, op)
    dstack = base.dstack

    thetas: List[np.ndarray] = []
    thetas_at: List[np.ndarray] = []
    integrands: List[np.ndarray] = []
    for l in range(1, m + 1):
        if l == 1:
            h = base.P
            h_nodes, h_grid = base.split(h)
            h_tail = base.tail_P
        else:
            h = eval_L(sys, base.points, list(thetas_at[-1]), dstack)
            if explicit:
                h = h + _explicit_n5_terms(sys, thetas_at, dstack, l)
            else:
                series = [
                    np.array([np.zeros_like(h)] + [th[v] for th in thetas_at] + [np.zeros_like(h)] * (l - len(thetas_at)))
                    for v in range(n - 1)
                ]
                h = h + graded_poly(sys.F_const, series, l)[l]
                for idx in range(2, n):
                    if not sys.F_r[idx].is_zero():
                        h = h + base.r[idx] * graded_poly(sys.F_r[idx], series, l - 1)[l - 1]
            h_nodes, h_grid = base.split(h)
            h_tail = base.tail(h_grid[-1], with_P=False)

        theta = -composite_stack(s, op.components(s, h_nodes, h_tail), h_grid)
        thetas.append(theta)
        thetas_at.append(base.interpolate(theta[: n - 1]))
        integrands.append(h_grid)
        logger.debug(f"theta_{l} built, sup |theta_{l}| = {np.max(np.abs(theta[0])):.3e}")

    psi = None
    if z is not None:
        psi = z.stack - sum(theta[: n - 1] for theta in thetas)
    logger.info(f"Theta ladder of depth {m} built ({'explicit n=5' if explicit else 'generic'} recursion)")
    return LadderResult(grid=op.grid.copy(), thetas=thetas, integrands=integrands, psi=psi, explicit=explicit)


def l1_tail(grid: np.ndarray, values: np.ndarray, window: float = 0.5) -> float:
    """Trapezoid integral of sum_i |values_i| over the last part of the grid."""
    start = int(len(grid) * (1 - window))
    mag = np.sum(np.abs(np.atleast_2d(values)), axis=0)[start:]
    return float(trapezoid(mag, grid[start:]))
