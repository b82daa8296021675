"""
Asymptotic formulas for the solution attached to a root lambda.

Every formula is stored in log space as

    log y(t) = lambda (t - t0) + sum of components + remainder

where each component is a grid-sampled value together with its derivative
(its contribution to y'/y). The remainder makes the sum reproduce
lambda (t - t0) + int z exactly; the formula proper omits it and carries an
error envelope instead.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from models.schemas import QuadConfig
from services.charpoly import SpectralData, SpectralError, find_roots, spectral_data
from services.green import GreenOperator, GridFunction
from services.perturb import PerturbedODE, decay_order, in_lp
from services.riccati import RiccatiSystem, build_riccati, eval_F, eval_L
from services.solver import (
    LadderResult,
    ReducedIntegrand,
    ZSolution,
    contraction_constants,
    make_operator,
    picard_solve,
    theta_ladder,
)
from utils.logger import get_logger

logger = get_logger("asympt")

FORMULA_KINDS = ("general", "levinson", "hartman_wintner", "refined", "refined_second", "ladder")


@dataclass
class LogTerm:
    """One factor exp(values) of a formula; ``rates`` is d/dt values."""

    name: str
    values: np.ndarray
    rates: np.ndarray

    def at(self, grid: np.ndarray, t):
        return GridFunction(grid, self.values)(t), GridFunction(grid, self.rates)(t)


@dataclass
class AsymptoticReport:
    """An assembled formula with its error envelope and applicability."""

    kind: str
    lam: complex
    t0: float
    prefactor: complex
    grid: np.ndarray
    components: List[LogTerm]
    envelope: np.ndarray
    remainder: Optional[LogTerm] = None
    applicable: bool = True
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def component(self, name: str) -> LogTerm:
        for term in self.components:
            if term.name == name:
                return term
        raise KeyError(name)

    def log_total(self, with_remainder: bool = False) -> np.ndarray:
        """Sum of the log components on the grid (without lambda (t - t0))."""
        total = np.zeros(len(self.grid), dtype=complex)
        for term in self.components:
            total = total + term.values
        if with_remainder and self.remainder is not None:
            total = total + self.remainder.values
        return total

    def to_dict(self, samples: int = 21) -> dict:
        idx = np.unique(np.linspace(0, len(self.grid) - 1, samples).round().astype(int))
        return {
            "kind": self.kind,
            "lambda": self.lam,
            "t0": self.t0,
            "prefactor": self.prefactor,
            "applicable": self.applicable,
            "diagnostics": self.diagnostics,
            "factors": {term.name: self.grid_samples(term.values, idx) for term in self.components},
            "remainder": None if self.remainder is None else self.grid_samples(self.remainder.values, idx),
            "envelope": self.grid_samples(self.envelope, idx),
        }

    def grid_samples(self, values: np.ndarray, idx: np.ndarray) -> List[list]:
        return [[float(self.grid[k]), values[k]] for k in idx]


def check_prefactor(s: SpectralData, tol: float = 1e-8) -> complex:
    """
    (-1)^n prod gamma_j^-1, checked against sum 1/(Gamma_j gamma_j).

    Raises:
        SpectralError: If the two expressions disagree
    """
    prefactor = s.prefactor
    other = s.weight_sum
    if abs(prefactor - other) > tol * max(1.0, abs(prefactor)):
        raise SpectralError(f"prefactor {prefactor} differs from sum 1/(Gamma gamma) = {other}")
    return prefactor


class _Assembly:
    """Shared evaluation context: operator, tabulated integrand, Green weights."""

    def __init__(self, z: ZSolution, s: SpectralData, sys: RiccatiSystem, q: Optional[QuadConfig]):
        self.z = z
        self.s = s
        self.sys = sys
        self.op: GreenOperator = make_operator(sys, s, z.grid, q or QuadConfig())
        self.base = ReducedIntegrand(sys, self.op)
        self.grid = self.op.grid
        self.prefactor = check_prefactor(s)
        self.log_weights = 1.0 / (s.Gammas * s.gammas)

        f_nodes, f_tail, f_grid = self.base.evaluate(z.stack)
        P_nodes, P_grid = self.base.split(self.base.P)
        self.P = (P_nodes, self.base.tail_P, P_grid)
        self.rest = (f_nodes - P_nodes, f_tail - self.base.tail_P, f_grid - P_grid)

    def correction(self, name: str, h) -> LogTerm:
        """-sum G_{gamma_j}[h](t)/(Gamma_j gamma_j) with rate -sum G_{gamma_j}[h]/Gamma_j - prefactor h."""
        nodes, tail, grid_values = h
        comps = self.op.components(self.s, nodes, tail)
        values = -(self.log_weights @ comps)
        rates = -((1.0 / self.s.Gammas) @ comps) - self.prefactor * grid_values
        return LogTerm(name, values, rates)

    def integral(self, name: str, h) -> LogTerm:
        """prefactor * int_{t0}^t h."""
        nodes, _, grid_values = h
        return LogTerm(name, self.prefactor * self.op.integral(nodes), self.prefactor * grid_values)

    def remainder(self, terms: Sequence[LogTerm]) -> LogTerm:
        """int z minus the listed terms, with int z taken from the Green identity."""
        f = tuple(p + r for p, r in zip(self.P, self.rest))
        int_z = self.integral("", f).values + self.correction("", f).values
        int_z = int_z - int_z[0]
        values = int_z - sum(t.values for t in terms)
        rates = self.z.stack[0] - sum(t.rates for t in terms)
        return LogTerm("remainder", values, rates)

    def I_sum(self, h) -> np.ndarray:
        """sum_j I_{alpha_j}[h] on the grid."""
        nodes, tail, _ = h
        return sum(self.op.green_abs(alpha, nodes, tail) for alpha in self.s.alphas)

    def I_pair(self, h) -> np.ndarray:
        """(I_beta + I_-beta)[h] on the grid."""
        nodes, tail, _ = h
        beta = self.s.beta
        return self.op.green_abs(beta, nodes, tail) + self.op.green_abs(-beta, nodes, tail)

    def tail_of_abs(self, h) -> np.ndarray:
        """int_t^inf |h| for every grid t."""
        nodes, tail, _ = h
        return np.real(self.op.tail_integral(np.abs(nodes), np.abs(tail)))

    def tail_of_grid(self, values: np.ndarray) -> np.ndarray:
        """int_t^inf of a nonnegative grid-sampled function, carried past the grid by the envelope."""
        inner = np.clip(CubicSpline(self.grid, values)(self.op.nodes), 0.0, None)
        return np.real(self.op.tail_integral(inner, self.base.tail(values[-1], with_P=False).real))

    def theta_pieces(self, theta: np.ndarray):
        """R(., theta) = L(., theta) + F(., Theta) on nodes, tail and grid, and Theta at the points."""
        Theta = self.base.interpolate(theta[: self.sys.n - 1])
        R = self.base.nonlinear(Theta)
        R_nodes, R_grid = self.base.split(R)
        return (R_nodes, self.base.tail(R_grid[-1], with_P=False), R_grid), Theta

    def report(self, kind: str, components: List[LogTerm], envelope: np.ndarray,
               applicable: bool, diagnostics: Dict[str, float]) -> AsymptoticReport:
        rep = AsymptoticReport(
            kind=kind, lam=self.sys.lam, t0=float(self.grid[0]), prefactor=self.prefactor,
            grid=self.grid.copy(), components=components, envelope=np.real(envelope),
            remainder=self.remainder(components), applicable=applicable, diagnostics=diagnostics,
        )
        if not applicable:
            logger.warning(f"Formula '{kind}' assembled outside its hypotheses: {diagnostics}")
        logger.info(f"Assembled '{kind}' formula for lambda={self.sys.lam}")
        return rep


def _orders(grid: np.ndarray, **series: np.ndarray) -> Dict[str, float]:
    return {f"decay_order_{name}": decay_order(grid, values) for name, values in series.items()}


def assemble_general(z: ZSolution, s: SpectralData, sys: RiccatiSystem, q: Optional[QuadConfig] = None) -> AsymptoticReport:
    """
    y = [1 + O(sum_j I_{alpha_j}[L + F])] e^{lambda (t - t0)}
        * exp(-sum_j G_{gamma_j}[P(r; lambda)] / (Gamma_j gamma_j))
        * exp(prefactor * int [P(r; lambda) + L + F]).
    """
    ctx = _Assembly(z, s, sys, q)
    f = tuple(p + r for p, r in zip(ctx.P, ctx.rest))
    components = [ctx.correction("green_correction", ctx.P), ctx.integral("integral", f)]
    envelope = ctx.I_sum(ctx.rest)
    diagnostics = {"picard_residual": z.residual}
    return ctx.report("general", components, envelope, z.converged, diagnostics)


def assemble_levinson(z: ZSolution, s: SpectralData, sys: RiccatiSystem, q: Optional[QuadConfig] = None) -> AsymptoticReport:
    """y = [1 + O(int_t^inf (I_beta + I_-beta)[P(r; lambda)])] e^{lambda (t - t0)}; needs P(r; lambda) in L^1."""
    ctx = _Assembly(z, s, sys, q)
    envelope = ctx.tail_of_grid(ctx.I_pair(ctx.P))
    diagnostics = _orders(ctx.grid, P=ctx.P[2])
    diagnostics["l1_tail_P"] = float(ctx.tail_of_abs(ctx.P)[len(ctx.grid) // 2])
    applicable = in_lp(diagnostics["decay_order_P"], 1.0)
    return ctx.report("levinson", [], envelope, applicable, diagnostics)


def assemble_hw(z: ZSolution, s: SpectralData, sys: RiccatiSystem, q: Optional[QuadConfig] = None) -> AsymptoticReport:
    """
    Green correction of P(r; lambda) and prefactor * int P(r; lambda).

    Error envelope sum_j I_{alpha_j}[L + F] + int_t^inf (|L| + |F|); needs
    P(r; lambda) and its lambda-derivatives in some L^p, 1 < p <= 2.
    """
    ctx = _Assembly(z, s, sys, q)
    components = [ctx.correction("green_correction", ctx.P), ctx.integral("integral", ctx.P)]
    envelope = ctx.I_sum(ctx.rest) + ctx.tail_of_abs(ctx.rest)
    dstack = sys.bundle.derivative_stack(ctx.grid)
    diagnostics = _orders(ctx.grid, P=ctx.P[2], **{f"dP{k}": dstack[k] for k in range(1, sys.n)})
    applicable = all(in_lp(order, 2.0) for order in diagnostics.values())
    return ctx.report("hartman_wintner", components, envelope, applicable, diagnostics)


def assemble_refined(
    z: ZSolution,
    s: SpectralData,
    sys: RiccatiSystem,
    u_mode: str = "tut",
    q: Optional[QuadConfig] = None,
    theta: Optional[np.ndarray] = None,
) -> AsymptoticReport:
    """
    Formulas through u = z - theta with theta = -G[P(r; lambda)].

    ``u_mode="tut"``: Green correction of P and prefactor * int P with the
    envelope int_t^inf (I_beta + I_-beta)[R(., theta)]; needs R in L^1.
    ``u_mode="teots"``: corrections of P + R(., theta) with the envelope
    sum_j I_{alpha_j}[L(., u) + F~(., U)] + int_t^inf (|L(., u)| + |F~(., U)|),
    F~(U) = F(U + Theta) - F(Theta); needs R in L^p, 1 < p <= 2.

    Args:
        theta: Full derivative stack of theta (rows z..z^(n-1)); built when omitted

    Raises:
        ValueError: For an unknown u_mode
    """
    if u_mode not in ("tut", "teots"):
        raise ValueError(f"unknown u_mode '{u_mode}'")
    ctx = _Assembly(z, s, sys, q)
    if theta is None:
        theta = theta_ladder(sys, s, 1, ctx.grid, q, explicit=False, op=ctx.op).thetas[0]
    R, Theta = ctx.theta_pieces(theta)
    diagnostics = _orders(ctx.grid, P=ctx.P[2], R=R[2])

    if u_mode == "tut":
        components = [ctx.correction("green_correction", ctx.P), ctx.integral("integral", ctx.P)]
        envelope = ctx.tail_of_grid(ctx.I_pair(R))
        applicable = in_lp(diagnostics["decay_order_R"], 1.0)
        return ctx.report("refined", components, envelope, applicable, diagnostics)

    n = sys.n
    U = ctx.base.interpolate(z.stack - theta[: n - 1])
    points = ctx.base.points
    L_u = eval_L(sys, points, list(U), ctx.base.dstack)
    F_shift = eval_F(sys, points, list(U + Theta), ctx.base.r) - eval_F(sys, points, list(Theta), ctx.base.r)
    rest_nodes, rest_grid = ctx.base.split(L_u + F_shift)
    rest = (rest_nodes, ctx.base.tail(rest_grid[-1], with_P=False), rest_grid)
    PR = tuple(p + r for p, r in zip(ctx.P, R))

    components = [ctx.correction("green_correction", PR), ctx.integral("integral", PR)]
    envelope = ctx.I_sum(rest) + ctx.tail_of_abs(rest)
    dstack = sys.bundle.derivative_stack(ctx.grid)
    diagnostics.update(_orders(ctx.grid, **{f"dP{k}": dstack[k] for k in range(1, n)}))
    applicable = in_lp(diagnostics["decay_order_R"], 2.0) and all(
        in_lp(diagnostics[f"decay_order_dP{k}"], 2.0) for k in range(1, n)
    )
    return ctx.report("refined_second", components, envelope, applicable, diagnostics)


def _antiderivative(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    re = CubicSpline(grid, values.real).antiderivative()(grid)
    im = CubicSpline(grid, values.imag).antiderivative()(grid)
    return re + 1j * im


def assemble_ladder(
    ladder: LadderResult,
    s: SpectralData,
    sys: RiccatiSystem,
    z: Optional[ZSolution] = None,
) -> AsymptoticReport:
    """
    y = (1 + o(1)) e^{lambda (t - t0)} exp(int sum_l theta_l).

    With a ZSolution the remainder int psi_m is stored and the envelope is
    int_t^{t_end} |psi_m| (finite horizon).
    """
    grid = ladder.grid
    prefactor = check_prefactor(s)
    components = []
    for l, theta in enumerate(ladder.thetas, start=1):
        components.append(LogTerm(f"theta_{l}", _antiderivative(grid, theta[0]), theta[0]))

    remainder = None
    envelope = np.zeros(len(grid))
    if z is not None:
        psi = z.stack[0] - sum(theta[0] for theta in ladder.thetas)
        remainder = LogTerm("remainder", _antiderivative(grid, psi), psi)
        cumulative = np.real(_antiderivative(grid, np.abs(psi).astype(complex)))
        envelope = cumulative[-1] - cumulative

    logger.info(f"Assembled ladder formula of depth {len(ladder.thetas)} for lambda={sys.lam}")
    return AsymptoticReport(
        kind="ladder", lam=sys.lam, t0=float(grid[0]), prefactor=prefactor, grid=grid.copy(),
        components=components, envelope=envelope, remainder=remainder,
        diagnostics={"depth": float(len(ladder.thetas))},
    )


def eval_formula(rep: AsymptoticReport, t, with_remainder: bool = False) -> dict:
    """
    Evaluate a report at t.

    Returns:
        dict with ``y``, ``log_y`` and ``log_derivative``; the log-derivative
        is lambda plus the rates of the evaluated components
    """
    t_arr = np.asarray(t, dtype=float)
    log_y = rep.lam * (t_arr - rep.t0) + 0j
    rate = np.full(t_arr.shape, rep.lam, dtype=complex)
    terms = list(rep.components)
    if with_remainder and rep.remainder is not None:
        terms.append(rep.remainder)
    for term in terms:
        value, d = term.at(rep.grid, t_arr)
        log_y = log_y + value
        rate = rate + d
    with np.errstate(over="ignore"):
        y = np.exp(log_y)
    if t_arr.ndim == 0:
        return {"y": complex(y), "log_y": complex(log_y), "log_derivative": complex(rate)}
    return {"y": y, "log_y": log_y, "log_derivative": rate}


def assemble(kind: str, z: ZSolution, s: SpectralData, sys: RiccatiSystem,
             q: Optional[QuadConfig] = None, ladder: Optional[LadderResult] = None) -> AsymptoticReport:
    """Dispatch on the formula name used in run configurations."""
    if kind == "general":
        return assemble_general(z, s, sys, q)
    if kind == "levinson":
        return assemble_levinson(z, s, sys, q)
    if kind == "hartman_wintner":
        return assemble_hw(z, s, sys, q)
    if kind == "refined":
        return assemble_refined(z, s, sys, "tut", q)
    if kind == "refined_second":
        return assemble_refined(z, s, sys, "teots", q)
    if kind == "ladder":
        if ladder is None:
            raise ValueError("ladder formula needs a theta ladder")
        return assemble_ladder(ladder, s, sys, z)
    raise ValueError(f"unknown formula kind '{kind}'")


def _solve_each_root(
    ode: PerturbedODE,
    grid: Sequence[float],
    q: QuadConfig,
    roots: Sequence[complex],
    tol: Optional[float],
    M: float,
    force: bool,
) -> Iterator[Tuple[SpectralData, RiccatiSystem, ZSolution]]:
    for k, lam in enumerate(roots):
        sys = build_riccati(ode, lam)
        s = spectral_data(roots, lam)
        op = make_operator(sys, s, grid, q)
        contraction = contraction_constants(sys, s, M, grid, q, op=op)
        z = picard_solve(sys, s, grid, q, tol=tol, report=contraction, force=force, op=op)
        logger.debug(f"Fundamental system member {k} (lambda={lam}) solved")
        yield s, sys, z


def fundamental_solutions(
    ode: PerturbedODE,
    grid: Sequence[float],
    q: Optional[QuadConfig] = None,
    roots: Optional[Sequence[complex]] = None,
    tol: Optional[float] = None,
    M: float = 1.0,
    force: bool = False,
) -> List[ZSolution]:
    """Picard solution of the reduced equation for every characteristic root."""
    q = q or QuadConfig()
    roots = list(roots) if roots is not None else find_roots(ode.charpoly())
    return [z for _, _, z in _solve_each_root(ode, grid, q, roots, tol, M, force)]


def fundamental_system(
    ode: PerturbedODE,
    grid: Sequence[float],
    q: Optional[QuadConfig] = None,
    roots: Optional[Sequence[complex]] = None,
    tol: Optional[float] = None,
    M: float = 1.0,
    force: bool = False,
) -> List[AsymptoticReport]:
    """
    General formula for every characteristic root in turn.

    The n reports describe y_k ~ e^{lambda_k (t - t0)} exp(int z_k), a
    fundamental system when every root satisfies the contraction hypothesis.
    """
    q = q or QuadConfig()
    roots = list(roots) if roots is not None else find_roots(ode.charpoly())
    return [assemble_general(z, s, sys, q) for s, sys, z in _solve_each_root(ode, grid, q, roots, tol, M, force)]
