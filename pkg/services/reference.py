"""
Reference integration of the original equation.

The companion system Y' = A(t) Y (y_i' = y_{i+1}, y_{n-1}' = -sum (a_i +
r_i(t)) y_i) is integrated with the fixed-step Dormand-Prince 5(4) pair,
using the embedded estimate only to report the largest local error. States
are rescaled once they exceed RESCALE_THRESHOLD and the scale is kept as a
log offset, so ratios such as y'/y and W / prod y_i stay finite.

mode_solution follows the solution attached to a root that is not the one of
largest real part. After every step it removes the components along the
dominant solutions, using a forward basis of the dominant subspace and an
adjoint basis integrated backward from beyond the grid end.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from config import config
from services.bellpoly import complete_bell, eval_poly
from services.green import GridFunction
from services.perturb import PerturbedODE
from utils.errors import NumericalError
from utils.logger import get_logger

logger = get_logger("reference")

# Dormand-Prince 5(4): stage times, Butcher rows, error weights
EVAL_STAGES = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
BT = [
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
TR = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


class IntegrationError(NumericalError):
    """The reference integration produced non-finite values or got bad input."""
    pass


@dataclass
class Trajectory:
    """
    States (y, y', ..., y^(n-1)) on the grid, up to the factor exp(log_scale).

    ``max_error`` is the largest relative local error estimate seen.
    """

    grid: np.ndarray
    states: np.ndarray
    log_scale: np.ndarray
    step: float
    order: int = 5
    max_error: float = 0.0
    rescalings: int = 0

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def values(self, i: int = 0) -> np.ndarray:
        """y^(i) on the grid, rescaling undone (may overflow to inf)."""
        with np.errstate(over="ignore"):
            return self.states[:, i] * np.exp(self.log_scale)

    def log_abs(self) -> np.ndarray:
        """log |y| on the grid."""
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.states[:, 0])) + self.log_scale


def _companion(c: np.ndarray, Y: np.ndarray) -> np.ndarray:
    out = np.empty_like(Y)
    out[:-1] = Y[1:]
    out[-1] = -(c @ Y)
    return out


def _adjoint(c: np.ndarray, W: np.ndarray) -> np.ndarray:
    """-A^T W for the companion matrix A."""
    out = np.empty_like(W)
    out[0] = c[0] * W[-1]
    weights = c[1:].reshape((-1,) + (1,) * (W.ndim - 1))
    out[1:] = weights * W[-1] - W[:-1]
    return out


class CompanionIntegrator:
    """Fixed-step DP5(4) for the companion system of one equation."""

    def __init__(self, ode: PerturbedODE, h: Optional[float] = None):
        self.ode = ode
        self.h = config.RK_STEP if h is None else float(h)
        if self.h <= 0:
            raise IntegrationError("step must be positive")

    def steps_for(self, t_start: float, t_stop: float) -> Tuple[int, float]:
        span = t_stop - t_start
        steps = max(1, int(np.ceil(abs(span) / self.h - 1e-9)))
        return steps, span / steps

    def run(
        self,
        Y0: np.ndarray,
        t_start: float,
        t_stop: float,
        adjoint: bool = False,
        after_step: Optional[Callable[[int, np.ndarray], np.ndarray]] = None,
        steps: Optional[int] = None,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float, int]:
        """
        Integrate from t_start to t_stop (either direction).

        Args:
            Y0: Initial state, shape (n,) or (n, m)
            adjoint: Integrate W' = -A^T W instead
            after_step: Called as after_step(k, Y) after step k (state now at
                grid index k+1); returns the state to continue with
            steps: Number of steps; derived from h when omitted

        Returns:
            (grid, states, log_scale, max relative error estimate, rescalings)
        """
        if steps is None:
            steps, hh = self.steps_for(t_start, t_stop)
        else:
            hh = (t_stop - t_start) / steps
        grid = t_start + hh * np.arange(steps + 1)
        stage_times = grid[:-1, None] + hh * EVAL_STAGES[None, :]
        table = np.moveaxis(self.ode.coefficient_values(stage_times), 0, -1)  # (steps, 7, n)
        rhs = _adjoint if adjoint else _companion

        Y = np.array(Y0, dtype=complex)
        states = np.empty((steps + 1,) + Y.shape, dtype=complex)
        log_scale = np.zeros(steps + 1)
        states[0] = Y
        scale = 0.0
        max_error = 0.0
        rescalings = 0

        for k in range(steps):
            c = table[k]
            ks = [rhs(c[0], Y)]
            for i, row in enumerate(BT):
                incr = sum(a * kj for a, kj in zip(row, ks) if a != 0)
                ks.append(rhs(c[i + 1], Y + hh * incr))
            Y_new = Y + hh * sum(b * kj for b, kj in zip(BT[-1], ks) if b != 0)
            err = hh * sum(e * kj for e, kj in zip(TR, ks) if e != 0)

            norm = float(np.max(np.abs(Y_new)))
            if not np.isfinite(norm):
                raise IntegrationError(f"non-finite state at t={grid[k + 1]:.6g}")
            max_error = max(max_error, float(np.max(np.abs(err))) / max(norm, 1e-300))

            if after_step is not None:
                Y_new = after_step(k, Y_new)
                norm = float(np.max(np.abs(Y_new)))
            if norm > config.RESCALE_THRESHOLD:
                Y_new = Y_new / norm
                scale += np.log(norm)
                rescalings += 1
                logger.debug(f"Rescaled state by {norm:.3e} at t={grid[k + 1]:.6g}")
            Y = Y_new
            states[k + 1] = Y
            log_scale[k + 1] = scale

        if rescalings:
            logger.info(f"Integration rescaled {rescalings} times (log scale {scale:.4g})")
        return grid, states, log_scale, max_error, rescalings


def reference_integrate(
    ode: PerturbedODE,
    y0: Sequence[complex],
    t_span: Tuple[float, float],
    h: Optional[float] = None,
) -> Trajectory:
    """
    Integrate the equation from y0 = (y, y', ..., y^(n-1)) at t_span[0].

    Raises:
        IntegrationError: If y0 has the wrong length, the span is empty or
            the state stops being finite
    """
    y0 = np.asarray(y0, dtype=complex)
    if y0.shape != (ode.n,):
        raise IntegrationError(f"initial state needs {ode.n} entries, got {y0.shape}")
    t_start, t_stop = map(float, t_span)
    if t_stop <= t_start:
        raise IntegrationError("t_span must be increasing")
    integrator = CompanionIntegrator(ode, h)
    grid, states, log_scale, max_error, rescalings = integrator.run(y0, t_start, t_stop)
    logger.info(f"Reference integration on [{t_start}, {t_stop}]: max local error {max_error:.2e}")
    return Trajectory(grid, states, log_scale, step=float(grid[1] - grid[0]),
                      max_error=max_error, rescalings=rescalings)


def eigen_vector(lam: complex, n: int) -> np.ndarray:
    """(1, lambda, ..., lambda^(n-1)), the initial slopes of e^{lambda t}."""
    return complex(lam) ** np.arange(n)


def mode_solution(
    ode: PerturbedODE,
    roots: Sequence[complex],
    index: int,
    t_span: Tuple[float, float],
    h: Optional[float] = None,
    pad: Optional[float] = None,
    tol: float = 1e-9,
) -> Trajectory:
    """
    Solution attached to roots[index], started from its eigenvector.

    Components along the solutions of roots with larger real part are
    projected out after every step; without such roots this is a plain
    reference_integrate run.

    Args:
        ode: Equation
        roots: Sorted characteristic roots
        index: Root to follow
        t_span: Grid span
        h: Step
        pad: Distance beyond t_span[1] where the adjoint basis starts
        tol: Real parts closer than tol count as equal
    """
    roots = [complex(r) for r in roots]
    lam = roots[index]
    n = ode.n
    dominant = [k for k, r in enumerate(roots) if r.real > lam.real + tol]
    if not dominant:
        return reference_integrate(ode, eigen_vector(lam, n), t_span, h)

    pad = config.ADJOINT_PAD if pad is None else float(pad)
    integrator = CompanionIntegrator(ode, h)
    t_start, t_stop = map(float, t_span)
    steps, hh = integrator.steps_for(t_start, t_stop)
    pad_steps = max(1, int(np.ceil(pad / hh - 1e-9)))
    t_far = t_stop + pad_steps * hh

    V = np.array([eigen_vector(r, n) for r in roots]).T
    dual = np.linalg.inv(V)
    W_far = dual[dominant].T  # (n, d)

    def orthonormalize(_: int, W: np.ndarray) -> np.ndarray:
        return np.linalg.qr(W)[0]

    _, W_states, _, _, _ = integrator.run(W_far, t_far, t_start, adjoint=True,
                                          after_step=orthonormalize, steps=steps + pad_steps)
    W_grid = W_states[::-1][: steps + 1]  # aligned with the forward grid

    d = len(dominant)
    block0 = np.concatenate([V[:, dominant], V[:, [index]]], axis=1)

    def deflate(k: int, Y: np.ndarray) -> np.ndarray:
        basis = np.linalg.qr(Y[:, :d])[0]
        W = W_grid[k + 1]
        y = Y[:, d:]
        coeff = np.linalg.solve(W.T @ basis, W.T @ y)
        y = y - basis @ coeff
        return np.concatenate([basis, y], axis=1)

    grid, states, log_scale, max_error, rescalings = integrator.run(block0, t_start, t_stop,
                                                                    after_step=deflate, steps=steps)
    logger.info(f"Mode solution for lambda={lam} with {d} dominant root(s) deflated")
    return Trajectory(grid, states[:, :, d], log_scale, step=float(hh),
                      max_error=max_error, rescalings=rescalings)


def fundamental_trajectories(
    ode: PerturbedODE,
    roots: Sequence[complex],
    t_span: Tuple[float, float],
    h: Optional[float] = None,
) -> List[Trajectory]:
    """One mode_solution per root."""
    return [mode_solution(ode, roots, k, t_span, h) for k in range(len(roots))]


@dataclass
class LogDerivativeProfile:
    """Samples of y^(i)/y; ``gaps`` marks points where y vanishes to working precision."""

    grid: np.ndarray
    values: np.ndarray
    gaps: np.ndarray

    def grid_function(self) -> GridFunction:
        if np.any(self.gaps):
            raise IntegrationError("profile has gaps at zero crossings of y")
        return GridFunction(self.grid, self.values)


def log_derivative_profile(traj: Trajectory, i: int, gap_tol: float = 1e-10) -> LogDerivativeProfile:
    """
    y^(i)/y along a trajectory.

    Points where |y| <= gap_tol * ||(y, ..., y^(n-1))|| are zero crossings;
    their samples are NaN and flagged in ``gaps``.
    """
    if not 0 <= i < traj.n:
        raise IntegrationError(f"derivative index {i} outside 0..{traj.n - 1}")
    y = traj.states[:, 0]
    scale = np.max(np.abs(traj.states), axis=1)
    gaps = np.abs(y) <= gap_tol * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(gaps, np.nan + 0j, traj.states[:, i] / np.where(gaps, 1.0, y))
    if np.any(gaps):
        logger.warning(f"Log-derivative profile has {int(gaps.sum())} gap(s) at zero crossings")
    return LogDerivativeProfile(traj.grid, values, gaps)


def wronskian_check(trajs: Sequence[Trajectory]) -> GridFunction:
    """
    W(t) / prod y_k(t) = det[y_k^(j)/y_k] on the common grid.

    Tends to the Vandermonde product of the roots the trajectories follow
    when they form a fundamental system.
    """
    n = len(trajs)
    if n == 0 or any(tr.n != n for tr in trajs):
        raise IntegrationError("need n trajectories of an order-n equation")
    grid = trajs[0].grid
    if any(len(tr.grid) != len(grid) or not np.allclose(tr.grid, grid) for tr in trajs):
        raise IntegrationError("trajectories must share one grid")
    ratios = np.stack([tr.states / tr.states[:, :1] for tr in trajs], axis=1)  # (N, k, j)
    return GridFunction(grid, np.linalg.det(ratios))


def ode_residual(ode: PerturbedODE, traj: Trajectory) -> float:
    """
    Re-substitution residual of a trajectory.

    y^(n) is recovered from y^(n-1) with a fourth-order central difference
    and compared with -sum (a_i + r_i) y^(i), relative to the state size.
    Only interior points (two from each end) are used. Stencil points are
    brought to the scale of the center point first, so rescalings inside a
    stencil do not show up as jumps.
    """
    h = traj.step
    top = traj.states[:, -1]
    ls = traj.log_scale
    N = len(top)

    def shifted(j: int) -> np.ndarray:
        return top[j:N - 4 + j] * np.exp(ls[j:N - 4 + j] - ls[2:N - 2])

    d_top = (shifted(0) - 8 * shifted(1) + 8 * shifted(3) - shifted(4)) / (12 * h)
    t = traj.grid[2:-2]
    coeffs = ode.coefficient_values(t)
    rhs = -np.sum(coeffs * traj.states[2:-2].T, axis=0)
    scale = np.max(np.abs(traj.states[2:-2]), axis=1)
    return float(np.max(np.abs(d_top - rhs) / scale))


def bell_ratios(lam: complex, stack: np.ndarray) -> np.ndarray:
    """
    y^(j)/y = B_j(w, w', ..., w^(j-1)) for j = 0..n-1, where w = lam + z.

    ``stack`` holds z..z^(n-2) on a grid; the result has shape (n, N).
    """
    n = stack.shape[0] + 1
    w = [lam + stack[0]] + list(stack[1:])
    ones = np.ones(stack.shape[1], dtype=complex)
    rows = [ones]
    for j in range(1, n):
        rows.append(ones * eval_poly(complete_bell(j), w[:j]))
    return np.array(rows)


def predicted_wronskian(solutions: Sequence) -> GridFunction:
    """
    det[y_k^(j)/y_k] predicted from reduced-equation solutions, one per root.

    Each solution needs ``lam``, ``stack`` and ``grid`` (a ZSolution). The
    normalized Wronskian of the reference trajectories follows this curve;
    it reaches the Vandermonde product only as z_k -> 0.
    """
    n = len(solutions)
    if n == 0 or any(z.stack.shape[0] + 1 != n for z in solutions):
        raise IntegrationError("need one solution per root of an order-n equation")
    grid = solutions[0].grid
    if any(len(z.grid) != len(grid) or not np.allclose(z.grid, grid) for z in solutions):
        raise IntegrationError("solutions must share one grid")
    ratios = np.stack([bell_ratios(z.lam, z.stack).T for z in solutions], axis=1)  # (N, k, j)
    return GridFunction(grid, np.linalg.det(ratios))
