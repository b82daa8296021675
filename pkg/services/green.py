"""
Scalar Green operators and the composite operator for Dz = f.

For Re w != 0 the kernel g_w(t, s) = -sgn(Re w) e^{w(t-s)} is supported on
s < t when Re w < 0 and on s > t when Re w > 0, so that G_w[f] solves
z' - w z = f and stays bounded. I_w is the absolute companion (it only sees
Re w). Integrals use fixed-order Gauss-Legendre rules on uniform panels; the
semi-infinite integrals for Re w > 0 stop at a grid-aligned cut where the
exponential times the decay envelope falls below the tail tolerance.

Two front ends share the rules: pointwise functions (kernel, scalar_green,
scalar_abs, composite_green) taking a callable f, and GreenOperator, which
evaluates all grid values at once by exact panel recurrences.
"""

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from models.schemas import QuadConfig
from utils.errors import NumericalError
from utils.logger import get_logger

logger = get_logger("green")


class GreenError(NumericalError):
    """Precondition of a Green operator violated (Re w = 0, bad grid)."""
    pass


class TruncationWarning(UserWarning):
    """The tail bound was not reached within the maximal interval length."""

    def __init__(self, message: str, bound: float):
        super().__init__(message)
        self.bound = bound


@lru_cache(maxsize=16)
def _gauss_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return leggauss(order)


def panel_nodes(a: float, b: float, q: QuadConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b] split into panels of width <= q.panel_width."""
    if b <= a:
        return np.empty(0), np.empty(0)
    panels = max(1, int(np.ceil((b - a) / q.panel_width - 1e-9)))
    x, w = _gauss_rule(q.panel_order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _check_omega(omega: complex) -> float:
    alpha = float(np.real(omega))
    if alpha == 0:
        raise GreenError(f"Green operator needs Re w != 0, got w={omega}")
    return alpha


def kernel(omega: complex, t: float, s: float) -> complex:
    """g_w(t, s); zero on the diagonal and on the non-integrated side."""
    alpha = _check_omega(omega)
    sign = np.sign(alpha)
    if sign * (t - s) < 0:
        return complex(-sign * np.exp(omega * (t - s)))
    return 0j


def tail_bound(
    omega: complex,
    envelope: Callable,
    t: float,
    tol: float,
    q: QuadConfig,
) -> float:
    """
    Smallest T = t + k * panel_width with e^{-Re w (T - t)} envelope(T) / Re w < tol.

    Args:
        omega: Exponent with Re w > 0
        envelope: Decay envelope of the integrand, nonincreasing far out
        t: Lower end of the tail integral
        tol: Tail tolerance
        q: Quadrature settings (panel width, max interval length)

    Returns:
        The cut T_cut

    Warns:
        TruncationWarning: If the condition fails within q.max_interval; the
            cut is then t + max_interval and the warning carries the bound
    """
    alpha = _check_omega(omega)
    if alpha < 0:
        raise GreenError("tail_bound is only defined for Re w > 0")
    steps = int(np.floor(q.max_interval / q.panel_width + 1e-9))
    offsets = q.panel_width * np.arange(steps + 1)
    env = np.abs(np.asarray(envelope(t + offsets), dtype=complex)) * np.ones_like(offsets)
    bound = np.exp(-alpha * offsets) * env / alpha
    ok = np.nonzero(bound < tol)[0]
    if len(ok):
        return float(t + offsets[ok[0]])

    message = f"tail bound {bound[-1]:.3e} above tolerance {tol:.1e} after {q.max_interval} units"
    logger.warning(message)
    warnings.warn(TruncationWarning(message, float(bound[-1])))
    return float(t + offsets[-1])


def _default_envelope(f: Callable) -> Callable:
    return lambda s: np.abs(np.asarray(f(s), dtype=complex))


def scalar_green(
    omega: complex,
    f: Callable,
    t: float,
    q: QuadConfig,
    t0: float,
    envelope: Optional[Callable] = None,
) -> complex:
    """
    G_w[f](t).

    For Re w < 0 integrates e^{w(t-s)} f(s) over [t0, t]; for Re w > 0
    integrates -e^{w(t-s)} f(s) over [t, T_cut].

    Args:
        omega: Exponent, Re w != 0
        f: Vectorized integrand
        t: Evaluation point, t >= t0
        q: Quadrature settings
        t0: Left end of the domain
        envelope: Decay envelope used for the tail cut (defaults to |f|)
    """
    alpha = _check_omega(omega)
    if alpha < 0:
        nodes, weights = panel_nodes(t0, t, q)
        if not len(nodes):
            return 0j
        return complex(np.sum(weights * np.exp(omega * (t - nodes)) * f(nodes)))

    cut = tail_bound(omega, envelope or _default_envelope(f), t, q.tail_tol, q)
    nodes, weights = panel_nodes(t, cut, q)
    if not len(nodes):
        return 0j
    return complex(-np.sum(weights * np.exp(omega * (t - nodes)) * f(nodes)))


def scalar_abs(
    omega: complex,
    f: Callable,
    t: float,
    q: QuadConfig,
    t0: float,
    envelope: Optional[Callable] = None,
) -> float:
    """I_w[f](t) = integral of |g_w(t, s) f(s)| ds; depends on Re w only."""
    alpha = _check_omega(omega)
    absf = lambda s: np.abs(np.asarray(f(s), dtype=complex))
    value = float(np.real(scalar_green(alpha, absf, t, q, t0, envelope or absf)))
    return value if alpha < 0 else -value


def composite_green(
    s,
    f: Callable,
    t: float,
    i: int,
    q: QuadConfig,
    t0: float,
    envelope: Optional[Callable] = None,
) -> complex:
    """
    G[f]^(i)(t) = sum_j gamma_j^i / Gamma_j G_{gamma_j}[f](t), plus f(t) when i = n-1.

    Args:
        s: SpectralData of the selected root
        f: Vectorized integrand
        t: Evaluation point
        i: Derivative order, 0..n-1
        q: Quadrature settings
        t0: Left end of the domain
    """
    n = s.n
    if not 0 <= i <= n - 1:
        raise GreenError(f"derivative order {i} outside 0..{n - 1}")
    total = 0j
    for gamma, Gamma in zip(s.gammas, s.Gammas):
        total += gamma ** i / Gamma * scalar_green(gamma, f, t, q, t0, envelope)
    if i == n - 1:
        total += complex(np.asarray(f(np.array([t])))[0])
    return complex(total)


@dataclass
class GridFunction:
    """
    Samples of a function on a strictly increasing grid.

    Between nodes the cubic spline of the samples is used. Beyond the last
    node the last value is carried by ``envelope(s) / envelope(t_end)``; with
    no envelope it is held constant. Before the first node the first value is
    held.
    """

    grid: np.ndarray
    values: np.ndarray
    rule: str = "cubic"
    envelope: Optional[Callable] = None
    _splines: Optional[Tuple[CubicSpline, CubicSpline]] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values)
        if self.grid.shape != self.values.shape[-1:]:
            raise GreenError("grid and values must have equal lengths")
        if len(self.grid) < 2 or np.any(np.diff(self.grid) <= 0):
            raise GreenError("grid must be strictly increasing with at least two nodes")

    def _spline(self) -> Tuple[CubicSpline, CubicSpline]:
        if self._splines is None:
            self._splines = (
                CubicSpline(self.grid, np.real(self.values)),
                CubicSpline(self.grid, np.imag(self.values)),
            )
        return self._splines

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        re, im = self._spline()
        inside = np.clip(s, self.grid[0], self.grid[-1])
        out = re(inside) + 1j * im(inside)
        beyond = s > self.grid[-1]
        if np.any(beyond):
            out = np.where(beyond, self.values[-1] * self._tail_ratio(s), out)
        return out

    def _tail_ratio(self, s):
        if self.envelope is None:
            return np.ones_like(s)
        end = float(np.abs(self.envelope(self.grid[-1])))
        if end == 0:
            return np.zeros_like(s)
        return np.abs(self.envelope(np.maximum(s, self.grid[-1]))) / end


class GreenOperator:
    """
    Green operators on a fixed grid.

    Every grid interval is split into Gauss-Legendre panels. G_w values at
    all grid nodes come from the recurrences

        G(tau_{k+1}) = e^{w h_k} G(tau_k) + int_k e^{w(tau_{k+1}-s)} f(s) ds     (Re w < 0)
        G(tau_k)     = e^{-w h_k} G(tau_{k+1}) - int_k e^{w(tau_k-s)} f(s) ds    (Re w > 0)

    which only ever multiply by factors of modulus below one. The Re w > 0
    recurrence starts from the tail integral over [t_end, T_cut] evaluated
    on ``tail_nodes``.
    """

    def __init__(self, grid: Sequence[float], q: QuadConfig, t_cut: Optional[float] = None):
        self.grid = np.asarray(grid, dtype=float)
        if len(self.grid) < 2 or np.any(np.diff(self.grid) <= 0):
            raise GreenError("grid must be strictly increasing with at least two nodes")
        self.q = q
        self.steps = np.diff(self.grid)

        nodes, weights, owner, starts = [], [], [], []
        count = 0
        for k, (a, b) in enumerate(zip(self.grid[:-1], self.grid[1:])):
            x, w = panel_nodes(a, b, q)
            starts.append(count)
            count += len(x)
            nodes.append(x)
            weights.append(w)
            owner.append(np.full(len(x), k))
        self.nodes = np.concatenate(nodes)
        self.weights = np.concatenate(weights)
        self.owner = np.concatenate(owner)
        self.starts = np.array(starts)

        self.t_cut = float(self.grid[-1] if t_cut is None else max(t_cut, self.grid[-1]))
        self.tail_nodes, self.tail_weights = panel_nodes(self.grid[-1], self.t_cut, q)
        logger.debug(
            f"GreenOperator on [{self.grid[0]}, {self.grid[-1]}] with {len(self.nodes)} nodes, "
            f"tail to {self.t_cut} with {len(self.tail_nodes)} nodes"
        )

    @classmethod
    def for_spectrum(cls, grid: Sequence[float], q: QuadConfig, alphas: Sequence[float],
                     envelope: Optional[Callable] = None) -> "GreenOperator":
        """Operator whose tail reaches far enough for the slowest Re w > 0 among ``alphas``."""
        grid = np.asarray(grid, dtype=float)
        positive = [a for a in alphas if a > 0]
        t_cut = None
        if positive:
            env = envelope or (lambda s: np.ones_like(np.asarray(s, dtype=float)))
            t_cut = tail_bound(min(positive), env, float(grid[-1]), q.tail_tol, q)
        return cls(grid, q, t_cut)

    @property
    def all_nodes(self) -> np.ndarray:
        return np.concatenate([self.nodes, self.tail_nodes])

    def split(self, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Split values on ``all_nodes`` into interior and tail parts."""
        return values[..., : len(self.nodes)], values[..., len(self.nodes):]

    def green(self, omega: complex, f_nodes: np.ndarray, f_tail: Optional[np.ndarray] = None) -> np.ndarray:
        """G_w[f] at the grid nodes from integrand values at the interior and tail nodes."""
        alpha = _check_omega(omega)
        f_nodes = np.asarray(f_nodes, dtype=complex)
        out = np.zeros(len(self.grid), dtype=complex)

        if alpha < 0:
            right = self.grid[1:][self.owner]
            local = np.add.reduceat(self.weights * np.exp(omega * (right - self.nodes)) * f_nodes, self.starts)
            decay = np.exp(omega * self.steps)
            for k in range(len(self.steps)):
                out[k + 1] = decay[k] * out[k] + local[k]
            return out

        if f_tail is not None and len(self.tail_nodes):
            end = self.grid[-1]
            out[-1] = -np.sum(self.tail_weights * np.exp(omega * (end - self.tail_nodes)) * f_tail)
        left = self.grid[:-1][self.owner]
        local = np.add.reduceat(self.weights * np.exp(omega * (left - self.nodes)) * f_nodes, self.starts)
        decay = np.exp(-omega * self.steps)
        for k in range(len(self.steps) - 1, -1, -1):
            out[k] = decay[k] * out[k + 1] - local[k]
        return out

    def green_abs(self, alpha: float, f_nodes: np.ndarray, f_tail: Optional[np.ndarray] = None) -> np.ndarray:
        """I_alpha[f] at the grid nodes."""
        alpha = float(np.real(alpha))
        absf = np.abs(f_nodes)
        abs_tail = None if f_tail is None else np.abs(f_tail)
        values = np.real(self.green(alpha, absf, abs_tail))
        return values if alpha < 0 else -values

    def components(self, s, f_nodes: np.ndarray, f_tail: Optional[np.ndarray] = None) -> np.ndarray:
        """G_{gamma_j}[f] for every shifted root, shape (n-1, N)."""
        return np.array([self.green(g, f_nodes, f_tail) for g in s.gammas])

    def integral(self, f_nodes: np.ndarray) -> np.ndarray:
        """Cumulative integral from t0 to each grid node."""
        local = np.add.reduceat(self.weights * np.asarray(f_nodes), self.starts)
        return np.concatenate([[0], np.cumsum(local)])

    def tail_integral(self, f_nodes: np.ndarray, f_tail: Optional[np.ndarray] = None) -> np.ndarray:
        """Integral from each grid node to T_cut."""
        local = np.add.reduceat(self.weights * np.asarray(f_nodes), self.starts)
        end = 0.0 if f_tail is None or not len(self.tail_nodes) else np.sum(self.tail_weights * f_tail)
        return end + np.concatenate([np.cumsum(local[::-1])[::-1], [0]])


def composite_stack(s, components: np.ndarray, f_grid: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Rows G[f]^(i), i = 0..n-1, from the component operators.

    Args:
        s: SpectralData
        components: G_{gamma_j}[f] on the grid, shape (n-1, N)
        f_grid: f on the grid, added to the top row (i = n-1) when given
    """
    n = s.n
    powers = np.array([s.gammas ** i / s.Gammas for i in range(n)])  # (n, n-1)
    stack = powers @ components
    if f_grid is not None:
        stack[n - 1] = stack[n - 1] + f_grid
    return stack
