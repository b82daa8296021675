"""
Riccati-type reduction of a perturbed linear equation.

With y = exp(lambda (t - t0) + int z), the order-n linear equation becomes

    D z + P(r; lambda) + L(t, z) + F(t, z, z', ..., z^(n-2)) = 0

where D has the constant coefficients (1/j!) P^(j)(a; lambda), L collects
the perturbation-dependent linear terms and F is the polynomial nonlinear
part. F is stored once as exact polynomials: a constant part (coefficients
a~_i) and one polynomial per coefficient r_m, so evaluation at t is a short
dot product.
"""

from dataclasses import dataclass
from math import comb
from typing import List, Sequence, Tuple

import numpy as np

from services.bellpoly import MultiIndexPoly, bell_shift_expand, eval_poly, format_poly, nonlinear_remainder
from services.charpoly import d_coefficients, poly_derivative_at
from services.perturb import PerturbationBundle, PerturbedODE
from utils.errors import NumericalError
from utils.logger import get_logger

logger = get_logger("riccati")


class RiccatiError(NumericalError):
    """The reduction cannot be built (lambda is not a characteristic root)."""
    pass


def derivative_names(n: int) -> List[str]:
    """z, z', z'', z''' then z^(4), z^(5), ..."""
    names = []
    for i in range(n):
        names.append("z" + "'" * i if i <= 3 else f"z^({i})")
    return names


@dataclass(frozen=True)
class RiccatiSystem:
    """
    The reduced equation for one root lambda.

    ``F_const`` holds sum_i a~_i f_{i-1}; ``F_r[m]`` is the polynomial that
    multiplies r_m(t). All polynomials are in x_k = z^(k-1), k = 1..n-1.
    """

    n: int
    lam: complex
    a: Tuple[complex, ...]
    d_coeffs: Tuple[complex, ...]
    a_tilde: Tuple[complex, ...]
    bundle: PerturbationBundle
    F_const: MultiIndexPoly
    F_r: Tuple[MultiIndexPoly, ...]


def _shift_weight_polys(n: int, lam: complex) -> List[MultiIndexPoly]:
    """Q_m = sum_{i=2}^{m} C(m, i) lam^(m-i) f_{i-1}, the coefficient polynomial of a_m (or r_m)."""
    arity = max(n - 1, 1)
    remainders = [None] + [nonlinear_remainder(i - 1).embed(arity) for i in range(1, n + 1)]
    polys = []
    for m in range(n + 1):
        acc = MultiIndexPoly(arity, {})
        for i in range(2, m + 1):
            acc = acc + (comb(m, i) * lam ** (m - i)) * remainders[i]
        polys.append(acc)
    return polys


def build_riccati(ode: PerturbedODE, lam: complex, tol: float = 1e-8) -> RiccatiSystem:
    """
    Assemble D, L and F for the root lambda.

    Args:
        ode: Perturbed equation
        lam: Characteristic root
        tol: Root test |P(a; lam)| <= tol (1 + |lam|)^n

    Returns:
        RiccatiSystem

    Raises:
        RiccatiError: If lam is not a root of P(a; x)
    """
    p = ode.charpoly()
    n = ode.n
    lam = complex(lam)
    residual = abs(poly_derivative_at(p, lam, 0))
    if residual > tol * (1 + abs(lam)) ** n:
        raise RiccatiError(f"lambda={lam} is not a characteristic root (|P(a; lambda)| = {residual:.3e})")

    d = tuple(d_coefficients(p, lam))
    a_full = tuple(complex(c) for c in p.coeffs)
    a_tilde = tuple(complex(poly_derivative_at(p, lam, i)) for i in range(n + 1))

    weights = _shift_weight_polys(n, lam)
    F_const = MultiIndexPoly(max(n - 1, 1), {})
    for m in range(2, n + 1):
        F_const = F_const + a_full[m] * weights[m]
    F_r = tuple(weights[m] for m in range(n))

    logger.info(f"Riccati system built for n={n}, lambda={lam} with {len(F_const.terms)} constant terms")
    return RiccatiSystem(
        n=n, lam=lam, a=a_full, d_coeffs=d, a_tilde=a_tilde,
        bundle=ode.bundle(lam), F_const=F_const, F_r=F_r,
    )


def eval_F(sys: RiccatiSystem, t, Z: Sequence, r: np.ndarray = None):
    """
    F(t, z, ..., z^(n-2)).

    Args:
        sys: Reduced system
        t: Time (scalar or array)
        Z: Derivative stack z..z^(n-2); entries scalars or arrays shaped like t
        r: Precomputed r_i(t), shape (n,) + shape(t)
    """
    Z = list(Z)
    total = eval_poly(sys.F_const, Z)
    if sys.bundle.is_zero:
        return total
    r = sys.bundle.r_values(t) if r is None else r
    for m in range(2, sys.n):
        if sys.F_r[m].is_zero():
            continue
        total = total + r[m] * eval_poly(sys.F_r[m], Z)
    return total


def eval_L(sys: RiccatiSystem, t, Z: Sequence, dstack: np.ndarray = None):
    """L(t, z) = sum_{k=1}^{n-1} (1/k!) d^k P(r(t); lambda) z^(k-1)."""
    dstack = sys.bundle.derivative_stack(t) if dstack is None else dstack
    total = 0
    for k in range(1, sys.n):
        total = total + dstack[k] * Z[k - 1]
    return total


def eval_D(sys: RiccatiSystem, stack: Sequence):
    """D z from the full stack z..z^(n-1)."""
    total = 0
    for j in range(1, sys.n + 1):
        total = total + sys.d_coeffs[j - 1] * stack[j - 1]
    return total


def riccati_residual_from_stack(sys: RiccatiSystem, t, stack: Sequence):
    """D z + P(r; lambda) + L + F for a full derivative stack z..z^(n-1) at t."""
    dstack = sys.bundle.derivative_stack(t)
    Z = list(stack)[: sys.n - 1]
    return eval_D(sys, stack) + dstack[0] + eval_L(sys, t, Z, dstack) + eval_F(sys, t, Z)


def riccati_residual(sys: RiccatiSystem, z, t: float) -> complex:
    """
    Residual of the reduced equation for a solution on a grid.

    ``z`` is a ZSolution; its top derivative comes from the Green
    representation, never from differencing grid data.

    Raises:
        RiccatiError: If t lies outside the solution grid
    """
    if t < z.grid[0] or t > z.grid[-1]:
        raise RiccatiError(f"t={t} outside the solution grid [{z.grid[0]}, {z.grid[-1]}]")
    stack = z.full_stack_at(np.array([t]))
    return complex(np.asarray(riccati_residual_from_stack(sys, np.array([t]), stack))[0])


def eval_F_direct(sys: RiccatiSystem, ode: PerturbedODE, t: float, stack: Sequence) -> complex:
    """
    F from its definition: the fully expanded Bell form minus D z, P(r; lambda) and L.

    Independent of the stored polynomials; used as an oracle.
    """
    n = sys.n
    coeffs = ode.coefficient_values(np.array([t]))[:, 0]
    values = list(stack)
    total = eval_poly(bell_shift_expand(n, sys.lam).embed(n), values)
    for i in range(n):
        total += coeffs[i] * eval_poly(bell_shift_expand(i, sys.lam).embed(n), values)
    dstack = sys.bundle.derivative_stack(np.array([t]))[:, 0]
    Z = values[: n - 1]
    return complex(total - eval_D(sys, values) - dstack[0] - eval_L(sys, t, Z, dstack))


def format_equation(sys: RiccatiSystem) -> str:
    """The reduced equation in text form, e.g. for golden files."""
    names = derivative_names(sys.n)
    parts = []
    for j in range(sys.n, 0, -1):
        c = sys.d_coeffs[j - 1]
        if c == 0:
            continue
        parts.append(names[j - 1] if c == 1 else f"({_fmt(c)})*{names[j - 1]}")
    linear = " + ".join(parts) if parts else "0"

    rterms = []
    for k in range(sys.n - 1, 0, -1):
        pieces = [f"{_fmt(comb(i, k) * sys.lam ** (i - k))}*r{i}" for i in range(k, sys.n)]
        rterms.append(f"({' + '.join(pieces)})*{names[k - 1]}")
    nonlinear = format_poly(sys.F_const, names[: sys.n - 1])
    rparts = [
        f"r{m}*({format_poly(sys.F_r[m], names[: sys.n - 1])})"
        for m in range(2, sys.n) if not sys.F_r[m].is_zero()
    ]
    return " + ".join([linear, "P(r;lambda)"] + rterms + [nonlinear] + rparts) + " = 0"


def _fmt(c) -> str:
    c = complex(c)
    if c.imag == 0:
        re = c.real
        return str(int(re)) if float(re).is_integer() else f"{re:g}"
    return f"{c.real:g}{c.imag:+g}j"
