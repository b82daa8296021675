"""
Complete Bell polynomials and the nonlinear remainders of the Riccati reduction.

Polynomials are held exactly: Bell-derived coefficients are Python integers
and stay integers until a complex shift is substituted. Exponent vectors are
dense tuples, one slot per variable x1..xk.
"""

import threading
from dataclasses import dataclass, field
from math import comb
from numbers import Number
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import config
from utils.errors import NumericalError
from utils.logger import get_logger

logger = get_logger("bellpoly")

Exponent = Tuple[int, ...]


class BellOrderError(NumericalError):
    """Requested Bell polynomial order exceeds the configured cap."""
    pass


@dataclass(frozen=True)
class MultiIndexPoly:
    """
    Exact multivariate polynomial in x1..x_arity.

    ``terms`` maps exponent vectors to coefficients; zero coefficients are
    never stored. Instances are immutable and hashable by identity only.
    """

    arity: int
    terms: Dict[Exponent, Number] = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError("arity must be a positive integer")
        clean = {}
        for exponent, coeff in self.terms.items():
            if len(exponent) != self.arity:
                raise ValueError(f"exponent {exponent} does not match arity {self.arity}")
            if any(e < 0 for e in exponent):
                raise ValueError(f"negative exponent in {exponent}")
            if coeff != 0:
                clean[tuple(exponent)] = coeff
        object.__setattr__(self, "terms", clean)

    __hash__ = object.__hash__

    @classmethod
    def constant(cls, value: Number, arity: int = 1) -> "MultiIndexPoly":
        return cls(arity, {(0,) * arity: value})

    @classmethod
    def variable(cls, index: int, arity: int) -> "MultiIndexPoly":
        """The monomial x_index (1-based) in ``arity`` variables."""
        exponent = [0] * arity
        exponent[index - 1] = 1
        return cls(arity, {tuple(exponent): 1})

    def is_zero(self) -> bool:
        return not self.terms

    def embed(self, arity: int) -> "MultiIndexPoly":
        """Same polynomial viewed in more variables."""
        if arity < self.arity:
            return self.truncate(arity)
        pad = (0,) * (arity - self.arity)
        return MultiIndexPoly(arity, {e + pad: c for e, c in self.terms.items()})

    def truncate(self, arity: int) -> "MultiIndexPoly":
        """Drop trailing variables that no term uses."""
        for exponent in self.terms:
            if any(exponent[arity:]):
                raise ValueError(f"term {exponent} uses a variable beyond x{arity}")
        return MultiIndexPoly(arity, {e[:arity]: c for e, c in self.terms.items()})

    def __add__(self, other: "MultiIndexPoly") -> "MultiIndexPoly":
        arity = max(self.arity, other.arity)
        a, b = self.embed(arity), other.embed(arity)
        terms = dict(a.terms)
        for exponent, coeff in b.terms.items():
            terms[exponent] = terms.get(exponent, 0) + coeff
        return MultiIndexPoly(arity, terms)

    def __neg__(self) -> "MultiIndexPoly":
        return MultiIndexPoly(self.arity, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "MultiIndexPoly") -> "MultiIndexPoly":
        return self + (-other)

    def __mul__(self, other) -> "MultiIndexPoly":
        if isinstance(other, MultiIndexPoly):
            arity = max(self.arity, other.arity)
            a, b = self.embed(arity), other.embed(arity)
            terms: Dict[Exponent, Number] = {}
            for ea, ca in a.terms.items():
                for eb, cb in b.terms.items():
                    e = tuple(x + y for x, y in zip(ea, eb))
                    terms[e] = terms.get(e, 0) + ca * cb
            return MultiIndexPoly(arity, terms)
        return MultiIndexPoly(self.arity, {e: c * other for e, c in self.terms.items()})

    __rmul__ = __mul__

    def total_degrees(self) -> List[int]:
        return sorted({sum(e) for e in self.terms})

    def homogeneous_part(self, degree: int) -> "MultiIndexPoly":
        return MultiIndexPoly(self.arity, {e: c for e, c in self.terms.items() if sum(e) == degree})

    def coefficient(self, exponent: Sequence[int]) -> Number:
        return self.terms.get(tuple(exponent), 0)

    def sorted_terms(self) -> List[Tuple[Exponent, Number]]:
        """Terms in graded lexicographic order, highest degree first."""
        return sorted(self.terms.items(), key=lambda item: (sum(item[0]), item[0]), reverse=True)

    def lipschitz_majorant(self, radius: float) -> float:
        """Upper bound of the gradient sup-norm on the ball of the given radius."""
        total = 0.0
        for exponent, coeff in self.terms.items():
            degree = sum(exponent)
            if degree:
                total += abs(coeff) * degree * radius ** (degree - 1)
        return total

    def __str__(self) -> str:
        return format_poly(self)


_bell_cache: Dict[int, MultiIndexPoly] = {}
_bell_lock = threading.Lock()


def complete_bell(i: int) -> MultiIndexPoly:
    """
    Complete Bell polynomial B_i in the variables x1..xi.

    Built from B_{i+1} = sum_j C(i, j) B_{i-j} x_{j+1} with B_0 = 1 and
    memoized behind a lock.

    Args:
        i: Polynomial order

    Returns:
        B_i with exact integer coefficients (B_0 is the constant 1 in one variable)

    Raises:
        BellOrderError: If i exceeds BELL_MAX_ORDER
    """
    if i < 0:
        raise ValueError("Bell polynomial order must be nonnegative")
    if i > config.BELL_MAX_ORDER:
        raise BellOrderError(f"Bell order {i} exceeds the configured cap {config.BELL_MAX_ORDER}")

    with _bell_lock:
        if i in _bell_cache:
            return _bell_cache[i]
        if not _bell_cache:
            _bell_cache[0] = MultiIndexPoly.constant(1, 1)
        start = max(_bell_cache)
        for k in range(start, i):
            arity = k + 1
            acc = MultiIndexPoly(arity, {})
            for j in range(k + 1):
                acc = acc + comb(k, j) * _bell_cache[k - j].embed(arity) * MultiIndexPoly.variable(j + 1, arity)
            _bell_cache[k + 1] = acc
            logger.debug(f"Cached B_{k + 1} with {len(acc.terms)} terms")
        return _bell_cache[i]


def bell_shift_expand(i: int, lam: Number) -> MultiIndexPoly:
    """
    Expand B_i(lam + x1, x2, ..., xi) as sum_j C(i, j) lam^(i-j) B_j(x).

    Coefficients stay exact when ``lam`` is an integer and become complex
    otherwise.
    """
    arity = max(i, 1)
    acc = MultiIndexPoly(arity, {})
    for j in range(i + 1):
        acc = acc + (comb(i, j) * lam ** (i - j)) * complete_bell(j).embed(arity)
    return acc


def nonlinear_remainder(i: int) -> MultiIndexPoly:
    """
    f_i = B_{i+1} - x_{i+1}, a polynomial in x1..xi.

    f_0 is the zero polynomial (in one variable).
    """
    if i == 0:
        return MultiIndexPoly(1, {})
    bell = complete_bell(i + 1)
    return (bell - MultiIndexPoly.variable(i + 1, i + 1)).truncate(i)


def degree_split(i: int) -> List[Tuple[int, MultiIndexPoly]]:
    """
    Split f_i into homogeneous parts h_{k,i}, k = 2..i+1.

    Args:
        i: Remainder index, at least 1

    Returns:
        List of (k, h_{k,i}) pairs whose sum is f_i
    """
    if i < 1:
        raise ValueError("degree_split needs i >= 1")
    remainder = nonlinear_remainder(i)
    return [(k, remainder.homogeneous_part(k)) for k in range(2, i + 2)]


def eval_poly(p: MultiIndexPoly, point: Sequence) -> Number:
    """
    Evaluate p at a point.

    Each coordinate may be a number or a numpy array (all of one shape), in
    which case the result is an array; powers are tabulated once per variable.

    Raises:
        ValueError: On arity mismatch
    """
    if len(point) != p.arity:
        raise ValueError(f"point has {len(point)} coordinates, polynomial has arity {p.arity}")
    if p.is_zero():
        return 0 * sum(point[k] for k in range(p.arity))

    max_exp = [0] * p.arity
    for exponent in p.terms:
        for k, e in enumerate(exponent):
            max_exp[k] = max(max_exp[k], e)

    powers = []
    for k in range(p.arity):
        table = [1]
        for _ in range(max_exp[k]):
            table.append(table[-1] * point[k])
        powers.append(table)

    total = 0
    for exponent, coeff in p.sorted_terms():
        term = coeff
        for k, e in enumerate(exponent):
            if e:
                term = term * powers[k][e]
        total = total + term
    return total


def _format_coefficient(coeff: Number) -> str:
    if isinstance(coeff, complex) or isinstance(coeff, np.complexfloating):
        if coeff.imag == 0:
            coeff = coeff.real
        else:
            return f"({coeff.real:g}{coeff.imag:+g}j)"
    if isinstance(coeff, float) and coeff.is_integer():
        coeff = int(coeff)
    return f"{coeff:g}" if isinstance(coeff, float) else str(coeff)


def format_poly(p: MultiIndexPoly, names: Optional[Sequence[str]] = None) -> str:
    """
    Print p as e.g. ``x1^3+3*x1*x2+x3`` in graded lexicographic order.

    Args:
        p: Polynomial to print
        names: Optional variable names replacing x1..xk
    """
    if names is None:
        names = [f"x{k + 1}" for k in range(p.arity)]
    if p.is_zero():
        return "0"

    pieces: List[str] = []
    for exponent, coeff in p.sorted_terms():
        factors = [
            names[k] if e == 1 else f"{names[k]}^{e}"
            for k, e in enumerate(exponent) if e
        ]
        text = _format_coefficient(coeff)
        negative = text.startswith("-")
        if negative:
            text = text[1:]
        if factors:
            monomial = "*".join(factors)
            text = monomial if text == "1" else f"{text}*{monomial}"
        sign = "-" if negative else "+"
        pieces.append(text if not pieces and not negative else f"{sign}{text}")
    return "".join(pieces)


def binomial_identity_residual(i: int, x: Iterable[complex], y: Iterable[complex]) -> float:
    """Relative defect of B_i(X+Y) = sum_j C(i, j) B_{i-j}(X) B_j(Y)."""
    x, y = list(x), list(y)
    arity = max(i, 1)
    x, y = x[:arity], y[:arity]
    lhs = eval_poly(complete_bell(i).embed(arity), [a + b for a, b in zip(x, y)])
    rhs = 0
    for j in range(i + 1):
        rhs += comb(i, j) * eval_poly(complete_bell(i - j).embed(arity), x) * eval_poly(complete_bell(j).embed(arity), y)
    return abs(lhs - rhs) / (1 + abs(lhs))
