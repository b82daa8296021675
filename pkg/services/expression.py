"""
Perturbation expression language.

A small Pratt parser turns strings such as ``(t^2+1)^(-1/3)`` into immutable
syntax trees over the variable ``t``. Trees print back to text that reparses
to the same tree, and evaluate on scalars or numpy arrays of t values,
always in complex arithmetic.

Grammar (loosest binding first)::

    expr   := expr ('+' | '-') expr
            | expr ('*' | '/') expr
            | '-' expr
            | expr '^' expr            (right associative)
            | NUMBER | NUMBER 'j' | 't' | 'pi' | NAME '(' expr {',' expr} ')'
            | '(' expr ')'

Functions: sqrt, cbrt, exp, log, sin, cos, abs, pow(base, exponent).
"""

import re
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterator, List, Tuple, Union

import numpy as np

from utils.errors import NumericalError
from utils.logger import get_logger

logger = get_logger("expression")

Number = Union[int, float, complex]


class ExprSyntaxError(NumericalError):
    """Malformed expression text; carries the byte offset and the expected tokens."""

    def __init__(self, message: str, offset: int, expected: FrozenSet[str] = frozenset()):
        detail = f" (expected one of: {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")
        self.offset = offset
        self.expected = expected


class ExprEvalError(NumericalError):
    """Evaluation failed on part of the domain (division by zero, log of a nonpositive value)."""

    def __init__(self, message: str, subexpr: str, t):
        super().__init__(f"{message} in '{subexpr}' at t={t}")
        self.subexpr = subexpr
        self.t = t


# Syntax tree ======================================================================

@dataclass(frozen=True)
class Num:
    value: Number


@dataclass(frozen=True)
class Var:
    name: str = "t"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple["Expr", ...]


Expr = Union[Num, Var, Neg, BinOp, Call]

FUNCTIONS: Dict[str, int] = {
    "sqrt": 1, "cbrt": 1, "exp": 1, "log": 1, "sin": 1, "cos": 1, "abs": 1, "pow": 2,
}
CONSTANTS: Dict[str, float] = {"pi": float(np.pi)}

BINARY_POWER = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
UNARY_POWER = 30


# Tokenizer ========================================================================

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)(?P<imag>j)?"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),])"
    r")"
)


@dataclass(frozen=True)
class Token:
    kind: str  # number, name, op, end
    text: str
    offset: int
    value: Number = 0


def tokenize(text: str) -> Iterator[Token]:
    encoded_offsets = _byte_offsets(text)
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        match = _TOKEN.match(text, pos)
        if not match or match.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", encoded_offsets[start])
        start = match.end() - len(match.group(0).lstrip())
        offset = encoded_offsets[start]
        if match.group("number") is not None:
            literal = match.group("number")
            value: Number = float(literal) if any(c in literal for c in ".eE") else int(literal)
            if match.group("imag"):
                yield Token("number", literal + "j", offset, complex(0, value))
            else:
                yield Token("number", literal, offset, value)
        elif match.group("name") is not None:
            yield Token("name", match.group("name"), offset)
        else:
            op = match.group("op")
            yield Token("op", "^" if op == "**" else op, offset)
        pos = match.end()
    yield Token("end", "", encoded_offsets[len(text)])


def _byte_offsets(text: str) -> List[int]:
    offsets = [0]
    for ch in text:
        offsets.append(offsets[-1] + len(ch.encode("utf-8")))
    return offsets


# Parser ===========================================================================

_OPERAND_START = frozenset({"number", "t", "(", "-", "+", "function"})


class _Parser:
    """Top-down operator precedence parser over a token stream."""

    def __init__(self, text: str):
        self.tokens = list(tokenize(text))
        self.pos = 0

    @property
    def token(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.token
        if tok.text != text or tok.kind != "op":
            raise ExprSyntaxError(f"unexpected {_describe(tok)}", tok.offset, frozenset({text}))
        return self.advance()

    def lbp(self, tok: Token) -> int:
        if tok.kind == "op" and tok.text in BINARY_POWER:
            return BINARY_POWER[tok.text]
        return 0

    def expression(self, rbp: int = 0) -> Expr:
        left = self.nud(self.advance())
        while rbp < self.lbp(self.token):
            left = self.led(self.advance(), left)
        return left

    def nud(self, tok: Token) -> Expr:
        if tok.kind == "number":
            return Num(tok.value)
        if tok.kind == "name":
            if tok.text == "t":
                return Var("t")
            if tok.text in CONSTANTS:
                return Var(tok.text)
            if tok.text in FUNCTIONS:
                return self.call(tok)
            raise ExprSyntaxError(f"unknown name {tok.text!r}", tok.offset, _OPERAND_START)
        if tok.kind == "op":
            if tok.text == "(":
                inner = self.expression()
                self.expect(")")
                return inner
            if tok.text == "-":
                return Neg(self.expression(UNARY_POWER))
            if tok.text == "+":
                return self.expression(UNARY_POWER)
        raise ExprSyntaxError(f"unexpected {_describe(tok)}", tok.offset, _OPERAND_START)

    def led(self, tok: Token, left: Expr) -> Expr:
        if tok.text == "^":
            # right associative: bind the right side one notch looser
            return BinOp("^", left, self.expression(BINARY_POWER["^"] - 1))
        return BinOp(tok.text, left, self.expression(BINARY_POWER[tok.text]))

    def call(self, tok: Token) -> Expr:
        self.expect("(")
        args = [self.expression()]
        while self.token.kind == "op" and self.token.text == ",":
            self.advance()
            args.append(self.expression())
        self.expect(")")
        arity = FUNCTIONS[tok.text]
        if len(args) != arity:
            raise ExprSyntaxError(
                f"{tok.text} takes {arity} argument(s), got {len(args)}", tok.offset, frozenset({")"})
            )
        return Call(tok.text, tuple(args))


def _describe(tok: Token) -> str:
    return "end of input" if tok.kind == "end" else f"token {tok.text!r}"


def parse_expr(text: str) -> Expr:
    """
    Parse a perturbation expression.

    Args:
        text: Expression in the variable t

    Returns:
        Immutable syntax tree

    Raises:
        ExprSyntaxError: With the byte offset of the first bad token and the
            set of tokens that would have been accepted there
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, _OPERAND_START)
    parser = _Parser(text)
    tree = parser.expression()
    if parser.token.kind != "end":
        tok = parser.token
        raise ExprSyntaxError(
            f"unexpected {_describe(tok)}", tok.offset, frozenset(BINARY_POWER) | {"end of input"}
        )
    return tree


# Printer ==========================================================================

def _format_number(value: Number) -> str:
    if isinstance(value, complex):
        return f"{_format_number(value.imag)}j"
    return repr(value)


def _precedence(node: Expr) -> int:
    if isinstance(node, BinOp):
        return BINARY_POWER[node.op]
    if isinstance(node, Neg):
        return UNARY_POWER
    return 100


def to_text(node: Expr) -> str:
    """Print with the minimal parentheses that reparse to the same tree."""
    if isinstance(node, Num):
        return _format_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        if _precedence(node.operand) <= UNARY_POWER:
            inner = f"({inner})"
        return f"-{inner}"

    prec = BINARY_POWER[node.op]
    left, right = to_text(node.left), to_text(node.right)
    if node.op == "^":
        if _precedence(node.left) <= prec or _is_signed_literal(node.left):
            left = f"({left})"
        if _precedence(node.right) < prec:
            right = f"({right})"
    else:
        if _precedence(node.left) < prec:
            left = f"({left})"
        if _precedence(node.right) <= prec:
            right = f"({right})"
    return f"{left}{node.op}{right}"


def _is_signed_literal(node: Expr) -> bool:
    return isinstance(node, Num) and isinstance(node.value, (int, float)) and node.value < 0


# Evaluation =======================================================================

_UNARY: Dict[str, Callable] = {
    "sqrt": np.sqrt,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "abs": lambda x: np.abs(x) + 0j,
}


def _cbrt(x):
    # Real cube root for real arguments, principal branch otherwise
    if np.all(np.imag(x) == 0):
        return np.cbrt(np.real(x)) + 0j
    return np.power(x, 1.0 / 3.0)


def evaluate(node: Expr, t):
    """
    Evaluate a tree at t (scalar or array) in complex arithmetic.

    Raises:
        ExprEvalError: On division by zero or log of a nonpositive real value,
            naming the failing sub-expression and the offending t
    """
    t_arr = np.asarray(t, dtype=float)
    value = _eval(node, t_arr)
    value = np.broadcast_to(np.asarray(value, dtype=complex), t_arr.shape)
    if np.ndim(t) == 0:
        return complex(value)
    return np.array(value)


def _first_bad(t, mask):
    mask = np.broadcast_to(mask, np.shape(t))
    if np.ndim(t) == 0:
        return float(t)
    return float(np.asarray(t)[mask][0])


def _eval(node: Expr, t):
    if isinstance(node, Num):
        return complex(node.value)
    if isinstance(node, Var):
        return t + 0j if node.name == "t" else complex(CONSTANTS[node.name])
    if isinstance(node, Neg):
        return -_eval(node.operand, t)
    if isinstance(node, Call):
        args = [_eval(a, t) for a in node.args]
        if node.func == "log":
            x = args[0]
            bad = (np.imag(x) == 0) & (np.real(x) <= 0)
            if np.any(bad):
                raise ExprEvalError("log of a nonpositive value", to_text(node), _first_bad(t, bad))
            return np.log(x)
        if node.func == "cbrt":
            return _cbrt(args[0])
        if node.func == "pow":
            return _power(node, args[0], args[1], t)
        return _UNARY[node.func](args[0])

    left, right = _eval(node.left, t), _eval(node.right, t)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        zero = right == 0
        if np.any(zero):
            raise ExprEvalError("division by zero", to_text(node), _first_bad(t, zero))
        return left / right
    return _power(node, left, right, t)


def _power(node: Expr, base, exponent, t):
    zero = (base == 0) & (np.real(exponent) < 0)
    if np.any(zero):
        raise ExprEvalError("division by zero", to_text(node), _first_bad(t, zero))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.power(base, exponent)


def free_of_t(node: Expr) -> bool:
    """True when the tree does not mention t."""
    if isinstance(node, Num):
        return True
    if isinstance(node, Var):
        return node.name != "t"
    if isinstance(node, Neg):
        return free_of_t(node.operand)
    if isinstance(node, Call):
        return all(free_of_t(a) for a in node.args)
    return free_of_t(node.left) and free_of_t(node.right)


def is_zero(node: Expr) -> bool:
    """True for literal zero (possibly negated)."""
    if isinstance(node, Num):
        return node.value == 0
    if isinstance(node, Neg):
        return is_zero(node.operand)
    return False
