"""
Tests for the perturbation expression language.
"""

import numpy as np
import pytest

from services.expression import (
    BinOp,
    ExprEvalError,
    ExprSyntaxError,
    Neg,
    Num,
    Var,
    evaluate,
    free_of_t,
    is_zero,
    parse_expr,
    to_text,
)


class TestParser:
    """Test parsing and printing."""

    def test_precedence(self):
        """Test that powers bind tighter than unary minus and products."""
        assert parse_expr("-2^2") == Neg(BinOp("^", Num(2), Num(2)))
        assert parse_expr("1+2*t") == BinOp("+", Num(1), BinOp("*", Num(2), Var("t")))

    def test_power_is_right_associative(self):
        """Test a^b^c = a^(b^c)."""
        assert parse_expr("t^2^3") == BinOp("^", Var("t"), BinOp("^", Num(2), Num(3)))

    def test_double_star_power(self):
        """Test that ** is accepted for ^."""
        assert parse_expr("t**2") == parse_expr("t^2")

    @pytest.mark.parametrize("text", [
        "(t^2+1)^(-1/3)",
        "t^(-2/3)",
        "-t^(-2)",
        "exp(-t)*sin(2*t)",
        "pow(t, 0.5) - 3/(t+1)",
        "1/(t-(2-1))",
        "2j*t",
        "(-2)^t",
    ])
    def test_print_reparses(self, text):
        """Test that printed text parses back to the same tree."""
        tree = parse_expr(text)
        assert parse_expr(to_text(tree)) == tree

    def test_empty(self):
        """Test that an empty expression is a syntax error."""
        with pytest.raises(ExprSyntaxError) as info:
            parse_expr("   ")
        assert info.value.offset == 0

    def test_dangling_operator(self):
        """Test the offset and expected set of an incomplete expression."""
        with pytest.raises(ExprSyntaxError) as info:
            parse_expr("t+")
        assert info.value.offset == 2
        assert "number" in info.value.expected

    def test_unknown_name(self):
        """Test that unknown identifiers are rejected."""
        with pytest.raises(ExprSyntaxError, match="unknown name"):
            parse_expr("2*x")

    def test_bad_character(self):
        """Test the byte offset of an unexpected character."""
        with pytest.raises(ExprSyntaxError) as info:
            parse_expr("t + $")
        assert info.value.offset == 4

    def test_unbalanced_parenthesis(self):
        """Test that a missing closing parenthesis is reported."""
        with pytest.raises(ExprSyntaxError):
            parse_expr("(t+1")

    def test_function_arity(self):
        """Test that function arity is checked."""
        with pytest.raises(ExprSyntaxError, match="argument"):
            parse_expr("pow(t)")


class TestEvaluate:
    """Test evaluation on scalars and arrays."""

    def test_scalar(self):
        """Test a scalar evaluation returns a complex number."""
        value = evaluate(parse_expr("(t^2+1)^(-1/3)"), 2.0)
        assert isinstance(value, complex)
        assert value == pytest.approx(5 ** (-1 / 3))

    def test_array(self):
        """Test evaluation on an array of t values."""
        t = np.linspace(1, 4, 7)
        values = evaluate(parse_expr("t^(-2/3)"), t)
        assert values.shape == t.shape
        assert np.allclose(values, t ** (-2 / 3))

    def test_constant_broadcasts(self):
        """Test that constants broadcast to the shape of t."""
        values = evaluate(parse_expr("pi"), np.zeros(3))
        assert np.allclose(values, np.pi)

    def test_real_cube_root(self):
        """Test that cbrt of a negative real is real."""
        assert evaluate(parse_expr("cbrt(t)"), -8.0) == pytest.approx(-2.0)

    def test_division_by_zero(self):
        """Test that the error names the sub-expression and t."""
        with pytest.raises(ExprEvalError) as info:
            evaluate(parse_expr("1/(t-2)"), np.array([1.0, 2.0, 3.0]))
        assert info.value.t == 2.0
        assert "t-2" in info.value.subexpr

    def test_log_of_nonpositive(self):
        """Test that log of a nonpositive real is refused."""
        with pytest.raises(ExprEvalError, match="log"):
            evaluate(parse_expr("log(t)"), np.array([1.0, 0.0]))

    def test_zero_detection(self):
        """Test literal zero and t-dependence checks."""
        assert is_zero(parse_expr("0"))
        assert is_zero(parse_expr("-0.0"))
        assert not is_zero(parse_expr("t"))
        assert free_of_t(parse_expr("2*pi"))
        assert not free_of_t(parse_expr("exp(t)"))


if __name__ == "__main__":
    pytest.main([__file__])
