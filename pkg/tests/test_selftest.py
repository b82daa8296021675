"""
Tests for the selftest property suites.
"""

import numpy as np
import pytest

from services.selftest import BELL_GOLDEN, SUITES, SuiteResult, random_spectrum, run_selftest


class TestSuites:
    """Test the suites and their summary."""

    @pytest.mark.parametrize("name", sorted(SUITES))
    def test_suite_passes(self, name):
        """Test that every suite passes with the default seed."""
        results = run_selftest(0, [name])
        assert results[name]["passed"], results[name]

    def test_same_seed_same_worst_case(self):
        """Test that a seed fixes the drawn cases."""
        first = run_selftest(7, ["root_shift"])
        second = run_selftest(7, ["root_shift"])
        assert first == second

    def test_golden_table(self):
        """Test the golden strings up to order 5."""
        assert sorted(BELL_GOLDEN) == [0, 1, 2, 3, 4, 5]
        assert BELL_GOLDEN[2] == "x1^2+x2"

    def test_random_spectrum_is_simple(self):
        """Test that drawn roots are distinct."""
        roots = random_spectrum(np.random.default_rng(1), 5)
        assert len(roots) == 5
        assert len({complex(r) for r in roots}) == 5

    def test_result_flag(self):
        """Test the pass flag at the tolerance edge."""
        assert SuiteResult("x", 1, 1e-9, 1e-9).passed
        assert not SuiteResult("x", 1, 2e-9, 1e-9).passed


if __name__ == "__main__":
    pytest.main([__file__])
