"""
Tests of command-line integrand specifications.
"""

import logging
import math
import unittest

import numpy as np

from stieltjes_tools.errors import InputError, NonFiniteValue
from stieltjes_tools.expressions import (
    parse_expression,
    parse_integrand_spec,
    parse_table,
)
from stieltjes_tools.utils import get_default_logger


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)


class TestParseExpression(unittest.TestCase):
    """
    Test the restricted expression grammar.
    """

    def test_polynomial_degree(self):
        """
        Test values and degree hints of polynomial expressions.
        """
        f = parse_expression("1 + 2*t**2")
        self.assertEqual(f.degree, 2)
        self.assertAlmostEqual(f(1.5), 5.5, places=14)
        assert np.allclose(f(np.array([0.0, 1.0])), [1.0, 3.0])
        self.assertEqual(parse_expression("t/2").degree, 1)
        self.assertEqual(parse_expression("-s + 3").degree, 1)
        self.assertEqual(parse_expression("pi").degree, 0)

    def test_non_polynomial(self):
        """
        Test that transcendental and rational expressions carry no degree.
        """
        for text in ("exp(t)", "1/t", "t**0.5", "max(t, 1)"):
            self.assertIsNone(parse_expression(text).degree, text)
        self.assertAlmostEqual(parse_expression("exp(t)")(1.0), math.e, places=14)
        assert np.array_equal(parse_expression("max(t, 1)")(np.array([0.0, 2.0])), [1.0, 2.0])

    def test_rejected(self):
        """
        Test names, calls and statements outside the grammar.
        """
        for text in ("x + 1", "foo(t)", "t.real", "exp(t, 1)", "import os", "t +", "[t]"):
            with self.assertRaises(InputError):
                parse_expression(text)

    def test_non_finite_value(self):
        """
        Test that a non-finite evaluation is reported when the integrand is called.
        """
        f = parse_expression("log(t)")
        with self.assertRaises(NonFiniteValue):
            f(-1.0)


class TestIntegrandSpec(unittest.TestCase):
    """
    Test the accepted specification forms.
    """

    def test_table(self):
        """
        Test left-constant tables.
        """
        f = parse_table("0:1, 1:-1")
        self.assertEqual(f(0.5), 1.0)
        self.assertEqual(f(1.0), -1.0)
        self.assertIsNotNone(f.steps)
        with self.assertRaises(InputError):
            parse_table("0:1,x")

    def test_forms(self):
        """
        Test numbers, prefixes and mappings.
        """
        self.assertEqual(parse_integrand_spec(2)(0.3), 2.0)
        self.assertEqual(parse_integrand_spec("const:3")(0.3), 3.0)
        self.assertEqual(parse_integrand_spec("-1.5")(0.3), -1.5)
        self.assertEqual(parse_integrand_spec("table:0:1,1:2")(1.5), 2.0)
        self.assertAlmostEqual(parse_integrand_spec("expr:t*t")(3.0), 9.0, places=14)
        self.assertAlmostEqual(parse_integrand_spec("t*t")(3.0), 9.0, places=14)
        self.assertEqual(parse_integrand_spec({"constant": 4})(0.0), 4.0)
        self.assertEqual(parse_integrand_spec({"table": [[0, 1], [1, 2]]})(0.5), 1.0)
        self.assertAlmostEqual(parse_integrand_spec({"expr": "2*t"})(0.25), 0.5, places=14)
        with self.assertRaises(InputError):
            parse_integrand_spec({"polynomial": [1, 2]})


if __name__ == "__main__":
    unittest.main()
