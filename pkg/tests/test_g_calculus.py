"""
Tests of Stieltjes derivatives, the chain rules and the fundamental theorem of calculus.
"""

import logging
import unittest

import numpy as np

from stieltjes_tools.derivator import Derivator
from stieltjes_tools.errors import (
    DegenerateDenominator,
    MissingDerivativeOracle,
    NonConvergence,
)
from stieltjes_tools.g_calculus import (
    DerivativeMethod,
    Primitive,
    chain_rule_explicit,
    chain_rule_implicit,
    ftc_residual,
    g_derivative,
    is_g_continuous_at,
)
from stieltjes_tools.ls_measure import Integrand
from stieltjes_tools.utils import get_default_logger
from tests.random_instances import (
    chain_rule_configurations,
    random_increasing_derivator,
    random_polynomial,
)


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)


def _identity_with_unit_jump() -> Derivator:
    return Derivator.from_slopes([0.0, 1.0, 2.0], [1.0, 1.0], jumps={1.0: 1.0})


class TestGDerivative(unittest.TestCase):
    """
    Test jump and limit quotients.
    """

    def test_derivative_of_g(self):
        """
        Test that g has g-derivative 1 off the jump set.
        """
        for g in (Derivator.identity(0.0, 2.0), _identity_with_unit_jump()):
            result = g_derivative(g.eval, g, 0.5)
            self.assertAlmostEqual(result.value, 1.0, places=12)
            self.assertEqual(result.method, DerivativeMethod.LIMIT_QUOTIENT)
            assert result.achieved_spread >= 0.0

    def test_jump_quotient(self):
        """
        Test the jump quotient of g^2 at a unit jump.
        """
        g = _identity_with_unit_jump()
        result = g_derivative(lambda s: g.eval(s) ** 2, g, 1.0)
        self.assertEqual(result.method, DerivativeMethod.JUMP_QUOTIENT)
        self.assertAlmostEqual(result.value, 3.0, delta=1e-9)

    def test_jump_quotient_exact_right_limit(self):
        """
        Test that a supplied right limit makes the jump quotient exact.
        """
        g = _identity_with_unit_jump()
        primitive = Primitive(Integrand.polynomial([0.0, 1.0]), g)
        result = g_derivative(primitive, g, 1.0)
        self.assertAlmostEqual(result.value, 1.0, places=14)

    def test_classical_derivative(self):
        """
        Test that the identity derivator gives the classical derivative.
        """
        tol = 1e-6
        result = g_derivative(lambda s: s * s, Derivator.identity(0.0, 2.0), 0.7, tol)
        self.assertAlmostEqual(result.value, 1.4, delta=tol)
        assert result.achieved_spread < tol
        assert result.window > 0.0

    def test_constancy_interior_uses_star(self):
        """
        Test that a point in a flat stretch takes the one-sided derivative at t*.
        """
        g = Derivator.from_slopes([0.0, 1.0, 2.0, 3.0], [1.0, 0.0, 1.0])
        tol = 1e-6
        result = g_derivative(lambda s: s * s, g, 1.3, tol)
        self.assertAlmostEqual(result.value, 4.0, delta=tol)
        left = g_derivative(lambda s: s, g, 1.0, tol)
        self.assertAlmostEqual(left.value, 1.0, places=9)

    def test_non_convergence(self):
        """
        Test a kink whose one-sided quotients disagree.
        """
        with self.assertRaises(NonConvergence):
            g_derivative(lambda s: abs(s - 0.5), Derivator.identity(0.0, 1.0), 0.5)

    def test_degenerate_denominator(self):
        """
        Test a flat stretch ending at b, where no quotient is defined.
        """
        g = Derivator.from_slopes([0.0, 1.0, 2.0], [1.0, 0.0], require_b_not_in_ng_plus=None)
        with self.assertRaises(DegenerateDenominator):
            g_derivative(lambda s: s, g, 1.5)


class TestChainRules(unittest.TestCase):
    """
    Test the explicit and implicit chain rules.
    """

    def test_explicit_examples(self):
        """
        Test the continuous branch, a jump point and a zero derivative.
        """
        self.assertEqual(chain_rule_explicit(3.0, 1.0, 0.0, lambda y: 2.0 * y), 6.0)
        self.assertAlmostEqual(
            chain_rule_explicit(3.0, 1.0, 1.0, lambda y: 2.0 * y), 15.0, places=12
        )
        self.assertEqual(chain_rule_explicit(0.0, 1.0, 1.0, lambda y: 2.0 * y), 0.0)

    def test_implicit_examples(self):
        """
        Test both branches of the implicit formula.
        """
        self.assertAlmostEqual(chain_rule_implicit(1.0, 4.0, 3.0, lambda y: y * y), 15.0, places=12)
        self.assertEqual(
            chain_rule_implicit(2.0, 2.0, 3.0, lambda y: y * y, hprime=lambda y: 0.5), 1.5
        )
        with self.assertRaises(MissingDerivativeOracle):
            chain_rule_implicit(2.0, 2.0, 3.0, lambda y: y * y)

    def test_cross_check(self):
        """
        Test that both formulas agree on random polynomial configurations.
        """
        rng = np.random.default_rng(101)
        for config in chain_rule_configurations(rng, 100):
            h = config["h"]
            fg, f_star, jump = config["fg"], config["f_star"], config["jump"]
            explicit = chain_rule_explicit(fg, f_star, jump, h.deriv())
            implicit = chain_rule_implicit(f_star, f_star + fg * jump, fg, h)
            self.assertAlmostEqual(explicit, implicit, delta=1e-12 * max(1.0, abs(explicit)))
            self.assertEqual(
                chain_rule_explicit(fg, f_star, 0.0, h.deriv()),
                float(h.deriv()(f_star)) * fg,
            )


class TestFundamentalTheorem(unittest.TestCase):
    """
    Test the derivative of the primitive.
    """

    def test_constant_integrand(self):
        """
        Test a constant integrand against the identity.
        """
        samples = np.linspace(0.05, 0.95, 10)
        assert ftc_residual(2.5, Derivator.identity(0.0, 1.0), samples) <= 1e-6

    def test_jump_residual_is_exact(self):
        """
        Test that the residual at a jump point is exact.
        """
        g = _identity_with_unit_jump()
        residual = ftc_residual(Integrand.polynomial([0.0, 1.0]), g, [1.0])
        self.assertLessEqual(residual, 1e-12)

    def test_primitive(self):
        """
        Test the primitive values and right limits.
        """
        g = _identity_with_unit_jump()
        primitive = Primitive(Integrand.polynomial([0.0, 1.0]), g)
        self.assertAlmostEqual(primitive(1.0), 0.5, places=14)
        self.assertAlmostEqual(primitive.right_limit(1.0), 1.5, places=14)
        self.assertAlmostEqual(primitive(2.0), 3.0, places=13)

    def test_random_instances(self):
        """
        Test the residual on random increasing derivators and polynomial integrands.
        """
        rng = np.random.default_rng(31)
        tol = 1e-6
        for _ in range(5):
            g = random_increasing_derivator(rng)
            f = random_polynomial(rng)
            samples = np.concatenate((rng.uniform(0.0, 0.99, 20), g.jump_points))
            residual = ftc_residual(f, g, samples, tol)
            _LOG.info(f"FTC residual {residual:g} for {g}")
            assert residual <= 10.0 * tol
            for t in g.jump_points:
                self.assertLessEqual(ftc_residual(f, g, [t], tol), 1e-12)


class TestGContinuity(unittest.TestCase):
    """
    Test the g-continuity heuristic.
    """

    def test_left_continuous_at_jump(self):
        """
        Test that g itself is g-continuous at its jump.
        """
        g = _identity_with_unit_jump()
        assert is_g_continuous_at(g.eval, g, 1.0)

    def test_discontinuous(self):
        """
        Test a step inside a strictly increasing stretch.
        """
        g = Derivator.identity(0.0, 1.0)
        assert not is_g_continuous_at(lambda s: 1.0 if s <= 0.5 else 0.0, g, 0.5)


if __name__ == "__main__":
    unittest.main()
