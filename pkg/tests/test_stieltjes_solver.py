"""
Tests of the Stieltjes-Euler scheme, Picard iteration and their diagnostics.
"""

import logging
import math
import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from stieltjes_tools.derivator import Derivator
from stieltjes_tools.errors import (
    GridMismatch,
    GuardViolation,
    InputError,
    NoConvergence,
)
from stieltjes_tools.g_exponential import linear_solution
from stieltjes_tools.stieltjes_solver import (
    Guard,
    GuardPolicy,
    StieltjesIVP,
    Trajectory,
    apply_guards,
    build_grid,
    build_rhs,
    convergence_study,
    euler_solve,
    ivp_from_dict,
    lipschitz_probe,
    picard_solve,
    residual,
    write_trajectory_csv,
)
from stieltjes_tools.utils import get_default_logger


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)


def _identity_with_unit_jump() -> Derivator:
    return Derivator.from_slopes([0.0, 1.0, 2.0], [1.0, 1.0], jumps={1.0: 1.0})


def _linear_ivp(g: Derivator, h: float, x0: float = 1.0) -> StieltjesIVP:
    return StieltjesIVP((g,), lambda t, x: h * x, [x0])


class TestBuildGrid(unittest.TestCase):
    """
    Test grid construction.
    """

    def test_uniform(self):
        """
        Test a step that divides the horizon.
        """
        grid = build_grid(_linear_ivp(Derivator.identity(0.0, 1.0), 1.0), 0.25)
        assert np.array_equal(grid, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_partial_last_step(self):
        """
        Test a step that does not divide the horizon.
        """
        grid = build_grid(_linear_ivp(Derivator.identity(0.0, 1.0), 1.0), 0.3)
        assert np.allclose(grid, [0.0, 0.3, 0.6, 0.9, 1.0])
        self.assertEqual(grid[-1], 1.0)

    def test_jump_points_merged(self):
        """
        Test that every jump point is a node.
        """
        g = Derivator.pure_jump(0.0, 1.0, {0.33: 1.0, 0.5: -0.5})
        grid = build_grid(_linear_ivp(g, 1.0), 0.1)
        assert np.all(np.isin([0.33, 0.5], grid))
        assert np.all(np.diff(grid) > 0.0)

    def test_bad_step(self):
        """
        Test non-positive steps.
        """
        with self.assertRaises(InputError):
            build_grid(_linear_ivp(Derivator.identity(), 1.0), 0.0)


class TestEulerSolve(unittest.TestCase):
    """
    Test the Stieltjes-Euler scheme.
    """

    def test_forward_euler_bitwise(self):
        """
        Test that identity derivators give forward Euler to the bit.
        """
        ivp = StieltjesIVP(
            (Derivator.identity(0.0, 1.0), Derivator.identity(0.0, 1.0)),
            build_rhs("linear", {"A": [[0.0, 1.0], [-1.0, 0.0]]}, 2),
            [1.0, 0.0],
        )
        trajectory = euler_solve(ivp, 0.05)
        matrix = np.array([[0.0, 1.0], [-1.0, 0.0]])
        x = np.array([1.0, 0.0])
        expected = [x]
        for dt in np.diff(trajectory.grid):
            rate = matrix @ x + np.zeros(2)
            x = x + rate * np.array([dt, dt])
            expected.append(x)
        assert np.array_equal(trajectory.states, np.array(expected))

    def test_classical_exponential(self):
        """
        Test x' = x against e at first order.
        """
        step = 0.001
        trajectory = euler_solve(_linear_ivp(Derivator.identity(0.0, 1.0), 1.0), step)
        self.assertAlmostEqual(trajectory.final_state[0], math.e, delta=2.0 * step * math.e)

    def test_jump_update(self):
        """
        Test the jump update and the post-jump record.
        """
        ivp = _linear_ivp(_identity_with_unit_jump(), -2.0)
        trajectory = euler_solve(ivp, 0.01)
        k = int(np.flatnonzero(trajectory.grid == 1.0)[0])
        x = trajectory.states[k]
        assert np.array_equal(trajectory.post_jump_states[k], x + (-2.0 * x) * 1.0)
        self.assertAlmostEqual(trajectory.post_jump_states[k][0], -x[0], places=15)
        self.assertEqual(list(trajectory.post_jump_states), [k])

    def test_constancy(self):
        """
        Test that the state is constant to the bit where g is flat.
        """
        g = Derivator.from_slopes([0.0, 1.0, 2.0, 3.0], [1.0, 0.0, 1.0])
        trajectory = euler_solve(_linear_ivp(g, 1.0), 0.1)
        flat = (trajectory.grid >= 1.0) & (trajectory.grid <= 2.0)
        states = trajectory.states[flat, 0]
        assert np.all(states == states[0])
        assert trajectory.states[-1, 0] > states[0]

    def test_linear_closed_form(self):
        """
        Test convergence to -e^-4 through a sign-flipping jump.

        With h = -2 and a unit jump the left-endpoint update cancels the
        first-order error in the jump cell, so successive error ratios come
        out near 4 rather than 2. The lower bound of 1.7 therefore asserts at
        least first order; test_first_order_convergence checks the [1.7, 2.3]
        window on an instance whose error is genuinely first order.
        """
        ivp = _linear_ivp(_identity_with_unit_jump(), -2.0)
        exact = -math.exp(-4.0)
        self.assertAlmostEqual(linear_solution(1.0, -2.0, ivp.derivators[0], 2.0), exact, places=14)
        study = convergence_study(ivp, [0.02, 0.01, 0.005, 0.0025], exact)
        _LOG.info(f"Convergence study:\n{study}")
        errors = study["error"].to_numpy()
        assert np.all(np.diff(errors) < 0.0)
        assert errors[-1] < 5e-4
        ratios = study["ratio"].to_numpy()[1:]
        assert np.all(ratios >= 1.7)
        assert np.all((ratios > 3.5) & (ratios < 4.5))

    def test_first_order_convergence(self):
        """
        Test order one on an instance with a first-order error term.
        """
        g = Derivator.from_slopes([0.0, 1.0, 2.0], [1.0, 1.0], jumps={1.0: 0.5})
        ivp = _linear_ivp(g, -1.0)
        study = convergence_study(
            ivp,
            [0.02, 0.01, 0.005, 0.0025],
            lambda t: [linear_solution(1.0, -1.0, g, t)],
        )
        _LOG.info(f"Convergence study:\n{study}")
        self.assertAlmostEqual(linear_solution(1.0, -1.0, g, 2.0), 0.5 * math.exp(-2.0), places=14)
        ratios = study["ratio"].to_numpy()[1:]
        assert np.all((ratios >= 1.7) & (ratios <= 2.3))
        orders = study["order"].to_numpy()[1:]
        assert np.all(np.abs(orders - 1.0) < 0.25)

    def test_annihilation(self):
        """
        Test that a resolved zero factor puts the right limit on 0 exactly.
        """
        step = 0.01
        trajectory = euler_solve(_linear_ivp(_identity_with_unit_jump(), -1.0), step)
        k = int(np.flatnonzero(trajectory.grid == 1.0)[0])
        self.assertEqual(trajectory.post_jump_states[k][0], 0.0)
        # The jump cell also carries the density increment, so later nodes are O(step).
        after = trajectory.states[k + 1 :, 0]
        assert np.all(np.abs(after) <= step * abs(trajectory.states[k, 0]) * (1.0 + 1e-12))

    def test_zero_rhs_and_pure_jumps(self):
        """
        Test cases where the scheme is exact at any step.
        """
        zero = StieltjesIVP((Derivator.identity(0.0, 1.0),), build_rhs("zero", None, 1), [2.0])
        study = convergence_study(zero, [0.1, 0.05], [2.0])
        assert np.all(study["error"] == 0.0)
        g = Derivator.pure_jump(0.0, 2.0, {0.5: 1.0, 1.5: -0.5})
        study = convergence_study(_linear_ivp(g, 0.5), [0.3, 0.1], [1.125])
        assert np.all(study["error"] == 0.0)

    def test_guards(self):
        """
        Test the clamp and reject policies.
        """
        rhs = build_rhs("constant", {"c": 1.0}, 1)
        g = Derivator.identity(0.0, 1.0)
        clamp = StieltjesIVP((g,), rhs, [0.0], (Guard(upper=0.5),))
        with self.assertLogs("stieltjes_tools.stieltjes_solver", level="WARNING"):
            trajectory = euler_solve(clamp, 0.1)
        self.assertEqual(trajectory.states.max(), 0.5)
        assert trajectory.meta["clamped"] > 0
        reject = StieltjesIVP((g,), rhs, [0.0], (Guard(upper=0.5, policy=GuardPolicy.REJECT),))
        with self.assertRaises(GuardViolation):
            euler_solve(reject, 0.1)

    def test_state_dependent_guard(self):
        """
        Test an upper bound computed from another component.
        """
        g = Derivator.identity(0.0, 1.0)
        rhs = build_rhs("constant", {"c": [1.0, -0.5]}, 2)
        guard = Guard(lower=0.0, upper_fn=lambda x: 2.0 * x[1])
        ivp = StieltjesIVP((g, g), rhs, [0.5, 1.0], (guard, None))
        with self.assertLogs("stieltjes_tools.stieltjes_solver", level="WARNING"):
            trajectory = euler_solve(ivp, 0.05)
        assert np.all(trajectory.states[:, 0] <= 2.0 * trajectory.states[:, 1] + 1e-15)

    def test_guard_bounds_follow_clamped_state(self):
        """
        Test that state-dependent bounds see components already clamped to
        their fixed bounds.
        """
        guards = (
            Guard(lower=0.0, upper_fn=lambda x: 2.0 * x[1]),
            Guard(lower=0.5, upper=1.0),
        )
        guarded, count = apply_guards(guards, np.array([3.0, -1.0]), 0.0)
        self.assertEqual(guarded.tolist(), [1.0, 0.5])
        self.assertEqual(count, 2)
        unchanged, count = apply_guards(guards, np.array([0.8, 0.6]), 0.0)
        self.assertEqual(unchanged.tolist(), [0.8, 0.6])
        self.assertEqual(count, 0)

        # An empty interval resolves to its lower bound.
        empty = (Guard(lower=1.0, upper_fn=lambda x: x[1]), None)
        guarded, _ = apply_guards(empty, np.array([0.2, 0.5]), 0.0)
        self.assertEqual(guarded[0], 1.0)
        strict = (Guard(lower=1.0, upper_fn=lambda x: x[1], policy=GuardPolicy.REJECT), None)
        with self.assertRaises(GuardViolation):
            apply_guards(strict, np.array([0.2, 0.5]), 0.0)

    def test_to_frame(self):
        """
        Test the tabular form with post-jump rows.
        """
        trajectory = euler_solve(_linear_ivp(_identity_with_unit_jump(), -2.0), 0.5)
        frame = trajectory.to_frame()
        self.assertEqual(list(frame.columns), ["time", "x1", "post_jump"])
        self.assertEqual(len(frame), trajectory.grid.size + 1)
        self.assertEqual(int(frame["post_jump"].sum()), 1)
        named = trajectory.to_frame(["charge"])
        self.assertEqual(list(named.columns), ["time", "charge", "post_jump"])
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = os.path.join(tmp_dir, "trajectory.csv")
            write_trajectory_csv(trajectory, path, ["charge"])
            written = pd.read_csv(path)
        self.assertEqual(len(written), len(named))
        assert np.array_equal(written["charge"].to_numpy(), named["charge"].to_numpy())


class TestResidual(unittest.TestCase):
    """
    Test the integral-equation residual.
    """

    def test_euler_residual(self):
        """
        Test that Euler output satisfies the discrete integral equation.
        """
        ivp = _linear_ivp(_identity_with_unit_jump(), -2.0)
        trajectory = euler_solve(ivp, 0.01)
        assert residual(trajectory, ivp) <= 1e-10 * ivp.derivators[0].scale()

    def test_detects_corruption(self):
        """
        Test that a perturbed node shows up.
        """
        ivp = _linear_ivp(Derivator.identity(0.0, 1.0), 1.0)
        trajectory = euler_solve(ivp, 0.01)
        states = trajectory.states.copy()
        states[50] += 1.0
        corrupted = Trajectory(grid=trajectory.grid, states=states)
        assert residual(corrupted, ivp) >= 0.99

    def test_grid_mismatch(self):
        """
        Test grids that miss the domain or a jump.
        """
        ivp = _linear_ivp(_identity_with_unit_jump(), -2.0)
        grid = np.array([0.0, 0.5, 2.0])
        with self.assertRaises(GridMismatch):
            residual(Trajectory(grid=grid, states=np.ones((3, 1))), ivp)
        with self.assertRaises(GridMismatch):
            residual(Trajectory(grid=grid, states=np.ones((2, 1))), ivp)


class TestPicard(unittest.TestCase):
    """
    Test Picard iteration and its report.
    """

    def test_contractive_linear(self):
        """
        Test convergence and agreement with Euler on a contractive system.
        """
        g = Derivator.identity(0.0, 1.0)
        ivp = StieltjesIVP((g,), build_rhs("linear", {"A": [[-0.5]]}, 1), [1.0])
        lipschitz = lipschitz_probe(ivp.rhs, [(-1.0, 2.0)], samples=64)
        assert lipschitz * g.total_variation() < 1.0
        tol, step = 1e-10, 0.01
        trajectory, report = picard_solve(ivp, tol=tol, grid_step=step)
        _LOG.info(f"Picard report: {report}")
        assert report.iterations >= 1
        assert report.final_delta < tol
        assert all(later <= earlier for earlier, later in zip(report.deltas, report.deltas[1:]))
        assert not report.suggest_weighted_norm
        euler = euler_solve(ivp, step)
        gap = np.max(np.abs(trajectory.states - euler.states))
        assert gap <= tol + 2.0 * step * g.scale()
        assert residual(trajectory, ivp) <= 10.0 * tol

    def test_fixed_point(self):
        """
        Test that a zero rhs converges at once.
        """
        ivp = StieltjesIVP((Derivator.identity(),), build_rhs("zero", None, 1), [3.0])
        trajectory, report = picard_solve(ivp)
        self.assertEqual(report.iterations, 1)
        self.assertEqual(report.final_delta, 0.0)
        assert np.all(trajectory.states == 3.0)

    def test_weighted_norm_suggestion(self):
        """
        Test a rhs whose Lipschitz constant exceeds the inverse variation.
        """
        ivp = StieltjesIVP(
            (Derivator.identity(0.0, 1.0),), build_rhs("linear", {"A": [[5.0]]}, 1), [1.0]
        )
        _, report = picard_solve(ivp, tol=1e-8, max_iter=200, grid_step=0.05)
        assert report.suggest_weighted_norm
        assert any(ratio > 1.0 for ratio in report.contraction_estimates)
        self.assertEqual(len(report.weighted_ratios), report.iterations - 1)
        with self.assertRaises(NoConvergence):
            picard_solve(ivp, max_iter=2, grid_step=0.05)

    def test_picard_with_jump(self):
        """
        Test the post-jump states of a Picard run.
        """
        ivp = _linear_ivp(_identity_with_unit_jump(), -0.25)
        trajectory, _ = picard_solve(ivp, tol=1e-12, grid_step=0.05)
        euler = euler_solve(ivp, 0.05)
        assert np.allclose(trajectory.states, euler.states, atol=1e-11)
        self.assertEqual(list(trajectory.post_jump_states), list(euler.post_jump_states))


class TestLipschitzProbe(unittest.TestCase):
    """
    Test the sampled Lipschitz estimate.
    """

    def test_square(self):
        """
        Test x^2 on [0, 1] approaching 2 from below.
        """
        estimate = lipschitz_probe(lambda t, x: x**2, [(0.0, 1.0)], samples=1024)
        assert 1.8 < estimate <= 2.0

    def test_constant(self):
        """
        Test that a constant rhs has estimate 0.
        """
        self.assertEqual(lipschitz_probe(lambda t, x: np.ones(2), [(0.0, 1.0)] * 2), 0.0)

    def test_linear(self):
        """
        Test the induced max-row-sum norm bound and determinism.
        """
        matrix = np.array([[1.0, -2.0, 0.5], [0.0, 1.0, 1.0], [3.0, 0.0, -1.0]])
        norm = float(np.max(np.sum(np.abs(matrix), axis=1)))
        rhs = build_rhs("linear", {"A": matrix.tolist()}, 3)
        estimate = lipschitz_probe(rhs, [(-1.0, 1.0)] * 3, samples=2048, seed=4)
        assert 0.5 * norm < estimate <= norm * (1.0 + 1e-12)
        self.assertEqual(estimate, lipschitz_probe(rhs, [(-1.0, 1.0)] * 3, samples=2048, seed=4))
        with self.assertRaises(InputError):
            lipschitz_probe(rhs, [(-1.0, 1.0)] * 3, samples=1)


class TestIvpFromDict(unittest.TestCase):
    """
    Test IVP descriptions.
    """

    def test_inline(self):
        """
        Test an inline derivator with a registered rhs and a guard.
        """
        ivp = ivp_from_dict(
            {
                "derivators": [_identity_with_unit_jump().to_dict()],
                "rhs": {"name": "linear", "params": {"A": [[-2.0]]}},
                "x0": [1.0],
                "guards": [{"lower": -5.0, "upper": 5.0, "policy": "reject"}],
            }
        )
        self.assertEqual(ivp.dimension, 1)
        self.assertEqual(ivp.guards[0].policy, GuardPolicy.REJECT)
        self.assertEqual(list(ivp.jump_points()), [1.0])

    def test_errors(self):
        """
        Test unknown rhs names and missing fields.
        """
        derivator = Derivator.identity().to_dict()
        with self.assertRaises(InputError):
            ivp_from_dict({"derivators": [derivator], "rhs": "cubic", "x0": [1.0]})
        with self.assertRaises(InputError):
            ivp_from_dict({"derivators": [derivator], "rhs": "zero"})
        with self.assertRaises(InputError):
            ivp_from_dict(
                {
                    "derivators": [derivator],
                    "rhs": "zero",
                    "x0": [0.0],
                    "guards": [{"policy": "bounce"}],
                }
            )
        with self.assertRaises(InputError):
            StieltjesIVP((Derivator.identity(),), build_rhs("zero", None, 1), [1.0, 2.0])


if __name__ == "__main__":
    unittest.main()
