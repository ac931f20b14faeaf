"""
Tests of the command-line tools.
These tests write their files to a temporary output directory.
"""

import json
import logging
import math
import os
import pprint
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd

from stieltjes_tools.cli import (
    EXIT_INPUT_ERROR,
    EXIT_NUMERICAL_ERROR,
    EXIT_OK,
    build_argument_parser,
    decompose_derivator,
    evaluate_gexp,
    integrate_measure,
    run,
    simulate_scenario,
    solve_ivp,
    study_convergence,
    synthesize_weather,
    uniform_grid,
)
from stieltjes_tools.derivator import Derivator
from stieltjes_tools.errors import InputError
from stieltjes_tools.utils import get_default_logger, write_text_file


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)


def _parse(argv):
    args = build_argument_parser().parse_args(argv)
    _LOG.info(f"Testing args:\n{pprint.pformat(vars(args))}")
    return args


def _linear_ivp_description(coefficient: float) -> dict:
    return {
        "derivators": [Derivator.identity(0.0, 1.0).to_dict()],
        "rhs": {"name": "linear", "params": {"A": [[coefficient]]}},
        "x0": [1.0],
    }


class TestCli(unittest.TestCase):
    """
    Test the command workers and the exit codes.
    """

    def setUp(self):
        """
        Set up the tests.
        """
        self.tmp_dir = tempfile.mkdtemp()
        self.env_vars = {"STIELTJES_OUTPUT_DIR": self.tmp_dir}

    def tearDown(self):
        """
        Clean up the tests.
        """
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.tmp_dir, name)

    def _write_ivp(self, coefficient: float) -> str:
        path = self._path("ivp.json")
        write_text_file(path, json.dumps(_linear_ivp_description(coefficient)))
        return path

    def test_uniform_grid(self):
        """
        Test grid construction and rejected steps.
        """
        assert np.allclose(uniform_grid(0.0, 2.0, 0.5), [0.0, 0.5, 1.0, 1.5, 2.0])
        with self.assertRaises(InputError):
            uniform_grid(0.0, 2.0, 0.3)
        with self.assertRaises(InputError):
            uniform_grid(0.0, 2.0, 0.0)

    def test_gexp_identity(self):
        """
        Test that the identity derivator gives the classical exponential.
        """
        for method in ("product", "hbar"):
            args = _parse(
                [
                    "gexp",
                    "--identity",
                    "0",
                    "2",
                    "--h=1",
                    "--step=0.5",
                    f"--method={method}",
                    "--out=gexp.csv",
                ]
            )
            frame = evaluate_gexp(args, self.env_vars)
            assert np.allclose(frame["t"], [0.0, 0.5, 1.0, 1.5, 2.0])
            assert np.allclose(frame["e_h"], np.exp(frame["t"]), rtol=1e-12, atol=0.0)
            written = pd.read_csv(self._path("gexp.csv"))
            self.assertEqual(list(written.columns), ["t", "e_h"])
            self.assertEqual(len(written), 5)

    def test_integrate(self):
        """
        Test the signed integral and the L1 norm.
        """
        args = _parse(["integrate", "--identity", "0", "2", "--integrand=expr:t"])
        self.assertAlmostEqual(integrate_measure(args, self.env_vars), 2.0, places=12)
        args = _parse(["integrate", "--identity", "0", "2", "--integrand=-1", "--measure=l1"])
        self.assertAlmostEqual(integrate_measure(args, self.env_vars), 2.0, places=14)

    def test_decompose(self):
        """
        Test the decomposition summary and files.
        """
        g = Derivator.from_slopes([0.0, 0.5, 1.0, 2.0], [1.0, 1.0, -1.0], jumps={0.5: -0.5})
        path = self._path("g.json")
        g.save(path)
        args = _parse(["decompose", f"--derivator={path}", "--out_dir=dec", "--points=11"])
        summary = decompose_derivator(args, self.env_vars)
        self.assertAlmostEqual(summary["total_variation"], 2.5, places=14)
        self.assertEqual(summary["jumps"], [[0.5, -0.5]])
        positive = Derivator.load(summary["files"]["positive"])
        negative = Derivator.load(summary["files"]["negative"])
        self.assertAlmostEqual(float(positive.eval(2.0) - positive.eval(0.0)), 1.0, places=14)
        self.assertAlmostEqual(float(negative.eval(2.0) - negative.eval(0.0)), 1.5, places=14)
        table = pd.read_csv(summary["files"]["table"])
        self.assertEqual(list(table.columns), ["t", "g", "g1", "g2", "g_tilde"])
        self.assertEqual(len(table), 11)

    def test_solve(self):
        """
        Test the Euler solution of x' = x.
        """
        args = _parse(["solve", f"--ivp={self._write_ivp(1.0)}", "--step=0.01", "--out=x.csv"])
        frame = solve_ivp(args, self.env_vars)
        self.assertEqual(list(frame.columns), ["time", "x1", "post_jump"])
        final = float(frame["x1"].iloc[-1])
        assert abs(final - math.e) <= 2.0 * 0.01 * math.e
        assert os.path.exists(self._path("x.csv"))

    def test_picard_failure_exit_code(self):
        """
        Test that a non-converging Picard run is a numerical failure.
        """
        argv = [
            "solve",
            f"--ivp={self._write_ivp(5.0)}",
            "--step=0.05",
            "--method=picard",
            "--max_iter=2",
            "--out=x.csv",
        ]
        self.assertEqual(run(argv, self.env_vars), EXIT_NUMERICAL_ERROR)

    def test_convergence(self):
        """
        Test the error table against the exact final state.
        """
        args = _parse(
            [
                "convergence",
                f"--ivp={self._write_ivp(1.0)}",
                "--steps=0.02,0.01,0.005",
                f"--exact={math.e!r}",
                "--out=table.csv",
            ]
        )
        table = study_convergence(args, self.env_vars)
        self.assertEqual(len(table), 3)
        errors = table["error"].to_numpy()
        assert np.all(np.diff(errors) < 0.0)
        assert np.all(np.abs(table["order"].to_numpy()[1:] - 1.0) < 0.1)
        argv = ["convergence", f"--ivp={self._write_ivp(1.0)}", "--steps=0.01,0.02"]
        self.assertEqual(run(argv, self.env_vars), EXIT_INPUT_ERROR)

    def test_synth_weather(self):
        """
        Test the synthetic weather file.
        """
        args = _parse(["synth-weather", "--out=weather.csv"])
        frame = synthesize_weather(args, self.env_vars)
        self.assertEqual(len(frame), 1681)
        written = pd.read_csv(self._path("weather.csv"))
        self.assertEqual(list(written.columns), ["time_hours", "t_ambient_c", "poa_wm2"])
        self.assertEqual(len(written), 1681)

    def test_simulate_bundled(self):
        """
        Test the bundled scenario with every optional output.
        """
        args = _parse(
            [
                "simulate",
                "--out=week.csv",
                "--peaks_out=peaks.csv",
                "--trajectory_out=trajectory.csv",
            ]
        )
        frames = simulate_scenario(args, self.env_vars)
        self.assertEqual(len(frames), 1)
        self.assertEqual(len(frames[0]), 1681)
        written = pd.read_csv(self._path("week.csv"))
        self.assertEqual(
            list(written.columns),
            ["time_hours", "E_wh", "H", "S", "t_cell_c", "power_w", "demand_w", "alpha"],
        )
        peaks = pd.read_csv(self._path("peaks.csv"))
        self.assertEqual(len(peaks), 7)
        trajectory = pd.read_csv(self._path("trajectory.csv"))
        self.assertEqual(list(trajectory.columns), ["time", "E_wh", "H", "S", "post_jump"])

    def test_simulate_sweep(self):
        """
        Test that a sweep writes one file per value.
        """
        args = _parse(
            ["simulate", "--days=1", "--sweep=PANEL_MU1=1e-4,2e-4", "--out=sweep.csv"]
        )
        frames = simulate_scenario(args, self.env_vars)
        self.assertEqual([len(frame) for frame in frames], [241, 241])
        assert os.path.exists(self._path("sweep_PANEL_MU1_1e-4.csv"))
        assert os.path.exists(self._path("sweep_PANEL_MU1_2e-4.csv"))
        assert frames[1]["S"].iloc[-1] > frames[0]["S"].iloc[-1]

    def test_repeatable_outputs(self):
        """
        Test that repeated invocations write identical bytes and that the
        written Jordan parts reload to the same values.
        """
        g = Derivator.from_slopes([0.0, 0.5, 1.0, 2.0], [1.0, 1.0, -1.0], jumps={0.5: -0.5})
        source = self._path("g.json")
        g.save(source)
        for out_dir in ("first", "second"):
            argv = ["decompose", f"--derivator={source}", f"--out_dir={out_dir}"]
            self.assertEqual(run(argv, self.env_vars), EXIT_OK)
        for name in ("variation.json", "positive.json", "negative.json", "decomposition.csv"):
            with open(self._path(os.path.join("first", name)), "rb") as first, open(
                self._path(os.path.join("second", name)), "rb"
            ) as second:
                self.assertEqual(first.read(), second.read())

        grid = np.linspace(g.a, g.b, 1000)
        positive, negative = g.jordan_parts
        reloaded_positive = Derivator.load(self._path(os.path.join("first", "positive.json")))
        reloaded_negative = Derivator.load(self._path(os.path.join("first", "negative.json")))
        assert np.array_equal(reloaded_positive.eval(grid), positive.eval(grid))
        assert np.array_equal(reloaded_negative.eval(grid), negative.eval(grid))
        inner = grid[:-1]
        assert np.array_equal(reloaded_negative.eval_right(inner), negative.eval_right(inner))

        for out in ("day_a.csv", "day_b.csv"):
            self.assertEqual(run(["simulate", "--days=1", f"--out={out}"], self.env_vars), EXIT_OK)
        with open(self._path("day_a.csv"), "rb") as first, open(
            self._path("day_b.csv"), "rb"
        ) as second:
            self.assertEqual(first.read(), second.read())

    def test_input_error_exit_codes(self):
        """
        Test malformed weather, missing files and bad arguments.
        """
        weather = self._path("bad_weather.csv")
        write_text_file(weather, "time_hours,t_ambient_c,poa_wm2\n0,20,0\n1,hot,0\n")
        self.assertEqual(
            run(["simulate", f"--weather={weather}", "--out=x.csv"], self.env_vars),
            EXIT_INPUT_ERROR,
        )
        self.assertEqual(
            run(
                ["integrate", f"--derivator={self._path('missing.json')}", "--integrand=1"],
                self.env_vars,
            ),
            EXIT_INPUT_ERROR,
        )
        self.assertEqual(run(["gexp"], self.env_vars), EXIT_INPUT_ERROR)
        bad_settings = {"STIELTJES_SWEEP_WORKERS": "0"}
        argv = ["integrate", "--identity", "0", "1", "--integrand=1"]
        self.assertEqual(run(argv, bad_settings), EXIT_INPUT_ERROR)

    def test_ok_exit_code(self):
        """
        Test a successful run through the front door.
        """
        argv = ["gexp", "--identity", "0", "1", "--h=2", "--step=0.25", "--out=g.csv"]
        self.assertEqual(run(argv, self.env_vars), EXIT_OK)


if __name__ == "__main__":
    unittest.main()
