"""
Command-line front door for the Stieltjes toolkit.

Inspects derivators, integrates, evaluates g-exponentials, solves Stieltjes
IVPs and runs the PV/battery thermal stress simulation. Every command writes
CSV or JSON data files; no plotting is done here.
"""

import argparse
import json
import logging
import math
import os
import sys
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from stieltjes_tools.config_env import Settings, get_settings
from stieltjes_tools.derivator import Derivator
from stieltjes_tools.errors import InputError, NumericalError, StieltjesError
from stieltjes_tools.expressions import parse_integrand_spec
from stieltjes_tools.g_exponential import (
    classify_jumps,
    g_exp_on_grid,
    g_exp_via_hbar,
)
from stieltjes_tools.ls_measure import (
    integrate,
    integrate_abs,
    integrate_continuous,
    l1_norm,
)
from stieltjes_tools.pv_thermal_model import (
    daily_peak_alpha,
    load_weather_csv,
    simulate,
    sweep_scenarios,
    synth_clear_sky,
    write_weather_csv,
)
from stieltjes_tools.scenario_config import (
    BUNDLED_SCENARIO,
    build_scenario,
    load_scenario_config,
    sweep_configs,
    with_override,
    with_weather_csv,
)
from stieltjes_tools.stieltjes_solver import (
    convergence_study,
    euler_solve,
    ivp_from_dict,
    picard_solve,
    residual,
)
from stieltjes_tools.utils import (
    get_default_logger,
    read_text_file,
    set_package_log_level,
    write_frame_csv,
)


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

# Grid points used by decompose for the evaluation table.
_DECOMPOSE_POINTS = 1001

# Tolerance for deciding that a grid step divides an interval.
_GRID_RTOL = 1e-9

_STATE_NAMES = ["E_wh", "H", "S"]


def _add_common_arguments(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--verbose", required=False, action="store_true", help="verbose output"
    )


def _add_derivator_arguments(parser: argparse.ArgumentParser, required: bool = True):
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument(
        "--derivator", type=str, help="derivator JSON file (see decompose output)"
    )
    group.add_argument(
        "--identity",
        type=float,
        nargs=2,
        metavar=("A", "B"),
        help="use the identity derivator g(t) = t on [A, B]",
    )


def build_argument_parser() -> argparse.ArgumentParser:
    """
    Define the ArgumentParser object and parameters.

    :return parser: The argument parser.
    """
    parser = argparse.ArgumentParser(
        prog="stieltjes_tools",
        description="""
Stieltjes differential equations toolkit.
Decomposes derivators into monotone parts, integrates against their
Lebesgue-Stieltjes measures, evaluates g-exponentials, solves systems
x'_g = f(t, x) and simulates PV panel / battery thermal stress scenarios.
""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    decompose = subparsers.add_parser(
        "decompose",
        help="variation function and Jordan decomposition of a derivator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    decompose.add_argument(
        "--derivator", type=str, required=True, help="derivator JSON file"
    )
    decompose.add_argument(
        "--out_dir",
        type=str,
        required=False,
        default="decomposition",
        help="directory receiving variation.json, positive.json, negative.json "
        "and decomposition.csv",
    )
    decompose.add_argument(
        "--points",
        type=int,
        required=False,
        default=_DECOMPOSE_POINTS,
        help="number of grid points of the evaluation table",
    )
    _add_common_arguments(decompose)

    integrate_parser = subparsers.add_parser(
        "integrate", help="Lebesgue-Stieltjes integral over [u, v)"
    )
    _add_derivator_arguments(integrate_parser)
    integrate_parser.add_argument(
        "--integrand",
        type=str,
        required=True,
        help="""
integrand: a number, "table:t0:v0,t1:v1,..." (left-constant) or an
arithmetic expression in t such as "expr:t**2 + 1"
""",
    )
    integrate_parser.add_argument("--u", type=float, required=False, help="left end (default a)")
    integrate_parser.add_argument("--v", type=float, required=False, help="right end (default b)")
    integrate_parser.add_argument(
        "--measure",
        type=str,
        required=False,
        choices=["signed", "continuous", "variation", "l1"],
        default="signed",
        help="""
signed: integral against mu_g;
continuous: density part only;
variation: integral against |mu_g|;
l1: the L1_g norm over [a, b)
""",
    )
    _add_common_arguments(integrate_parser)

    gexp = subparsers.add_parser("gexp", help="g-exponential e_h(t; a) on a grid")
    _add_derivator_arguments(gexp)
    gexp.add_argument(
        "--h", type=str, required=True, help="coefficient h, same syntax as --integrand"
    )
    gexp.add_argument("--step", type=float, required=True, help="grid step")
    gexp.add_argument("--start", type=float, required=False, help="first grid time (default a)")
    gexp.add_argument("--end", type=float, required=False, help="last grid time (default b)")
    gexp.add_argument(
        "--method",
        type=str,
        required=False,
        choices=["product", "hbar"],
        default="product",
        help="product formula or the h-bar logarithmic form",
    )
    gexp.add_argument("--out", type=str, required=False, help="output CSV (default stdout)")
    _add_common_arguments(gexp)

    solve = subparsers.add_parser("solve", help="solve a Stieltjes IVP described in JSON")
    solve.add_argument(
        "--ivp",
        type=str,
        required=True,
        help='IVP JSON: {"derivators": [...], "rhs": {"name", "params"}, "x0": [...]}',
    )
    solve.add_argument("--step", type=float, required=True, help="nominal grid step")
    solve.add_argument(
        "--method",
        type=str,
        required=False,
        choices=["euler", "picard"],
        default="euler",
        help="Stieltjes-Euler scheme or Picard iteration",
    )
    solve.add_argument(
        "--tol", type=float, required=False, default=1e-10, help="Picard tolerance"
    )
    solve.add_argument(
        "--max_iter", type=int, required=False, default=100, help="Picard iteration limit"
    )
    solve.add_argument("--out", type=str, required=False, help="output CSV (default stdout)")
    _add_common_arguments(solve)

    sim = subparsers.add_parser("simulate", help="PV/battery thermal stress simulation")
    sim.add_argument(
        "--config",
        type=str,
        required=False,
        default=BUNDLED_SCENARIO,
        help="scenario file (default: the bundled summer scenario)",
    )
    sim.add_argument(
        "--weather", type=str, required=False, help="weather CSV overriding the config"
    )
    sim.add_argument("--days", type=float, required=False, help="simulated days")
    sim.add_argument("--step", type=float, required=False, help="time step in hours")
    sim.add_argument(
        "--out",
        type=str,
        required=False,
        default="simulation.csv",
        help="output CSV of the states and derived series",
    )
    sim.add_argument(
        "--trajectory_out",
        type=str,
        required=False,
        help="optional CSV of the raw (E, H, S) trajectory",
    )
    sim.add_argument(
        "--peaks_out", type=str, required=False, help="optional CSV of daily peak efficiency"
    )
    sim.add_argument(
        "--sweep",
        type=str,
        required=False,
        help="""
parameter sweep KEY=v1,v2,...: runs one scenario per value in parallel and
writes <out stem>_<KEY>_<value>.csv for each
""",
    )
    _add_common_arguments(sim)

    synth = subparsers.add_parser("synth-weather", help="synthetic clear-sky weather CSV")
    synth.add_argument("--days", type=int, required=False, default=7, help="number of days")
    synth.add_argument(
        "--peak_poa", type=float, required=False, default=900.0, help="peak POA in W/m2"
    )
    synth.add_argument(
        "--t_min", type=float, required=False, default=22.0, help="daily minimum degC"
    )
    synth.add_argument(
        "--t_max", type=float, required=False, default=36.0, help="daily maximum degC"
    )
    synth.add_argument("--step", type=float, required=False, default=0.1, help="step in hours")
    synth.add_argument("--out", type=str, required=True, help="output CSV")
    _add_common_arguments(synth)

    convergence = subparsers.add_parser(
        "convergence", help="Euler error table for decreasing steps"
    )
    convergence.add_argument("--ivp", type=str, required=True, help="IVP JSON")
    convergence.add_argument(
        "--steps",
        type=str,
        required=True,
        help="comma separated decreasing steps, e.g. 0.02,0.01,0.005",
    )
    convergence.add_argument(
        "--exact",
        type=str,
        required=False,
        help="exact final state as comma separated values; "
        "default is an Euler run at a quarter of the finest step",
    )
    convergence.add_argument("--out", type=str, required=False, help="output CSV (default stdout)")
    _add_common_arguments(convergence)

    # Add usage examples to the help message
    parser.epilog = """
examples:
    python3 -m stieltjes_tools.cli decompose --derivator=g.json --out_dir=out
    python3 -m stieltjes_tools.cli integrate --derivator=g.json --integrand="expr:t**2"
    python3 -m stieltjes_tools.cli gexp --identity 0 2 --h=1 --step=0.5
    python3 -m stieltjes_tools.cli solve --ivp=ivp.json --step=0.01 --out=trajectory.csv
    python3 -m stieltjes_tools.cli simulate --out=week.csv --peaks_out=peaks.csv
    python3 -m stieltjes_tools.cli simulate --sweep=PANEL_MU1=1e-4,2e-4 --out=sweep.csv
    python3 -m stieltjes_tools.cli synth-weather --days=7 --out=weather.csv
    python3 -m stieltjes_tools.cli convergence --ivp=ivp.json --steps=0.02,0.01,0.005
"""

    return parser


def _load_derivator(args: argparse.Namespace) -> Derivator:
    if getattr(args, "identity", None):
        a, b = args.identity
        return Derivator.identity(a, b)
    return Derivator.load(args.derivator)


def _load_json(path: str) -> dict:
    try:
        return json.loads(read_text_file(path))
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from e


def uniform_grid(start: float, end: float, step: float) -> np.ndarray:
    """
    Nodes start, start + step, ..., end; the step must divide end - start.
    """
    if not step > 0.0:
        raise InputError(f"The step must be positive, got {step}")
    if end < start:
        raise InputError(f"The grid end {end} precedes its start {start}")
    count = (end - start) / step
    nearest = round(count)
    if abs(count - nearest) > _GRID_RTOL * max(1.0, count):
        raise InputError(f"Step {step} does not divide [{start}, {end}]")
    return np.linspace(start, end, int(nearest) + 1)


def _emit(frame: pd.DataFrame, out: Optional[str], settings: Settings):
    if out is None:
        sys.stdout.write(frame.to_csv(index=False, lineterminator="\n"))
        return
    path = settings.output_path(out)
    write_frame_csv(frame, path)
    print(f"Wrote {len(frame)} rows to {path}")


def decompose_derivator(args: argparse.Namespace, env_vars: Dict[str, Optional[str]]) -> dict:
    """
    Worker function processing the args to execute the task.
    Factoring out the worker allows easier unit tests with test args.

    :param args: The command arguments.
    :param env_vars: The environment variables containing static configuration.
    :returns: The summary dictionary that was printed.
    """
    print(f"Decomposing derivator: {json.dumps(vars(args))}")
    settings = get_settings(env_vars)

    g = Derivator.load(args.derivator)
    tilde = g.variation_derivator
    positive, negative = g.jordan_parts
    out_dir = settings.output_path(args.out_dir)
    paths = {
        "variation": os.path.join(out_dir, "variation.json"),
        "positive": os.path.join(out_dir, "positive.json"),
        "negative": os.path.join(out_dir, "negative.json"),
    }
    tilde.save(paths["variation"])
    positive.save(paths["positive"])
    negative.save(paths["negative"])

    if args.points < 2:
        raise InputError("--points must be at least 2")
    grid = np.linspace(g.a, g.b, args.points)
    table = pd.DataFrame(
        {
            "t": grid,
            "g": g.eval(grid),
            "g1": positive.eval(grid),
            "g2": negative.eval(grid),
            "g_tilde": tilde.eval(grid),
        },
        columns=["t", "g", "g1", "g2", "g_tilde"],
    )
    paths["table"] = os.path.join(out_dir, "decomposition.csv")
    write_frame_csv(table, paths["table"])

    summary = {
        "a": g.a,
        "b": g.b,
        "total_variation": g.total_variation(),
        "positive_variation": float(positive.eval(g.b)),
        "negative_variation": float(negative.eval(g.b)),
        "jumps": [[t, size] for t, size in g.jumps.items()],
        "constancy_components": [list(c) for c in g.constancy_components],
        "files": paths,
    }
    print(f"Decomposition: {json.dumps(summary)}")
    return summary


def integrate_measure(args: argparse.Namespace, env_vars: Dict[str, Optional[str]]) -> float:
    """
    Worker function processing the args to execute the task.

    :param args: The command arguments.
    :param env_vars: The environment variables containing static configuration.
    :returns: The integral value.
    """
    print(f"Integrating: {json.dumps(vars(args))}")
    get_settings(env_vars)

    g = _load_derivator(args)
    f = parse_integrand_spec(args.integrand)
    u = g.a if args.u is None else args.u
    v = g.b if args.v is None else args.v
    if args.measure == "l1":
        value = l1_norm(f, g)
    elif args.measure == "variation":
        value = integrate_abs(f, g, u, v)
    elif args.measure == "continuous":
        value = integrate_continuous(f, g, u, v)
    else:
        value = integrate(f, g, u, v)
    print(f"Integral: {value!r}")
    return value


def evaluate_gexp(
    args: argparse.Namespace, env_vars: Dict[str, Optional[str]]
) -> pd.DataFrame:
    """
    Worker function processing the args to execute the task.

    :param args: The command arguments.
    :param env_vars: The environment variables containing static configuration.
    :returns: The (t, e_h) frame.
    """
    # CSV may go to stdout, so the argument echo goes to the log instead.
    _LOG.debug("Evaluating g-exponential: %s", json.dumps(vars(args)))
    settings = get_settings(env_vars)

    g = _load_derivator(args)
    h = parse_integrand_spec(args.h)
    grid = uniform_grid(
        g.a if args.start is None else args.start,
        g.b if args.end is None else args.end,
        args.step,
    )
    if args.method == "hbar":
        values = np.array([g_exp_via_hbar(h, g, float(t)) for t in grid])
    else:
        values = g_exp_on_grid(h, g, grid)
    decomposition = classify_jumps(h, g)
    if decomposition.T_zero.size:
        _LOG.info("e_h vanishes from tau0 = %g on", decomposition.tau0)
    frame = pd.DataFrame({"t": grid, "e_h": values}, columns=["t", "e_h"])
    _emit(frame, args.out, settings)
    return frame


def solve_ivp(args: argparse.Namespace, env_vars: Dict[str, Optional[str]]) -> pd.DataFrame:
    """
    Worker function processing the args to execute the task.

    :param args: The command arguments.
    :param env_vars: The environment variables containing static configuration.
    :returns: The trajectory frame.
    """
    _LOG.debug("Solving IVP: %s", json.dumps(vars(args)))
    settings = get_settings(env_vars)

    ivp = ivp_from_dict(_load_json(args.ivp), base_dir=os.path.dirname(os.path.abspath(args.ivp)))
    if args.method == "picard":
        trajectory, report = picard_solve(
            ivp, tol=args.tol, max_iter=args.max_iter, grid_step=args.step
        )
        _LOG.info(
            "Picard converged in %d iterations (delta %g, Lipschitz estimate %g)",
            report.iterations,
            report.final_delta,
            report.lipschitz_estimate,
        )
        if report.suggest_weighted_norm:
            _LOG.warning("Iteration is not a sup-norm contraction; %s", report.bielecki_weight)
    else:
        trajectory = euler_solve(ivp, args.step)
    _LOG.info("Integral residual: %g", residual(trajectory, ivp))
    frame = trajectory.to_frame()
    _emit(frame, args.out, settings)
    return frame


def _scenario_config(args: argparse.Namespace):
    config = load_scenario_config(args.config)
    if args.weather is not None:
        config = with_weather_csv(config, os.path.abspath(args.weather))
    if args.days is not None:
        config = with_override(config, "DAYS", args.days)
    if args.step is not None:
        config = with_override(config, "STEP_HOURS", args.step)
    return config


def _sweep_path(out: str, label: str) -> str:
    stem, ext = os.path.splitext(out)
    key, value = label.split("=", 1)
    return f"{stem}_{key}_{value}{ext or '.csv'}"


def simulate_scenario(
    args: argparse.Namespace, env_vars: Dict[str, Optional[str]]
) -> List[pd.DataFrame]:
    """
    Worker function processing the args to execute the task.
    Factoring out the worker allows easier unit tests with test args.

    :param args: The command arguments.
    :param env_vars: The environment variables containing static configuration.
    :returns: The output frames, one per scenario.
    """
    print(f"Simulating scenario: {json.dumps(vars(args))}")
    settings = get_settings(env_vars)

    config = _scenario_config(args)
    if args.sweep:
        labelled = sweep_configs(config, args.sweep)
        outputs = [_sweep_path(args.out, label) for label, _ in labelled]
    else:
        labelled = [("", config)]
        outputs = [args.out]
    scenarios = [
        build_scenario(item, default_step=settings.default_step_hours)
        for _, item in labelled
    ]
    results = sweep_scenarios(scenarios, max_workers=settings.sweep_workers)

    frames = []
    for (label, _), out, result in zip(labelled, outputs, results):
        path = settings.output_path(out)
        result.to_csv(path)
        final = result.frame.iloc[-1]
        print(
            f"{label + ': ' if label else ''}wrote {len(result.frame)} rows to {path}; "
            f"final E = {final['E_wh']:.1f} Wh, H = {final['H']:.6f}, S = {final['S']:.6f}"
        )
        frames.append(result.frame)
    if not args.sweep:
        result = results[0]
        if args.trajectory_out:
            write_frame_csv(
                result.trajectory.to_frame(_STATE_NAMES),
                settings.output_path(args.trajectory_out),
            )
        if args.peaks_out:
            peaks = daily_peak_alpha(result.frame)
            write_frame_csv(
                pd.DataFrame({"day": peaks.index, "peak_alpha": peaks.to_numpy()}),
                settings.output_path(args.peaks_out),
            )
    return frames


def synthesize_weather(
    args: argparse.Namespace, env_vars: Dict[str, Optional[str]]
) -> pd.DataFrame:
    """
    Worker function processing the args to execute the task.

    :param args: The command arguments.
    :param env_vars: The environment variables containing static configuration.
    :returns: The weather frame.
    """
    print(f"Synthesizing weather: {json.dumps(vars(args))}")
    settings = get_settings(env_vars)

    weather = synth_clear_sky(args.days, args.peak_poa, args.t_min, args.t_max, args.step)
    path = settings.output_path(args.out)
    write_weather_csv(weather, path)
    # Re-read to validate what was written.
    load_weather_csv(path)
    print(f"Wrote {weather.grid.size} rows to {path}")
    return weather.to_frame()


def _parse_floats(text: str, what: str) -> List[float]:
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise InputError(f"Malformed {what}: {text!r}") from e
    if not values or not all(math.isfinite(v) for v in values):
        raise InputError(f"Malformed {what}: {text!r}")
    return values


def study_convergence(
    args: argparse.Namespace, env_vars: Dict[str, Optional[str]]
) -> pd.DataFrame:
    """
    Worker function processing the args to execute the task.

    :param args: The command arguments.
    :param env_vars: The environment variables containing static configuration.
    :returns: The error table.
    """
    _LOG.debug("Convergence study: %s", json.dumps(vars(args)))
    settings = get_settings(env_vars)

    ivp = ivp_from_dict(_load_json(args.ivp), base_dir=os.path.dirname(os.path.abspath(args.ivp)))
    steps = _parse_floats(args.steps, "--steps")
    if any(later >= earlier for earlier, later in zip(steps, steps[1:])):
        raise InputError("--steps must be decreasing")
    if args.exact is not None:
        reference = _parse_floats(args.exact, "--exact")
    else:
        reference = euler_solve(ivp, steps[-1] / 4.0)
    table = convergence_study(ivp, steps, reference)
    _emit(table, args.out, settings)
    return table


WORKERS: Dict[str, Callable[[argparse.Namespace, Dict[str, Optional[str]]], object]] = {
    "decompose": decompose_derivator,
    "integrate": integrate_measure,
    "gexp": evaluate_gexp,
    "solve": solve_ivp,
    "simulate": simulate_scenario,
    "synth-weather": synthesize_weather,
    "convergence": study_convergence,
}


def run(
    argv: Optional[List[str]] = None, env_vars: Optional[Dict[str, Optional[str]]] = None
) -> int:
    """
    Parses argv, runs the command and maps errors to exit codes.

    :param argv: The command arguments; sys.argv[1:] when None.
    :param env_vars: The .env settings; read from .env when None.
    :returns: 0 on success, 2 on input errors, 3 on numerical failures.
    """
    parser = build_argument_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INPUT_ERROR
    if env_vars is None:
        env_vars = dotenv_values(".env")

    try:
        settings = get_settings(env_vars)
        set_package_log_level(logging.DEBUG if args.verbose else settings.log_level)
        WORKERS[args.command](args, env_vars)
    except (InputError, FileNotFoundError, IsADirectoryError) as e:
        _LOG.error("%s: %s", type(e).__name__, e)
        return EXIT_INPUT_ERROR
    except NumericalError as e:
        _LOG.error("%s: %s", type(e).__name__, e)
        return EXIT_NUMERICAL_ERROR
    except StieltjesError as e:
        _LOG.error("%s: %s", type(e).__name__, e)
        return EXIT_INPUT_ERROR
    return EXIT_OK


def main():
    """
    Main function for the tool.
    """
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
