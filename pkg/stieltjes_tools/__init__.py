"""
stieltjes_tools

Stieltjes differential equations toolkit and a PV/battery thermal stress simulator
"""

from stieltjes_tools.derivator import Derivator, PointTag, sum_derivators

from stieltjes_tools.g_exponential import classify_jumps, g_exp, g_exp_via_hbar

from stieltjes_tools.ls_measure import Integrand, integrate

from stieltjes_tools.pv_thermal_model import summer_scenario, simulate

from stieltjes_tools.stieltjes_solver import StieltjesIVP, euler_solve, picard_solve

__all__ = [
    "Derivator",
    "PointTag",
    "sum_derivators",
    "classify_jumps",
    "g_exp",
    "g_exp_via_hbar",
    "Integrand",
    "integrate",
    "summer_scenario",
    "simulate",
    "StieltjesIVP",
    "euler_solve",
    "picard_solve",
]
