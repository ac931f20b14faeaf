"""
The g-exponential e_h(t; a) for bounded-variation derivators.

Two independent evaluations are provided: the product form (jump factors
times the exponential of the continuous-part integral) and the h-bar form,
which moves the jump factors into a logarithmic integrand and tracks the
sign flips separately.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np

from stieltjes_tools.derivator import ArrayLike, Derivator
from stieltjes_tools.errors import DomainError
from stieltjes_tools.ls_measure import (
    Integrand,
    _integrate,
    as_integrand,
)
from stieltjes_tools.utils import get_default_logger


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)

# |1 + h * jump| <= ZERO_FACTOR_RTOL * (1 + |h * jump|) counts as an exact zero.
ZERO_FACTOR_RTOL = 1e-14

HLike = Union[Integrand, Callable, float]


@dataclass(frozen=True, eq=False)
class ExpDecomposition:
    """
    Classification of the jumps of g by the sign of 1 + h(t) jump(t).
    """

    derivator: Derivator
    h: Integrand
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    factors: np.ndarray
    T_minus: np.ndarray
    T_N: np.ndarray
    T_zero: np.ndarray
    tau0: float
    sign_breaks: Tuple[float, ...]

    @property
    def kappa(self) -> int:
        """
        Number of sign flips before tau0.
        """
        return len(self.sign_breaks) - 1

    def hbar(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """
        h off D_g; log|1 + h jump| / jump on D_g before tau0; 0 on D_g from tau0.
        """
        arr = np.asarray(t, dtype=float)
        values = np.array(self.h(arr), dtype=float, ndmin=1).reshape(-1)
        flat = arr.reshape(-1)
        if self.jump_times.size:
            idx = np.clip(np.searchsorted(self.jump_times, flat), 0, self.jump_times.size - 1)
            on_jump = self.jump_times[idx] == flat
            before = on_jump & (flat < self.tau0)
            with np.errstate(divide="ignore"):
                logs = np.log(np.abs(self.factors[idx])) / self.jump_sizes[idx]
            values = np.where(before, logs, values)
            values = np.where(on_jump & ~before, 0.0, values)
        if arr.ndim == 0:
            return float(values[0])
        return values.reshape(arr.shape)


def classify_jumps(h: HLike, g: Derivator) -> ExpDecomposition:
    """
    Splits D_g into T_minus (1 + h jump <= 0), T_N (< 0) and T_zero (= 0).

    :param h: The coefficient function.
    :param g: The derivator.
    :returns: The decomposition, with tau0 = min T_zero or b.
    """
    h = as_integrand(h)
    times = g.jump_points
    sizes = np.asarray(g.jump_at(times), dtype=float)
    if times.size:
        products = np.asarray(h(times), dtype=float) * sizes
    else:
        products = np.zeros(0)
    raw = 1.0 + products
    zero = np.abs(raw) <= ZERO_FACTOR_RTOL * (1.0 + np.abs(products))
    negative = (raw < 0.0) & ~zero
    t_zero = times[zero]
    tau0 = float(t_zero[0]) if t_zero.size else g.b
    t_n = times[negative]
    sign_breaks = tuple(float(t) for t in t_n[t_n < tau0]) + (tau0,)
    _LOG.debug(
        "Jump classification: %d negative, %d zero, tau0 = %g",
        t_n.size,
        t_zero.size,
        tau0,
    )
    return ExpDecomposition(
        derivator=g,
        h=h,
        jump_times=times,
        jump_sizes=sizes,
        factors=np.where(zero, 0.0, raw),
        T_minus=times[zero | negative],
        T_N=t_n,
        T_zero=t_zero,
        tau0=tau0,
        sign_breaks=sign_breaks,
    )


def _check_time(g: Derivator, t: float):
    if not g.a <= t <= g.b:
        raise DomainError(f"t = {t} is outside [{g.a}, {g.b}]")


def g_exp(h: HLike, g: Derivator, t: float) -> float:
    """
    e_h(t; a): the product of 1 + h(s) jump(s) over jumps s in [a, t) times the
    exponential of the integral of h over [a, t) minus D_g.
    """
    _check_time(g, t)
    decomposition = classify_jumps(h, g)
    before = decomposition.jump_times < t
    product = float(np.prod(decomposition.factors[before]))
    if product == 0.0:
        return 0.0
    continuous = _integrate(decomposition.h, g, g.a, t, jumps=False, continuous=True)
    return product * math.exp(continuous)


def g_exp_via_hbar(h: HLike, g: Derivator, t: float) -> float:
    """
    e_h(t; a) as (-1)^i exp(integral of h-bar over [a, t)) on (t_i, t_{i+1}],
    and 0 past tau0.
    """
    _check_time(g, t)
    decomposition = classify_jumps(h, g)
    if t > decomposition.tau0:
        return 0.0
    flips = sum(1 for s in decomposition.sign_breaks[:-1] if s < t)
    exponent = _integrate(decomposition.h, g, g.a, t, jumps=False, continuous=True)
    exponent += _hbar_jump_integral(decomposition, g.a, t)
    return (-1.0) ** flips * math.exp(exponent)


def _hbar_jump_integral(decomposition: ExpDecomposition, u: float, v: float) -> float:
    times = decomposition.jump_times
    inside = (times >= u) & (times < v) & (times < decomposition.tau0)
    if not np.any(inside):
        return 0.0
    return float(np.sum(np.log(np.abs(decomposition.factors[inside]))))


def hbar_integrand(decomposition: ExpDecomposition) -> Integrand:
    """
    h-bar as an integrand usable with ls_measure.
    """
    return Integrand(decomposition.hbar, degree=None, name="hbar")


def hbar_jump_integral(decomposition: ExpDecomposition) -> float:
    """
    The jump part of the integral of h-bar over [a, b): the sum of
    h-bar(s) jump(s) over s in D_g.
    """
    g = decomposition.derivator
    return _integrate(hbar_integrand(decomposition), g, g.a, g.b, jumps=True, continuous=False)


def log_abs_sum(decomposition: ExpDecomposition) -> float:
    """
    Sum over D_g of |log|1 + h jump||; infinite when a factor vanishes.
    """
    if decomposition.T_zero.size:
        return math.inf
    return float(np.sum(np.abs(np.log(np.abs(decomposition.factors)))))


def g_exp_on_grid(h: HLike, g: Derivator, grid: ArrayLike) -> np.ndarray:
    """
    e_h on an increasing grid, accumulating cell-wise jump products and
    continuous integrals.

    :param h: The coefficient function.
    :param g: The derivator.
    :param grid: Increasing times in [a, b]; need not start at a.
    :returns: e_h(grid).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        return np.zeros(0)
    _check_time(g, float(grid[0]))
    _check_time(g, float(grid[-1]))
    decomposition = classify_jumps(h, g)
    edges = np.concatenate(([g.a], grid))
    times = decomposition.jump_times
    cell_products = np.ones(grid.size)
    cell_integrals = np.zeros(grid.size)
    for k, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        if hi <= lo:
            continue
        inside = (times >= lo) & (times < hi)
        if np.any(inside):
            cell_products[k] = float(np.prod(decomposition.factors[inside]))
        cell_integrals[k] = _integrate(
            decomposition.h, g, float(lo), float(hi), jumps=False, continuous=True
        )
    return np.cumprod(cell_products) * np.exp(np.cumsum(cell_integrals))


def linear_solution(x0: float, h: HLike, g: Derivator, t: float) -> float:
    """
    The solution x0 e_h(t; a) of x'_g = h x, x(a) = x0.
    """
    if x0 == 0.0:
        _check_time(g, t)
        return 0.0
    return x0 * g_exp(h, g, t)
