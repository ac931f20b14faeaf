"""
Signed Lebesgue-Stieltjes measures of intervals and integration against them.

Every interval is left-closed and right-open, [u, v): a jump of g at u is
included and a jump at v is not, so that mu_g([a, t)) = g(t) - g(a).
"""

import logging
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

from stieltjes_tools.derivator import ArrayLike, Derivator
from stieltjes_tools.errors import DomainError, InputError
from stieltjes_tools.utils import ensure_finite, get_default_logger


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)


class Integrand:
    """
    A real function of time with an optional exactness hint.

    When degree is given, integration against polynomial densities uses the
    smallest exact Gauss-Legendre order. Step integrands built with
    left_constant are integrated exactly through interval measures.
    """

    def __init__(
        self,
        func: Callable,
        degree: Optional[int] = None,
        vectorized: bool = True,
        name: Optional[str] = None,
    ):
        """
        :param func: The function; called with float arrays when vectorized.
        :param degree: Polynomial degree of func, if it is a polynomial.
        :param vectorized: False if func only accepts scalar times.
        :param name: Label used in diagnostics.
        """
        self._func = func
        self.degree = degree
        self.vectorized = vectorized
        self.name = name or getattr(func, "__name__", "f")
        self._steps = None

    @classmethod
    def constant(cls, value: float) -> "Integrand":
        value = float(value)
        return cls(
            lambda t: np.full_like(np.asarray(t, dtype=float), value),
            degree=0,
            name=f"const({value})",
        )

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "Integrand":
        """
        Polynomial in t with coefficients in ascending powers.
        """
        coefficients = [float(c) for c in coefficients]
        poly = np.polynomial.Polynomial(coefficients)
        return cls(
            lambda t: np.asarray(poly(np.asarray(t, dtype=float)), dtype=float),
            degree=max(len(coefficients) - 1, 0),
            name="poly",
        )

    @classmethod
    def left_constant(
        cls, breaks: Sequence[float], values: Sequence[float]
    ) -> "Integrand":
        """
        Step function equal to values[j] on [breaks[j], breaks[j+1]) and to
        values[-1] from the last break on.

        :param breaks: Strictly increasing left endpoints of the steps.
        :param values: One value per step.
        """
        breaks = np.asarray(breaks, dtype=float)
        values = ensure_finite(values, "step integrand values")
        if breaks.shape != values.shape or breaks.size == 0:
            raise InputError("Step integrand needs one value per break")
        if np.any(np.diff(breaks) <= 0.0):
            raise InputError("Step integrand breaks must be strictly increasing")

        def step(t):
            idx = np.searchsorted(breaks, np.asarray(t, dtype=float), side="right") - 1
            return values[np.clip(idx, 0, values.size - 1)]

        integrand = cls(step, degree=0, name="step")
        integrand._steps = (breaks, values)
        return integrand

    @property
    def steps(self):
        """
        (breaks, values) for step integrands, else None.
        """
        return self._steps

    def __call__(self, t: ArrayLike) -> Union[float, np.ndarray]:
        arr = np.asarray(t, dtype=float)
        if self.vectorized:
            out = np.broadcast_to(np.asarray(self._func(arr), dtype=float), arr.shape)
        else:
            out = np.array([float(self._func(float(x))) for x in arr.reshape(-1)])
            out = out.reshape(arr.shape)
        out = ensure_finite(out, f"integrand {self.name}")
        if arr.ndim == 0:
            return float(out)
        return out

    def abs(self) -> "Integrand":
        """
        |f|; step integrands stay exact.
        """
        if self._steps is not None:
            breaks, values = self._steps
            return Integrand.left_constant(breaks, np.abs(values))
        degree = 0 if self.degree == 0 else None
        return Integrand(
            lambda t: np.abs(self(t)), degree=degree, name=f"|{self.name}|"
        )


def as_integrand(f: Union[Integrand, Callable, float]) -> Integrand:
    """
    Wraps plain callables and numbers as integrands.
    """
    if isinstance(f, Integrand):
        return f
    if isinstance(f, (int, float)):
        return Integrand.constant(f)
    return Integrand(f)


class SignedMeasureView:
    """
    The measures mu_g, |mu_g|, mu_g+ and mu_g- of a derivator.
    """

    def __init__(self, g: Derivator):
        self.derivator = g

    @cached_property
    def variation(self) -> Derivator:
        return self.derivator.variation_derivator

    @cached_property
    def positive(self) -> Derivator:
        return self.derivator.jordan_parts[0]

    @cached_property
    def negative(self) -> Derivator:
        return self.derivator.jordan_parts[1]

    @property
    def a(self) -> float:
        return self.derivator.a

    @property
    def b(self) -> float:
        return self.derivator.b


MeasureLike = Union[SignedMeasureView, Derivator]


def as_measure(m: MeasureLike) -> SignedMeasureView:
    if isinstance(m, SignedMeasureView):
        return m
    return SignedMeasureView(m)


def _check_interval(g: Derivator, u: float, v: float):
    if not g.a <= u <= g.b or not g.a <= v <= g.b:
        raise DomainError(f"Interval [{u}, {v}) is outside [{g.a}, {g.b}]")
    if v < u:
        raise DomainError(f"Reversed interval [{u}, {v})")


def measure_interval(m: MeasureLike, u: float, v: float) -> float:
    """
    mu_g([u, v)) = g(v) - g(u).

    :param m: The measure view or its derivator.
    :param u: Left end, included.
    :param v: Right end, excluded.
    :returns: The signed measure of the interval.
    """
    g = as_measure(m).derivator
    _check_interval(g, u, v)
    if u == v:
        return 0.0
    return g.eval(v) - g.eval(u)


def variation_interval(m: MeasureLike, u: float, v: float) -> float:
    """
    |mu_g|([u, v)) = g~(v) - g~(u).
    """
    view = as_measure(m)
    _check_interval(view.derivator, u, v)
    if u == v:
        return 0.0
    return view.variation.eval(v) - view.variation.eval(u)


def _jump_part(f: Integrand, g: Derivator, u: float, v: float) -> float:
    points = g.jump_points
    inside = points[(points >= u) & (points < v)]
    if inside.size == 0:
        return 0.0
    return float(np.sum(f(inside) * g.jump_at(inside)))


def _continuous_part(f: Integrand, g: Derivator, u: float, v: float) -> float:
    bp = g.breakpoints
    first = int(np.searchsorted(bp, u, side="right")) - 1
    last = int(np.searchsorted(bp, v, side="left")) - 1
    total = 0.0
    for k in range(max(first, 0), min(last, len(g.segments) - 1) + 1):
        seg = g.segments[k]
        if seg.is_zero:
            continue
        start = float(bp[k])
        lo, hi = max(u, start), min(v, float(bp[k + 1]))
        if hi <= lo:
            continue
        total += seg.integrate(f, start, lo - start, hi - start, g.lengths[k], f.degree)
    return total


def _step_full(f: Integrand, g: Derivator, u: float, v: float) -> float:
    breaks, values = f.steps
    # The first step also covers times before breaks[0].
    inner = breaks[1:]
    left = np.clip(np.concatenate(([u], inner)), u, v)
    right = np.clip(np.concatenate((inner, [v])), u, v)
    used = right > left
    if not np.any(used):
        return 0.0
    increments = g.eval(right[used]) - g.eval(left[used])
    return float(np.sum(values[used] * increments))


def _integrate(
    f: Integrand, g: Derivator, u: float, v: float, jumps: bool, continuous: bool
) -> float:
    if u == v:
        return 0.0
    if f.steps is not None:
        full = _step_full(f, g, u, v)
        if jumps and continuous:
            return full
        jump = _jump_part(f, g, u, v)
        return jump if jumps else full - jump
    total = 0.0
    if jumps:
        total += _jump_part(f, g, u, v)
    if continuous:
        total += _continuous_part(f, g, u, v)
    return total


def integrate(
    f: Union[Integrand, Callable, float], m: MeasureLike, u: float, v: float
) -> float:
    """
    Integral of f against mu_g over [u, v): the jump sum of f(s) times the jump
    at s for s in [u, v), plus the density part by per-segment quadrature.

    :param f: The integrand.
    :param m: The measure view or its derivator.
    :param u: Left end, included.
    :param v: Right end, excluded.
    :returns: The integral.
    """
    g = as_measure(m).derivator
    _check_interval(g, u, v)
    return _integrate(as_integrand(f), g, u, v, jumps=True, continuous=True)


def integrate_continuous(
    f: Union[Integrand, Callable, float], m: MeasureLike, u: float, v: float
) -> float:
    """
    Integral over [u, v) minus the jump set, i.e. the density part only.
    """
    g = as_measure(m).derivator
    _check_interval(g, u, v)
    return _integrate(as_integrand(f), g, u, v, jumps=False, continuous=True)


def integrate_abs(
    f: Union[Integrand, Callable, float], m: MeasureLike, u: float, v: float
) -> float:
    """
    Integral of f against the total variation measure |mu_g| over [u, v).
    """
    view = as_measure(m)
    _check_interval(view.derivator, u, v)
    return _integrate(as_integrand(f), view.variation, u, v, jumps=True, continuous=True)


def l1_norm(f: Union[Integrand, Callable, float], m: MeasureLike) -> float:
    """
    The L1_g norm of f over [a, b).
    """
    view = as_measure(m)
    return integrate_abs(as_integrand(f).abs(), view, view.a, view.b)


def riemann_stieltjes_sum(
    f: Union[Integrand, Callable], g: Derivator, partition: Sequence[float]
) -> float:
    """
    Left-endpoint Riemann-Stieltjes sum of f against g over a partition.
    """
    points = np.asarray(partition, dtype=float)
    if points.size < 2 or np.any(np.diff(points) <= 0.0):
        raise InputError("A partition needs at least two increasing points")
    values = as_integrand(f)(points[:-1])
    return float(np.sum(values * np.diff(g.eval(points))))


def cumulative_step_integral(
    values: np.ndarray, g: Derivator, grid: np.ndarray
) -> np.ndarray:
    """
    Integrals over [s_0, s_k) of the left-constant interpolant of values on
    the grid, for every node s_k.

    :param values: Values at the grid nodes; values[k] holds on [s_k, s_{k+1}).
    :param g: The derivator.
    :param grid: Increasing nodes within the derivator domain.
    :returns: Array of the same length as grid, starting at 0.
    """
    increments = np.diff(g.eval(grid))
    weighted = np.asarray(values, dtype=float)[: increments.size] * increments
    return np.concatenate(([0.0], np.cumsum(weighted)))
