"""
Numerical Stieltjes derivatives, the two chain rules and FTC checks.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Union

import numpy as np

from stieltjes_tools.derivator import (
    ArrayLike,
    Derivator,
    PointTag,
    gauss_legendre,
)
from stieltjes_tools.errors import (
    DegenerateDenominator,
    MissingDerivativeOracle,
    NonConvergence,
)
from stieltjes_tools.ls_measure import Integrand, _integrate, as_integrand
from stieltjes_tools.utils import ensure_finite, get_default_logger


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)

# Difference-quotient window schedule: w_k = w_0 * 2^-k with w_0 = (b - a) / 16.
WINDOW_LEVELS = 40
POINTS_PER_SIDE = 8
_INITIAL_WINDOW_DIVISOR = 16.0

CHAIN_RULE_ORDER = 16


class DerivativeMethod(Enum):
    JUMP_QUOTIENT = "jump_quotient"
    LIMIT_QUOTIENT = "limit_quotient"


@dataclass(frozen=True)
class GDerivativeResult:
    """
    A g-derivative value with the diagnostics of how it was obtained.
    """

    value: float
    method: DerivativeMethod
    window: float
    achieved_spread: float


def window_schedule(g: Derivator) -> np.ndarray:
    """
    The half-widths tried by the limit quotient, largest first.
    """
    w0 = (g.b - g.a) / _INITIAL_WINDOW_DIVISOR
    return w0 * 0.5 ** np.arange(WINDOW_LEVELS)


def _values(f: Callable, s: np.ndarray) -> np.ndarray:
    if getattr(f, "vectorized", False):
        return np.asarray(f(s), dtype=float).reshape(s.shape)
    return np.array([float(f(float(x))) for x in s])


def right_limit(f: Callable, t: float, g: Derivator) -> float:
    """
    f(t+), exact when f has a right_limit method, else extrapolated linearly
    from f(t + eps) and f(t + 2 eps) with eps the smallest window.
    """
    if hasattr(f, "right_limit"):
        return float(f.right_limit(t))
    eps = float(window_schedule(g)[-1])
    near, far = _values(f, np.array([t + eps, t + 2.0 * eps]))
    return 2.0 * near - far


def g_derivative(
    f: Callable, g: Derivator, t: float, tol: float = 1e-6
) -> GDerivativeResult:
    """
    Stieltjes derivative of f with respect to g at t.

    At t* in D_g this is the jump quotient (f(t*+) - f(t*)) / jump(t*). Elsewhere
    the quotients (f(s) - f(t*)) / (g(s) - g(t*)) are sampled on shrinking
    windows until their spread drops below tol; the median of the final
    samples is returned.

    :param f: Callable of time; may provide right_limit(t) and a vectorized flag.
    :param g: The derivator.
    :param t: The time in [a, b].
    :param tol: Required spread of the quotients.
    :returns: The derivative value and diagnostics.
    """
    star = g.classify_point(t).star
    if star < g.b and g.jump_at(star) != 0.0:
        jump = float(g.jump_at(star))
        value = (right_limit(f, star, g) - float(_values(f, np.array([star]))[0])) / jump
        return GDerivativeResult(value, DerivativeMethod.JUMP_QUOTIENT, 0.0, 0.0)

    tag = g.classify_point(star).tag
    use_right = tag != PointTag.NG_MINUS
    use_left = tag != PointTag.NG_PLUS
    g_star = g.eval(star)
    f_star = float(_values(f, np.array([star]))[0])
    fractions = np.arange(1, POINTS_PER_SIDE + 1) / POINTS_PER_SIDE
    saw_samples = False
    spread = np.inf
    for level, w in enumerate(window_schedule(g)):
        sides = []
        if use_right:
            sides.append(star + w * fractions)
        if use_left:
            sides.append(star - w * fractions)
        s = np.concatenate(sides)
        s = s[(s >= g.a) & (s <= g.b) & (s != star)]
        if s.size == 0:
            continue
        dg = g.eval(s) - g_star
        keep = dg != 0.0
        if not np.any(keep):
            continue
        saw_samples = True
        quotients = (_values(f, s[keep]) - f_star) / dg[keep]
        spread = float(np.max(quotients) - np.min(quotients))
        if spread < tol:
            _LOG.debug("g-derivative at %g converged at level %d", t, level)
            return GDerivativeResult(
                float(np.median(quotients)),
                DerivativeMethod.LIMIT_QUOTIENT,
                float(w),
                spread,
            )
    if not saw_samples:
        raise DegenerateDenominator(
            f"g(s) = g(t*) for every sample around t* = {star}"
        )
    raise NonConvergence(
        f"Difference quotients at t = {t} kept a spread of {spread:g} >= {tol:g}"
    )


def chain_rule_explicit(
    fg: float,
    f_star: float,
    jump: float,
    hprime: Callable[[float], float],
    order: int = CHAIN_RULE_ORDER,
) -> float:
    """
    (h o f)'_g(t) = f'_g(t) * int_0^1 h'(f(t*) + r f'_g(t) jump(t*)) dr.

    :param fg: f'_g(t).
    :param f_star: f(t*).
    :param jump: The jump of g at t*, 0 off D_g.
    :param hprime: Derivative of h.
    :param order: Gauss-Legendre order of the inner integral.
    :returns: The derivative of h o f.
    """
    if jump == 0.0:
        return float(ensure_finite(hprime(f_star), "h'")) * fg
    nodes, weights = gauss_legendre(order)
    r = 0.5 * (nodes + 1.0)
    samples = ensure_finite(
        [hprime(f_star + x * fg * jump) for x in r], "h' on the jump segment"
    )
    return fg * float(np.dot(0.5 * weights, samples))


def chain_rule_implicit(
    f_star: float,
    f_star_right: float,
    fg: float,
    h: Callable[[float], float],
    hprime: Optional[Callable[[float], float]] = None,
) -> float:
    """
    (h o f)'_g(t) as a difference quotient of h between f(t*) and f(t*+),
    or h'(f(t*)) f'_g(t) when the two values coincide.
    """
    if f_star_right == f_star:
        if hprime is None:
            raise MissingDerivativeOracle(
                "f(t*+) = f(t*) requires the derivative of h at f(t*)"
            )
        return float(hprime(f_star)) * fg
    return (float(h(f_star_right)) - float(h(f_star))) / (f_star_right - f_star) * fg


class Primitive:
    """
    F(t) = integral of f against mu_g over [a, t), with exact right limits.
    """

    vectorized = True

    def __init__(self, f: Union[Integrand, Callable, float], g: Derivator):
        self.integrand = as_integrand(f)
        self.derivator = g
        bp = g.breakpoints
        pieces = [
            _integrate(self.integrand, g, float(lo), float(hi), True, True)
            for lo, hi in zip(bp[:-1], bp[1:])
        ]
        self._at_breakpoints = np.concatenate(([0.0], np.cumsum(pieces)))

    def _scalar(self, t: float) -> float:
        g = self.derivator
        node = int(np.searchsorted(g.breakpoints, t))
        if node < g.breakpoints.size and g.breakpoints[node] == t:
            return float(self._at_breakpoints[node])
        k = g.segment_index(t)
        start = float(g.breakpoints[k])
        return float(self._at_breakpoints[k]) + _integrate(
            self.integrand, g, start, t, True, True
        )

    def __call__(self, t: ArrayLike):
        arr = np.asarray(t, dtype=float)
        self.derivator.eval(arr)  # domain check
        out = np.array([self._scalar(float(x)) for x in arr.reshape(-1)])
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def right_limit(self, t: float) -> float:
        """
        F(t+) = F(t) + f(t) jump(t).
        """
        jump = self.derivator.jump_at(t)
        value = self(t)
        if jump == 0.0:
            return value
        return value + float(self.integrand(t)) * jump


def ftc_residual(
    f: Union[Integrand, Callable, float],
    g: Derivator,
    probes: Iterable[float],
    tol: float = 1e-6,
) -> float:
    """
    Max over probes of |F'_g(t) - f(t*)| with F the primitive of f.
    Probes where the quotient denominator degenerates are skipped.
    """
    integrand = as_integrand(f)
    primitive = Primitive(integrand, g)
    worst = 0.0
    skipped = 0
    for t in probes:
        try:
            result = g_derivative(primitive, g, float(t), tol)
        except DegenerateDenominator:
            skipped += 1
            continue
        star = g.classify_point(float(t)).star
        worst = max(worst, abs(result.value - float(integrand(star))))
    if skipped:
        _LOG.debug("Skipped %d probes with degenerate denominators", skipped)
    return worst


def is_g_continuous_at(
    f: Callable,
    g: Derivator,
    t: float,
    tol: float = 1e-6,
    delta: Optional[float] = None,
) -> bool:
    """
    Heuristic g-continuity check: |f(s) - f(t)| <= tol for sampled s whose
    g-distance |g~(s) - g~(t)| is below delta.

    Points across an adjacent constancy component are at distance zero and
    are always sampled.
    """
    tilde = g.variation_derivator
    if delta is None:
        delta = 1e-3 * tol / g.scale()
    fractions = np.arange(1, POINTS_PER_SIDE + 1) / POINTS_PER_SIDE
    windows = window_schedule(g)
    offsets = np.outer(windows, fractions).ravel()
    candidates = [t + offsets, t - offsets]
    for lo, hi in g.constancy_components:
        if lo <= t <= hi:
            candidates.append(np.linspace(lo, hi, 4 * POINTS_PER_SIDE + 1))
    s = np.concatenate(candidates)
    s = s[(s >= g.a) & (s <= g.b)]
    near = s[np.abs(tilde.eval(s) - tilde.eval(t)) < delta]
    if near.size == 0:
        return True
    f_t = float(_values(f, np.array([t]))[0])
    return bool(np.max(np.abs(_values(f, near) - f_t)) <= tol)
