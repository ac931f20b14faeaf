"""
Solvers for systems x'_g = f(t, x) with one derivator per state component.

euler_solve applies the left-endpoint update
x_i(s_{k+1}) = x_i(s_k) + f_i(s_k, x(s_k)) * (g_i(s_{k+1}) - g_i(s_k)) on a
grid that contains every jump point; picard_solve iterates the integral
operator on the same kind of grid.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from stieltjes_tools.derivator import Derivator, sum_derivators
from stieltjes_tools.errors import (
    DomainError,
    GridMismatch,
    GuardViolation,
    InputError,
    NoConvergence,
    NonFiniteState,
)
from stieltjes_tools.g_exponential import g_exp_on_grid
from stieltjes_tools.ls_measure import Integrand, cumulative_step_integral
from stieltjes_tools.utils import get_default_logger, write_frame_csv


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)

# Tolerance for deciding that the step divides the horizon.
_STEP_DIVIDES_RTOL = 1e-9

# Grid nodes closer than this fraction of T to a jump are moved onto the jump.
_JUMP_SNAP_RTOL = 1e-12

Rhs = Callable[[float, np.ndarray], np.ndarray]
Bound = Union[float, Callable[[np.ndarray], float]]


class GuardPolicy(Enum):
    CLAMP = "clamp"
    REJECT = "reject"


@dataclass(frozen=True)
class Guard:
    """
    Admissible interval for one state component.

    lower and upper are fixed bounds; lower_fn and upper_fn compute bounds from
    the whole state and are evaluated on a state whose fixed bounds hold.
    """

    lower: float = -math.inf
    upper: float = math.inf
    policy: GuardPolicy = GuardPolicy.CLAMP
    tolerance: float = 0.0
    lower_fn: Optional[Callable[[np.ndarray], float]] = None
    upper_fn: Optional[Callable[[np.ndarray], float]] = None


@dataclass(frozen=True, eq=False)
class StieltjesIVP:
    """
    x_i'_{g_i} = rhs_i(t, x), x(t0) = x0, with optional guards per component.
    """

    derivators: Tuple[Derivator, ...]
    rhs: Rhs
    x0: np.ndarray
    guards: Tuple[Optional[Guard], ...] = ()

    def __post_init__(self):
        derivators = tuple(self.derivators)
        if not derivators:
            raise InputError("An IVP needs at least one derivator")
        a, b = derivators[0].a, derivators[0].b
        for g in derivators[1:]:
            if g.a != a or g.b != b:
                raise DomainError(
                    f"Derivators must share a domain: [{a}, {b}] vs [{g.a}, {g.b}]"
                )
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if x0.size != len(derivators):
            raise InputError(
                f"x0 has {x0.size} components for {len(derivators)} derivators"
            )
        if not np.all(np.isfinite(x0)):
            raise NonFiniteState("Non-finite initial state")
        guards = tuple(self.guards)
        if guards and len(guards) != len(derivators):
            raise InputError("Provide one guard (or None) per component")
        x0.setflags(write=False)
        object.__setattr__(self, "derivators", derivators)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "guards", guards or (None,) * len(derivators))

    @property
    def dimension(self) -> int:
        return len(self.derivators)

    @property
    def t0(self) -> float:
        return self.derivators[0].a

    @property
    def t_end(self) -> float:
        return self.derivators[0].b

    @property
    def horizon(self) -> float:
        return self.t_end - self.t0

    def jump_points(self) -> np.ndarray:
        """
        Union of the jump sets of all derivators.
        """
        return np.unique(np.concatenate([g.jump_points for g in self.derivators]))


@dataclass(eq=False)
class Trajectory:
    """
    Grid-sampled solution with the right-limit states at jump nodes.
    """

    grid: np.ndarray
    states: np.ndarray
    post_jump_states: Dict[int, np.ndarray] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def column_names(self, names: Optional[Sequence[str]] = None) -> List[str]:
        if names is not None:
            return list(names)
        return [f"x{i + 1}" for i in range(self.states.shape[1])]

    def to_frame(self, names: Optional[Sequence[str]] = None) -> pd.DataFrame:
        """
        One row per grid node, each post-jump state as an extra row right after
        its node with post_jump set.
        """
        columns = self.column_names(names)
        rows = []
        for k, t in enumerate(self.grid):
            rows.append([float(t), *self.states[k].tolist(), False])
            if k in self.post_jump_states:
                rows.append([float(t), *self.post_jump_states[k].tolist(), True])
        return pd.DataFrame(rows, columns=["time", *columns, "post_jump"])


def write_trajectory_csv(
    trajectory: Trajectory, path: str, names: Optional[Sequence[str]] = None
):
    write_frame_csv(trajectory.to_frame(names), path)


@dataclass(frozen=True)
class PicardReport:
    """
    Diagnostics of a Picard run.

    contraction_estimates are ratios of successive sup-norm updates;
    weighted_ratios are the same ratios in the Bielecki norm with weight
    e_L(t; t0) against the sum of the variation functions.
    """

    iterations: int
    final_delta: float
    deltas: Tuple[float, ...]
    contraction_estimates: Tuple[float, ...]
    lipschitz_estimate: float
    bielecki_weight: str
    weighted_ratios: Tuple[float, ...]
    suggest_weighted_norm: bool


def build_grid(ivp: StieltjesIVP, step: float) -> np.ndarray:
    """
    Uniform grid at the given step merged with all jump points.

    :param ivp: The problem.
    :param step: The nominal step, in the derivators' time unit.
    :returns: Strictly increasing nodes from t0 to t0 + T.
    """
    if not step > 0.0 or not math.isfinite(step):
        raise InputError(f"The step must be positive, got {step}")
    t0, t1 = ivp.t0, ivp.t_end
    horizon = t1 - t0
    count = horizon / step
    nearest = round(count)
    if nearest >= 1 and abs(count - nearest) <= _STEP_DIVIDES_RTOL * max(1.0, count):
        grid = np.linspace(t0, t1, nearest + 1)
    else:
        grid = t0 + step * np.arange(math.ceil(count))
        grid = np.append(grid[grid < t1], t1)
    jumps = ivp.jump_points()
    if jumps.size:
        snap = _JUMP_SNAP_RTOL * horizon
        idx = np.clip(np.searchsorted(grid, jumps), 1, grid.size - 1)
        for j, jump in zip(idx, jumps):
            for k in (j - 1, j):
                if abs(grid[k] - jump) <= snap and k != grid.size - 1:
                    grid[k] = jump
        grid = np.unique(np.concatenate((grid, jumps)))
    return grid


def _guard_value(
    guard: Guard, i: int, value: float, lo: float, hi: float, t: float
) -> float:
    if lo <= value <= hi:
        return value
    if guard.policy == GuardPolicy.REJECT and (
        value < lo - guard.tolerance or value > hi + guard.tolerance
    ):
        raise GuardViolation(f"Component {i + 1} left [{lo}, {hi}] at t = {t}: {value}")
    # lo wins when the interval is empty.
    return max(min(value, hi), lo)


def apply_guards(
    guards: Sequence[Optional[Guard]], state: np.ndarray, t: float
) -> Tuple[np.ndarray, int]:
    """
    Applies the fixed bounds of every component, then the state-dependent
    bounds evaluated on the state with fixed bounds already enforced.

    :returns: The guarded state and the number of clamped components.
    """
    x = state.copy()
    changed = np.zeros(x.size, dtype=bool)
    for i, guard in enumerate(guards):
        if guard is None:
            continue
        value = _guard_value(guard, i, x[i], guard.lower, guard.upper, t)
        changed[i] = value != x[i]
        x[i] = value
    fixed = x.copy()
    for i, guard in enumerate(guards):
        if guard is None or (guard.lower_fn is None and guard.upper_fn is None):
            continue
        lo, hi = guard.lower, guard.upper
        if guard.lower_fn is not None:
            lo = max(lo, guard.lower_fn(fixed))
        if guard.upper_fn is not None:
            hi = min(hi, guard.upper_fn(fixed))
        value = _guard_value(guard, i, x[i], lo, hi, t)
        changed[i] |= value != x[i]
        x[i] = value
    return x, int(changed.sum())


def _rate(ivp: StieltjesIVP, t: float, x: np.ndarray) -> np.ndarray:
    rate = np.asarray(ivp.rhs(t, x.copy()), dtype=float).reshape(-1)
    if rate.size != ivp.dimension:
        raise InputError(
            f"rhs returned {rate.size} rates for a {ivp.dimension}-dimensional system"
        )
    if not np.all(np.isfinite(rate)):
        raise NonFiniteState(f"rhs returned a non-finite rate at t = {t}")
    return rate


def _jump_matrix(ivp: StieltjesIVP, grid: np.ndarray) -> np.ndarray:
    return np.stack([np.asarray(g.jump_at(grid), dtype=float) for g in ivp.derivators])


def _post_jump_states(
    ivp: StieltjesIVP, grid: np.ndarray, states: np.ndarray, jumps: np.ndarray
) -> Dict[int, np.ndarray]:
    post = {}
    for k in np.flatnonzero(np.any(jumps != 0.0, axis=0)):
        rate = _rate(ivp, float(grid[k]), states[k])
        post[int(k)] = states[k] + rate * jumps[:, k]
    return post


def euler_solve(ivp: StieltjesIVP, step: float) -> Trajectory:
    """
    Stieltjes-Euler scheme with left-endpoint rates.

    The increment across a jump node s_k includes the jump because
    g_i(s_{k+1}) - g_i(s_k) measures [s_k, s_{k+1}).

    :param ivp: The problem.
    :param step: The nominal grid step.
    :returns: The trajectory on the merged grid.
    """
    grid = build_grid(ivp, step)
    increments = np.diff(np.stack([g.eval(grid) for g in ivp.derivators]), axis=1)
    jumps = _jump_matrix(ivp, grid)
    states = np.empty((grid.size, ivp.dimension))
    x = np.array(ivp.x0, dtype=float)
    states[0] = x
    post = {}
    clamped = 0
    for k in range(grid.size - 1):
        rate = _rate(ivp, float(grid[k]), x)
        if np.any(jumps[:, k] != 0.0):
            post[k] = x + rate * jumps[:, k]
        x = x + rate * increments[:, k]
        x, count = apply_guards(ivp.guards, x, float(grid[k + 1]))
        clamped += count
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"Non-finite state at t = {grid[k + 1]}")
        states[k + 1] = x
    if clamped:
        _LOG.warning("Guards clamped %d component updates", clamped)
    steps = np.diff(grid)
    _LOG.debug("Euler run on %d nodes", grid.size)
    return Trajectory(
        grid=grid,
        states=states,
        post_jump_states=post,
        meta={
            "scheme": "euler",
            "nominal_step": step,
            "nodes": int(grid.size),
            "min_step": float(steps.min()) if steps.size else 0.0,
            "max_step": float(steps.max()) if steps.size else 0.0,
            "clamped": clamped,
        },
    )


def lipschitz_probe(
    rhs: Rhs,
    region: Sequence[Tuple[float, float]],
    samples: int = 256,
    seed: int = 0,
    t_span: Optional[Tuple[float, float]] = None,
) -> float:
    """
    Sampled lower estimate of the Lipschitz constant of rhs in the state.

    :param rhs: The right-hand side (t, x) -> rate.
    :param region: (low, high) bounds per state component.
    :param samples: Number of sampled (t, u, v) triples.
    :param seed: Seed of the numpy generator.
    :param t_span: Time range to sample; t = 0 when omitted.
    :returns: max ||rhs(t, u) - rhs(t, v)||_inf / ||u - v||_inf.
    """
    if samples < 2:
        raise InputError("lipschitz_probe needs at least two samples")
    box = np.asarray(region, dtype=float).reshape(-1, 2)
    rng = np.random.default_rng(seed)
    low, high = box[:, 0], box[:, 1]
    best = 0.0
    for _ in range(samples):
        t = float(rng.uniform(*t_span)) if t_span is not None else 0.0
        u = rng.uniform(low, high)
        v = rng.uniform(low, high)
        distance = float(np.max(np.abs(u - v)))
        if distance == 0.0:
            continue
        change = np.asarray(rhs(t, u), dtype=float) - np.asarray(rhs(t, v), dtype=float)
        best = max(best, float(np.max(np.abs(change))) / distance)
    return best


def _bielecki_weight(ivp: StieltjesIVP, grid: np.ndarray, lipschitz: float) -> np.ndarray:
    ghat = sum_derivators([g.variation_derivator for g in ivp.derivators])
    return g_exp_on_grid(Integrand.constant(lipschitz), ghat, grid)


def picard_solve(
    ivp: StieltjesIVP,
    tol: float = 1e-10,
    max_iter: int = 100,
    grid_step: float = 0.01,
    probe_samples: int = 256,
    seed: int = 0,
) -> Tuple[Trajectory, PicardReport]:
    """
    Picard iteration x^{n+1}(t) = x0 + integral of f(s, x^n(s)) over [t0, t)
    against mu_{g_i}, on a fixed grid with left-constant interpolants.

    :param ivp: The problem.
    :param tol: Stop when the sup-norm update drops below tol.
    :param max_iter: Iteration limit.
    :param grid_step: Nominal grid step.
    :param probe_samples: Samples for the Lipschitz estimate in the report.
    :param seed: Seed of the Lipschitz probe.
    :returns: The final iterate and the report.
    """
    if not tol > 0.0:
        raise InputError("tol must be positive")
    if max_iter < 1:
        raise InputError("max_iter must be at least 1")
    grid = build_grid(ivp, grid_step)
    current = np.tile(ivp.x0, (grid.size, 1))
    updates: List[np.ndarray] = []
    deltas: List[float] = []
    for iteration in range(1, max_iter + 1):
        rates = np.stack(
            [_rate(ivp, float(grid[k]), current[k]) for k in range(grid.size)]
        )
        integrals = np.column_stack(
            [
                cumulative_step_integral(rates[:, i], g, grid)
                for i, g in enumerate(ivp.derivators)
            ]
        )
        following = ivp.x0 + integrals
        for k in range(grid.size):
            following[k], _ = apply_guards(ivp.guards, following[k], float(grid[k]))
        if not np.all(np.isfinite(following)):
            raise NonFiniteState(f"Non-finite Picard iterate at iteration {iteration}")
        update = following - current
        delta = float(np.max(np.abs(update)))
        updates.append(update)
        deltas.append(delta)
        current = following
        _LOG.debug("Picard iteration %d: delta %g", iteration, delta)
        if delta < tol:
            break
    else:
        raise NoConvergence(
            f"Picard iteration stopped after {max_iter} iterations with delta {deltas[-1]:g}"
        )

    ratios = tuple(
        later / earlier if earlier > 0.0 else 0.0
        for earlier, later in zip(deltas[:-1], deltas[1:])
    )
    region = [
        (float(lo) - 1.0, float(hi) + 1.0)
        for lo, hi in zip(current.min(axis=0), current.max(axis=0))
    ]
    lipschitz = lipschitz_probe(
        ivp.rhs, region, samples=probe_samples, seed=seed, t_span=(ivp.t0, ivp.t_end)
    )
    weight = _bielecki_weight(ivp, grid, lipschitz)
    weighted = [float(np.max(np.abs(update) / weight[:, None])) for update in updates]
    weighted_ratios = tuple(
        later / earlier if earlier > 0.0 else 0.0
        for earlier, later in zip(weighted[:-1], weighted[1:])
    )
    total_variation = sum(g.total_variation() for g in ivp.derivators)
    report = PicardReport(
        iterations=len(deltas),
        final_delta=deltas[-1],
        deltas=tuple(deltas),
        contraction_estimates=ratios,
        lipschitz_estimate=lipschitz,
        bielecki_weight=f"e_L(t; {ivp.t0}) against the summed variation, L = {lipschitz:g}",
        weighted_ratios=weighted_ratios,
        suggest_weighted_norm=bool(
            lipschitz * total_variation >= 1.0 or any(r > 1.0 for r in ratios)
        ),
    )
    jumps = _jump_matrix(ivp, grid)
    trajectory = Trajectory(
        grid=grid,
        states=current,
        post_jump_states=_post_jump_states(ivp, grid, current, jumps),
        meta={"scheme": "picard", "nominal_step": grid_step, "nodes": int(grid.size)},
    )
    return trajectory, report


def residual(trajectory: Trajectory, ivp: StieltjesIVP) -> float:
    """
    Max over nodes and components of |x_i(s_k) - x0_i - integral over
    [t0, s_k) of f_i(s, x_hat(s)) against mu_{g_i}|, x_hat the left-constant
    interpolant of the trajectory.
    """
    grid = np.asarray(trajectory.grid, dtype=float)
    states = np.asarray(trajectory.states, dtype=float)
    if states.shape != (grid.size, ivp.dimension):
        raise GridMismatch(
            f"Trajectory states have shape {states.shape}, expected "
            f"({grid.size}, {ivp.dimension})"
        )
    if grid[0] != ivp.t0 or grid[-1] != ivp.t_end:
        raise GridMismatch("Trajectory grid does not span the IVP domain")
    if not np.all(np.isin(ivp.jump_points(), grid)):
        raise GridMismatch("Trajectory grid misses jump points of the IVP")
    rates = np.stack([_rate(ivp, float(t), states[k]) for k, t in enumerate(grid)])
    worst = 0.0
    for i, g in enumerate(ivp.derivators):
        integral = cumulative_step_integral(rates[:, i], g, grid)
        worst = max(worst, float(np.max(np.abs(states[:, i] - ivp.x0[i] - integral))))
    return worst


Reference = Union[Trajectory, Callable[[float], Any], float, Sequence[float]]


def convergence_study(
    ivp: StieltjesIVP, steps: Sequence[float], reference: Reference
) -> pd.DataFrame:
    """
    Euler errors at the final time for decreasing steps.

    :param ivp: The problem.
    :param steps: Decreasing steps.
    :param reference: A finer trajectory, a closed form t -> state, or the
        exact final state.
    :returns: Frame with columns step, error, ratio, order; order is
        log(e_prev / e) / log(step_prev / step), log2 of the ratio when halving.
    """
    if isinstance(reference, Trajectory):
        exact = np.asarray(reference.final_state, dtype=float)
    elif callable(reference):
        exact = np.asarray(reference(ivp.t_end), dtype=float).reshape(-1)
    else:
        exact = np.asarray(reference, dtype=float).reshape(-1)
    rows = []
    previous = None
    for step in steps:
        trajectory = euler_solve(ivp, step)
        error = float(np.max(np.abs(trajectory.final_state - exact)))
        ratio = order = math.nan
        if previous is not None and error > 0.0 and previous[1] > 0.0:
            ratio = previous[1] / error
            order = math.log(ratio) / math.log(previous[0] / step)
        rows.append({"step": step, "error": error, "ratio": ratio, "order": order})
        previous = (step, error)
        _LOG.debug("Step %g: error %g", step, error)
    return pd.DataFrame(rows, columns=["step", "error", "ratio", "order"])


# Built-in right-hand sides --------------------------------------------------


def _vector(params: Mapping, key: str, dimension: int, default: float) -> np.ndarray:
    value = np.asarray(params.get(key, default), dtype=float)
    return np.broadcast_to(value, (dimension,)).copy()


def _rhs_zero(params, dimension):
    return lambda t, x: np.zeros(dimension)


def _rhs_constant(params, dimension):
    c = _vector(params, "c", dimension, 0.0)
    return lambda t, x: c


def _rhs_linear(params, dimension):
    matrix = np.asarray(params.get("A", np.eye(dimension)), dtype=float).reshape(
        dimension, dimension
    )
    offset = _vector(params, "b", dimension, 0.0)
    return lambda t, x: matrix @ x + offset


def _rhs_logistic(params, dimension):
    rate = _vector(params, "r", dimension, 1.0)
    capacity = _vector(params, "K", dimension, 1.0)
    return lambda t, x: rate * x * (1.0 - x / capacity)


def _rhs_quadratic(params, dimension):
    c = _vector(params, "c", dimension, 1.0)
    return lambda t, x: c * x**2


RHS_REGISTRY: Dict[str, Callable[[Mapping, int], Rhs]] = {
    "zero": _rhs_zero,
    "constant": _rhs_constant,
    "linear": _rhs_linear,
    "logistic": _rhs_logistic,
    "quadratic": _rhs_quadratic,
}


def build_rhs(name: str, params: Optional[Mapping], dimension: int) -> Rhs:
    """
    Instantiates a registered right-hand side.

    :param name: One of RHS_REGISTRY.
    :param params: Its parameters, e.g. {"A": [[...]], "b": [...]} for linear.
    :param dimension: State dimension.
    """
    if name not in RHS_REGISTRY:
        raise InputError(
            f"Unknown rhs {name!r}; expected one of {sorted(RHS_REGISTRY)}"
        )
    try:
        return RHS_REGISTRY[name](dict(params or {}), dimension)
    except (TypeError, ValueError) as e:
        raise InputError(f"Invalid parameters for rhs {name!r}: {e}") from e


def _guard_from_dict(data: Optional[Mapping]) -> Optional[Guard]:
    if data is None:
        return None
    try:
        policy = GuardPolicy(data.get("policy", GuardPolicy.CLAMP.value))
    except ValueError as e:
        raise InputError(f"Unknown guard policy: {data.get('policy')!r}") from e
    lower = data.get("lower")
    upper = data.get("upper")
    return Guard(
        lower=-math.inf if lower is None else float(lower),
        upper=math.inf if upper is None else float(upper),
        policy=policy,
        tolerance=float(data.get("tolerance", 0.0)),
    )


def ivp_from_dict(data: Mapping, base_dir: str = ".") -> StieltjesIVP:
    """
    Builds an IVP from its JSON description.

    Schema: {"derivators": [path or inline derivator object, ...],
    "rhs": {"name": ..., "params": {...}}, "x0": [...],
    "guards": [null or {"lower", "upper", "policy", "tolerance"}, ...]}.
    Relative derivator paths are resolved against base_dir.
    """
    try:
        derivators = []
        for item in data["derivators"]:
            if isinstance(item, str):
                path = item if os.path.isabs(item) else os.path.join(base_dir, item)
                derivators.append(Derivator.load(path))
            else:
                derivators.append(Derivator.from_dict(item))
        rhs_data = data["rhs"]
        if isinstance(rhs_data, str):
            rhs_data = {"name": rhs_data}
        rhs = build_rhs(rhs_data["name"], rhs_data.get("params"), len(derivators))
        guards = tuple(_guard_from_dict(item) for item in data.get("guards", []))
        return StieltjesIVP(tuple(derivators), rhs, np.asarray(data["x0"], dtype=float), guards)
    except (KeyError, TypeError) as e:
        raise InputError(f"Malformed IVP description: missing or invalid {e}") from e
