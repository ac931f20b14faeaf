"""
Left-continuous bounded-variation derivators on a compact interval.

A derivator is stored as finitely many breakpoints a = t_0 < ... < t_m = b,
one absolutely continuous density per open segment (t_k, t_{k+1}), a jump
size at each breakpoint and the anchor value g(a). Evaluation is
left-continuous: g(t_k) is the left limit and g(t_k+) = g(t_k) + jump(t_k).
"""

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import (
    Callable,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from numpy.polynomial import Polynomial, legendre

from stieltjes_tools.errors import DomainError, InputError
from stieltjes_tools.utils import get_default_logger, read_text_file, write_text_file


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)

LEFT_RECTANGLE = "left_rectangle"
TRAPEZOID = "trapezoid"
QUADRATURE_RULES = (LEFT_RECTANGLE, TRAPEZOID)

# Gauss-Legendre order used when the integrand carries no degree hint.
DEFAULT_GAUSS_ORDER = 16

# Offsets within this many sub-grid cells of a node are treated as the node.
_NODE_SNAP = 1e-9

# Relative margin keeping polynomial sign-split points away from segment ends.
_ROOT_MARGIN = 1e-12

SERIALIZATION_FORMAT = "stieltjes-derivator/1"

ArrayLike = Union[float, Sequence[float], np.ndarray]
VectorFunction = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=64)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Legendre nodes and weights on [-1, 1].

    :param order: Number of nodes; exact for polynomials of degree 2*order-1.
    :returns: The (nodes, weights) pair.
    """
    nodes, weights = legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_order(f_degree: Optional[int], density_degree: int) -> int:
    """
    Smallest Gauss-Legendre order exact for f * density.

    :param f_degree: Polynomial degree of the integrand, or None if unknown.
    :param density_degree: Polynomial degree of the density.
    :returns: The number of nodes to use.
    """
    if f_degree is None:
        return DEFAULT_GAUSS_ORDER
    return max(1, math.ceil((f_degree + density_degree + 1) / 2))


def _gauss_integrate(
    func: VectorFunction, lo: float, hi: float, order: int
) -> float:
    nodes, weights = gauss_legendre(order)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return float(half * np.dot(weights, func(mid + half * nodes)))


class Density:
    """
    Absolutely continuous density of a derivator segment.

    Positions are local offsets x in [0, length] from the segment's left
    breakpoint; the segment length is passed in because sampled densities
    need it to place their sub-grid.
    """

    kind = "abstract"

    @property
    def is_zero(self) -> bool:
        """
        True iff the density vanishes identically.
        """
        return False

    @property
    def degree(self) -> int:
        """
        Polynomial degree used to choose quadrature orders.
        """
        return 0

    def primitive(self, x: np.ndarray, length: float) -> np.ndarray:
        """
        Returns the integral of the density over [0, x].
        """
        raise NotImplementedError

    def values(self, x: np.ndarray, length: float) -> np.ndarray:
        """
        Returns the density at local offsets x.
        """
        raise NotImplementedError

    def integrate(
        self,
        f: VectorFunction,
        start: float,
        x0: float,
        x1: float,
        length: float,
        f_degree: Optional[int],
    ) -> float:
        """
        Returns the integral over [x0, x1] of f(start + x) * density(x) dx.
        """
        raise NotImplementedError

    def restrict(self, x0: float, x1: float, length: float) -> "Density":
        """
        Returns the density on [x0, x1] re-based to start at offset 0.
        """
        raise NotImplementedError

    def scaled(self, factor: float) -> "Density":
        """
        Returns the density multiplied by a constant.
        """
        raise NotImplementedError

    def sign_pieces(self, length: float) -> List[Tuple[float, float, "Density"]]:
        """
        Splits [0, length] into pieces on which the density has constant sign.
        """
        return [(0.0, length, self)]

    def to_dict(self) -> dict:
        """
        Returns the serializable description.
        """
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Density):
    """
    Constancy: the derivator is flat on the segment.
    """

    kind = "zero"

    @property
    def is_zero(self) -> bool:
        return True

    def primitive(self, x, length):
        return np.zeros_like(np.asarray(x, dtype=float))

    def values(self, x, length):
        return np.zeros_like(np.asarray(x, dtype=float))

    def integrate(self, f, start, x0, x1, length, f_degree):
        return 0.0

    def restrict(self, x0, x1, length):
        return self

    def scaled(self, factor):
        return self

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class ConstantSlope(Density):
    """
    Constant density c.
    """

    slope: float
    kind = "constant_slope"

    def primitive(self, x, length):
        return self.slope * np.asarray(x, dtype=float)

    def values(self, x, length):
        return np.full_like(np.asarray(x, dtype=float), self.slope)

    def integrate(self, f, start, x0, x1, length, f_degree):
        if x1 <= x0:
            return 0.0
        order = gauss_order(f_degree, 0)
        return self.slope * _gauss_integrate(
            lambda x: f(start + x), x0, x1, order
        )

    def restrict(self, x0, x1, length):
        return self

    def scaled(self, factor):
        return _normalize(ConstantSlope(self.slope * factor))

    def to_dict(self):
        return {"kind": self.kind, "slope": self.slope}


@dataclass(frozen=True)
class PolynomialDensity(Density):
    """
    Polynomial density; coefficients in ascending powers of the local offset.
    """

    coefficients: Tuple[float, ...]
    kind = "polynomial"

    @cached_property
    def _poly(self) -> Polynomial:
        return Polynomial(np.asarray(self.coefficients, dtype=float))

    @cached_property
    def _integral(self) -> Polynomial:
        return self._poly.integ()

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def primitive(self, x, length):
        return np.asarray(self._integral(np.asarray(x, dtype=float)), dtype=float)

    def values(self, x, length):
        return np.asarray(self._poly(np.asarray(x, dtype=float)), dtype=float)

    def integrate(self, f, start, x0, x1, length, f_degree):
        if x1 <= x0:
            return 0.0
        order = gauss_order(f_degree, self.degree)
        return _gauss_integrate(
            lambda x: f(start + x) * self._poly(x), x0, x1, order
        )

    def restrict(self, x0, x1, length):
        if x0 == 0.0:
            return self
        shifted = self._poly(Polynomial([x0, 1.0]))
        return _normalize(PolynomialDensity(tuple(float(c) for c in shifted.coef)))

    def scaled(self, factor):
        return _normalize(
            PolynomialDensity(tuple(factor * c for c in self.coefficients))
        )

    def sign_pieces(self, length):
        roots = self._poly.roots() if self.degree > 0 else np.array([])
        margin = _ROOT_MARGIN * max(1.0, length)
        cuts = sorted(
            {
                float(r.real)
                for r in np.atleast_1d(roots)
                if abs(r.imag) <= 1e-12 * (1.0 + abs(r.real))
                and margin < r.real < length - margin
            }
        )
        edges = [0.0] + cuts + [length]
        return [
            (lo, hi, self.restrict(lo, hi, length))
            for lo, hi in zip(edges[:-1], edges[1:])
        ]

    def to_dict(self):
        return {"kind": self.kind, "coefficients": list(self.coefficients)}


@dataclass(frozen=True, eq=False)
class SampledDensity(Density):
    """
    Density sampled on a uniform sub-grid of the segment.

    samples holds the values at the n+1 sub-grid nodes. Under the
    left-rectangle rule the density is piecewise constant, equal to the
    left node value on each cell (the last sample is unused); under the
    trapezoid rule it is piecewise linear between nodes.
    """

    samples: np.ndarray
    rule: str = LEFT_RECTANGLE
    kind = "sampled"

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size < 2:
            raise InputError("A sampled density needs at least two sub-grid nodes")
        if not np.all(np.isfinite(samples)):
            raise InputError("A sampled density has non-finite samples")
        if self.rule not in QUADRATURE_RULES:
            raise InputError(
                f"Unknown quadrature rule {self.rule!r}; expected one of {QUADRATURE_RULES}"
            )
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n_cells(self) -> int:
        """
        Number of sub-grid cells.
        """
        return self.samples.size - 1

    @property
    def degree(self) -> int:
        return 0 if self.rule == LEFT_RECTANGLE else 1

    @property
    def used_samples(self) -> np.ndarray:
        """
        The samples that influence the density under the declared rule.
        """
        return self.samples[:-1] if self.rule == LEFT_RECTANGLE else self.samples

    @cached_property
    def _unit_cumulative(self) -> np.ndarray:
        v = self.samples
        if self.rule == LEFT_RECTANGLE:
            cell_mass = v[:-1]
        else:
            cell_mass = 0.5 * (v[:-1] + v[1:])
        return np.concatenate(([0.0], np.cumsum(cell_mass)))

    def _locate(self, x: np.ndarray, length: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Returns (cell index, offset inside the cell, on-node mask) for offsets x.
        On-node offsets map to the node index with zero offset.
        """
        n = self.n_cells
        h = length / n
        r = np.asarray(x, dtype=float) / h
        nearest = np.rint(r)
        on_node = np.abs(r - nearest) <= _NODE_SNAP
        cell = np.where(on_node, nearest, np.floor(r))
        cell = np.clip(cell, 0, n).astype(int)
        offset = np.where(on_node, 0.0, np.asarray(x, dtype=float) - cell * h)
        return cell, offset, on_node

    def primitive(self, x, length):
        h = length / self.n_cells
        cell, offset, _ = self._locate(x, length)
        base = h * self._unit_cumulative[cell]
        inner = np.minimum(cell, self.n_cells - 1)
        v = self.samples
        if self.rule == LEFT_RECTANGLE:
            partial = v[inner] * offset
        else:
            partial = v[inner] * offset + (v[inner + 1] - v[inner]) * offset**2 / (
                2.0 * h
            )
        return base + partial

    def values(self, x, length):
        cell, offset, _ = self._locate(x, length)
        inner = np.minimum(cell, self.n_cells - 1)
        v = self.samples
        if self.rule == LEFT_RECTANGLE:
            return v[inner].astype(float)
        h = length / self.n_cells
        # At x = length the right node value is exact.
        at_end = cell >= self.n_cells
        slope = (v[inner + 1] - v[inner]) / h
        interior = v[inner] + slope * offset
        return np.where(at_end, v[-1], interior)

    def integrate(self, f, start, x0, x1, length, f_degree):
        if x1 <= x0:
            return 0.0
        n = self.n_cells
        h = length / n
        first, _, _ = self._locate(np.array([x0]), length)
        last_cell, last_off, last_node = self._locate(np.array([x1]), length)
        j0 = min(int(first[0]), n - 1)
        j1 = int(last_cell[0]) - (1 if last_node[0] else 0)
        j1 = min(max(j1, j0), n - 1)
        cells = np.arange(j0, j1 + 1)
        left = np.maximum(x0, cells * h)
        right = np.minimum(x1, (cells + 1) * h)
        widths = np.clip(right - left, 0.0, None)
        if self.rule == LEFT_RECTANGLE:
            return float(np.sum(f(start + left) * self.samples[cells] * widths))
        rho_left = self.values(left, length)
        rho_right = self.values(right, length)
        return float(
            np.sum(
                0.5
                * (f(start + left) * rho_left + f(start + right) * rho_right)
                * widths
            )
        )

    def _slice(self, j0: int, j1: int) -> Density:
        return _normalize(SampledDensity(self.samples[j0 : j1 + 1], self.rule))

    def restrict(self, x0, x1, length):
        if x0 == 0.0 and x1 == length:
            return self
        cells, _, on_node = self._locate(np.array([x0, x1]), length)
        if on_node.all() and cells[1] > cells[0]:
            return self._slice(int(cells[0]), int(cells[1]))
        return _normalize(CompositeDensity(((self, float(x0), float(length)),)))

    def scaled(self, factor):
        return _normalize(SampledDensity(self.samples * factor, self.rule))

    def sign_pieces(self, length):
        n = self.n_cells
        h = length / n
        v = self.samples
        pieces = []
        run_start, run_sign = 0, None

        def flush(end: int):
            if run_sign is not None and end > run_start:
                pieces.append((run_start * h, end * h, self._slice(run_start, end)))

        for j in range(n):
            if self.rule == TRAPEZOID and v[j] * v[j + 1] < 0.0:
                flush(j)
                line = PolynomialDensity((float(v[j]), float((v[j + 1] - v[j]) / h)))
                root = float(v[j] / (v[j] - v[j + 1]) * h)
                pieces.append((j * h, j * h + root, line.restrict(0.0, root, h)))
                pieces.append(((j * h) + root, (j + 1) * h, line.restrict(root, h, h)))
                run_start, run_sign = j + 1, None
                continue
            if self.rule == LEFT_RECTANGLE:
                cell_sign = np.sign(v[j])
            else:
                cell_sign = np.sign(v[j] + v[j + 1])
            if run_sign is None:
                run_start, run_sign = j, cell_sign
            elif cell_sign != run_sign:
                flush(j)
                run_start, run_sign = j, cell_sign
        flush(n)
        # Snap the outer edges so pieces tile [0, length] exactly.
        if pieces:
            pieces[0] = (0.0, pieces[0][1], pieces[0][2])
            pieces[-1] = (pieces[-1][0], length, pieces[-1][2])
        return pieces

    def to_dict(self):
        return {"kind": self.kind, "rule": self.rule, "samples": self.samples.tolist()}


@dataclass(frozen=True, eq=False)
class CompositeDensity(Density):
    """
    Sum of restricted densities that cannot be merged into one basic kind.

    Each term is (base density, offset into the base segment, base length);
    the term contributes base(offset + x).
    """

    terms: Tuple[Tuple[Density, float, float], ...]
    kind = "composite"

    @property
    def is_zero(self) -> bool:
        return all(term[0].is_zero for term in self.terms)

    @property
    def degree(self) -> int:
        return max((term[0].degree for term in self.terms), default=0)

    def primitive(self, x, length):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for base, offset, base_length in self.terms:
            total = total + (
                base.primitive(offset + x, base_length)
                - base.primitive(np.asarray(offset), base_length)
            )
        return total

    def values(self, x, length):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for base, offset, base_length in self.terms:
            total = total + base.values(offset + x, base_length)
        return total

    def integrate(self, f, start, x0, x1, length, f_degree):
        return sum(
            base.integrate(
                f, start - offset, offset + x0, offset + x1, base_length, f_degree
            )
            for base, offset, base_length in self.terms
        )

    def restrict(self, x0, x1, length):
        if x0 == 0.0:
            return self
        return CompositeDensity(
            tuple((base, offset + x0, bl) for base, offset, bl in self.terms)
        )

    def scaled(self, factor):
        return CompositeDensity(
            tuple((base.scaled(factor), offset, bl) for base, offset, bl in self.terms)
        )

    def sign_pieces(self, length):
        signs = set()
        for base, offset, base_length in self.terms:
            for lo, hi, piece in base.sign_pieces(base_length):
                if hi <= offset or lo >= offset + length:
                    continue
                sign = density_sign(piece, hi - lo)
                if sign != 0:
                    signs.add(sign)
        if len(signs) > 1:
            raise InputError(
                "A composite density with mixed-sign terms cannot be split by sign"
            )
        return [(0.0, length, self)]

    def to_dict(self):
        return {
            "kind": self.kind,
            "terms": [
                {"density": base.to_dict(), "offset": offset, "base_length": bl}
                for base, offset, bl in self.terms
            ],
        }


def _normalize(density: Density) -> Density:
    """
    Canonical form: identically-zero densities become Zero and constant
    polynomials become ConstantSlope, so constancy is decidable structurally.
    """
    if isinstance(density, ConstantSlope):
        return Zero() if density.slope == 0.0 else density
    if isinstance(density, PolynomialDensity):
        coefficients = list(density.coefficients)
        while coefficients and coefficients[-1] == 0.0:
            coefficients.pop()
        if not coefficients:
            return Zero()
        if len(coefficients) == 1:
            return ConstantSlope(float(coefficients[0]))
        return PolynomialDensity(tuple(float(c) for c in coefficients))
    if isinstance(density, SampledDensity):
        if not np.any(density.used_samples):
            return Zero()
        return density
    if isinstance(density, CompositeDensity):
        terms = tuple(term for term in density.terms if not term[0].is_zero)
        if not terms:
            return Zero()
        return CompositeDensity(terms)
    return density


def density_sign(density: Density, length: float) -> int:
    """
    Sign of a density known to have constant sign on [0, length].
    """
    if density.is_zero:
        return 0
    mass = float(density.primitive(np.array([length]), length)[0])
    if mass == 0.0:
        mass = float(density.values(np.array([0.5 * length]), length)[0])
    return int(np.sign(mass))


def density_from_dict(data: Mapping) -> Density:
    """
    Rebuilds a density from its serialized description.

    :param data: The dictionary produced by Density.to_dict().
    :returns: The density.
    """
    kind = data.get("kind")
    if kind == Zero.kind:
        return Zero()
    if kind == ConstantSlope.kind:
        return _normalize(ConstantSlope(float(data["slope"])))
    if kind == PolynomialDensity.kind:
        return _normalize(
            PolynomialDensity(tuple(float(c) for c in data["coefficients"]))
        )
    if kind == SampledDensity.kind:
        return _normalize(
            SampledDensity(
                np.asarray(data["samples"], dtype=float),
                data.get("rule", LEFT_RECTANGLE),
            )
        )
    if kind == CompositeDensity.kind:
        return _normalize(
            CompositeDensity(
                tuple(
                    (
                        density_from_dict(term["density"]),
                        float(term["offset"]),
                        float(term["base_length"]),
                    )
                    for term in data["terms"]
                )
            )
        )
    raise InputError(f"Unknown density kind: {kind!r}")


class PointTag(Enum):
    """
    Position of a point relative to the jump and constancy sets of g.
    """

    JUMP = "jump"
    CONSTANCY_INTERIOR = "constancy_interior"
    NG_MINUS = "ng_minus"
    NG_PLUS = "ng_plus"
    REGULAR = "regular"


@dataclass(frozen=True)
class PointClass:
    """
    Classification of a point t together with its representative t*.
    """

    tag: PointTag
    star: float


JumpsInput = Optional[Union[Mapping[float, float], Iterable[Tuple[float, float]]]]


class Derivator:
    """
    Left-continuous function of bounded variation on [a, b].

    Instances are immutable; every operation returns a new derivator.
    """

    def __init__(
        self,
        breakpoints: Sequence[float],
        segments: Sequence[Density],
        jumps: JumpsInput = None,
        anchor: float = 0.0,
        require_b_not_in_ng_plus: Optional[bool] = False,
    ):
        """
        :param breakpoints: Strictly increasing times a = t_0 < ... < t_m = b.
        :param segments: One density per open segment (t_k, t_{k+1}).
        :param jumps: Map (or pairs) from breakpoint t_k, k < m, to the jump
            g(t_k+) - g(t_k). Absent breakpoints have no jump.
        :param anchor: The value g(a).
        :param require_b_not_in_ng_plus: If True, a constancy component ending
            at b is an error; if False it is logged as a warning; None skips
            the check.
        """
        bp = np.array(breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise InputError("A derivator needs at least two breakpoints")
        if not np.all(np.isfinite(bp)) or not np.all(np.diff(bp) > 0.0):
            raise InputError("Derivator breakpoints must be finite and strictly increasing")
        if len(segments) != bp.size - 1:
            raise InputError(
                f"Expected {bp.size - 1} segments for {bp.size} breakpoints, "
                f"got {len(segments)}"
            )
        if not math.isfinite(anchor):
            raise InputError("The derivator anchor must be finite")
        bp.setflags(write=False)
        self._breakpoints = bp
        self._segments = tuple(_normalize(s) for s in segments)
        self._anchor = float(anchor)

        jump_sizes = np.zeros(bp.size)
        pairs = jumps.items() if isinstance(jumps, Mapping) else (jumps or [])
        for t, size in pairs:
            k = int(np.searchsorted(bp, float(t)))
            if k >= bp.size or bp[k] != float(t):
                raise InputError(f"Jump at t={t} is not on a breakpoint")
            if k == bp.size - 1 and float(size) != 0.0:
                raise InputError("A derivator cannot jump at the right endpoint b")
            if not math.isfinite(float(size)):
                raise InputError(f"Non-finite jump size at t={t}")
            jump_sizes[k] += float(size)
        jump_sizes.setflags(write=False)
        self._jump_sizes = jump_sizes

        lengths = np.diff(bp)
        lengths.setflags(write=False)
        self._lengths = lengths
        masses = np.array(
            [
                float(seg.primitive(np.array([length]), length)[0])
                for seg, length in zip(self._segments, lengths)
            ]
        )
        left = np.empty(bp.size)
        left[0] = self._anchor
        for k in range(bp.size - 1):
            left[k + 1] = left[k] + jump_sizes[k] + masses[k]
        if not np.all(np.isfinite(left)):
            raise InputError("The derivator has unbounded variation")
        left.setflags(write=False)
        self._left_values = left

        if require_b_not_in_ng_plus is not None and self._segments[-1].is_zero:
            message = (
                f"b = {bp[-1]} closes a constancy component of the derivator "
                "(b is in N_g+)"
            )
            if require_b_not_in_ng_plus:
                raise InputError(message)
            _LOG.warning(message)

    # Constructors ------------------------------------------------------------

    @classmethod
    def identity(cls, a: float = 0.0, b: float = 1.0) -> "Derivator":
        """
        The classical derivator g(t) = t on [a, b].
        """
        return cls([a, b], [ConstantSlope(1.0)], anchor=a)

    @classmethod
    def from_slopes(
        cls,
        breakpoints: Sequence[float],
        slopes: Sequence[float],
        jumps: JumpsInput = None,
        anchor: float = 0.0,
        require_b_not_in_ng_plus: Optional[bool] = False,
    ) -> "Derivator":
        """
        Piecewise-linear derivator from per-segment slopes.
        """
        return cls(
            breakpoints,
            [ConstantSlope(float(c)) for c in slopes],
            jumps=jumps,
            anchor=anchor,
            require_b_not_in_ng_plus=require_b_not_in_ng_plus,
        )

    @classmethod
    def pure_jump(
        cls,
        a: float,
        b: float,
        jumps: Mapping[float, float],
        anchor: float = 0.0,
        require_b_not_in_ng_plus: Optional[bool] = None,
    ) -> "Derivator":
        """
        Step derivator with zero density and the given jumps.
        """
        times = sorted({float(a), float(b)} | {float(t) for t in jumps})
        if times[0] < a or times[-1] > b:
            raise DomainError("Jump times must lie in [a, b)")
        return cls(
            times,
            [Zero()] * (len(times) - 1),
            jumps=jumps,
            anchor=anchor,
            require_b_not_in_ng_plus=require_b_not_in_ng_plus,
        )

    @classmethod
    def sampled(
        cls,
        grid: Sequence[float],
        density: Sequence[float],
        rule: str = LEFT_RECTANGLE,
        anchor: float = 0.0,
    ) -> "Derivator":
        """
        Single-segment derivator whose density is sampled on a uniform grid.

        :param grid: Uniform time grid; its ends are the domain.
        :param density: Density values at the grid nodes.
        :param rule: The declared quadrature rule.
        :param anchor: The value g(a).
        """
        grid = np.asarray(grid, dtype=float)
        return cls(
            [grid[0], grid[-1]],
            [SampledDensity(np.asarray(density, dtype=float), rule)],
            anchor=anchor,
            require_b_not_in_ng_plus=None,
        )

    @classmethod
    def truncated_jump_series(
        cls,
        a: float,
        b: float,
        jump_term: Callable[[int], Tuple[float, float]],
        tail_bound: Callable[[int], float],
        tol: float,
        max_terms: int = 100_000,
    ) -> Tuple["Derivator", float]:
        """
        Approximates a derivator with countably many jumps by its first n jumps,
        with n the smallest count whose tail bound is below tol.

        :param a: Left end of the domain.
        :param b: Right end of the domain.
        :param jump_term: Maps an index i >= 0 to the pair (t_i, jump size).
        :param tail_bound: Maps n to an upper bound of the sum of |jump_i| for i >= n.
        :param tol: Required bound on the discarded variation.
        :param max_terms: Safety limit on the number of kept jumps.
        :returns: The truncated derivator and the achieved tail bound.
        """
        n = 0
        while tail_bound(n) >= tol:
            n += 1
            if n > max_terms:
                raise InputError(
                    f"Tail bound stays above {tol} after {max_terms} jumps"
                )
        jumps: Dict[float, float] = {}
        for i in range(n):
            t, size = jump_term(i)
            jumps[float(t)] = jumps.get(float(t), 0.0) + float(size)
        _LOG.debug("Kept %d jumps, tail bound %g", n, tail_bound(n))
        return cls.pure_jump(a, b, jumps), float(tail_bound(n))

    def with_jumps(self, jumps: Mapping[float, float]) -> "Derivator":
        """
        Returns this derivator plus a step function with the given jumps.
        """
        return sum_derivators([self, Derivator.pure_jump(self.a, self.b, jumps)])

    # Accessors ---------------------------------------------------------------

    @property
    def a(self) -> float:
        return float(self._breakpoints[0])

    @property
    def b(self) -> float:
        return float(self._breakpoints[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        return self._breakpoints

    @property
    def segments(self) -> Tuple[Density, ...]:
        return self._segments

    @property
    def anchor(self) -> float:
        return self._anchor

    @property
    def jump_sizes(self) -> np.ndarray:
        """
        Jump size at each breakpoint (zero where g is right-continuous).
        """
        return self._jump_sizes

    @property
    def jumps(self) -> Dict[float, float]:
        """
        The nonzero jumps keyed by time.
        """
        return {
            float(t): float(size)
            for t, size in zip(self._breakpoints, self._jump_sizes)
            if size != 0.0
        }

    @property
    def jump_points(self) -> np.ndarray:
        """
        The jump set D_g, sorted.
        """
        return self._breakpoints[self._jump_sizes != 0.0]

    @property
    def lengths(self) -> np.ndarray:
        return self._lengths

    def segment_index(self, t: float) -> int:
        """
        Index k of the segment (t_k, t_{k+1}] containing t > a, or of the first
        segment when t = a.
        """
        return max(int(np.searchsorted(self._breakpoints, t, side="left")) - 1, 0)

    def _check_domain(self, arr: np.ndarray, right_open: bool = False):
        if arr.size == 0:
            return
        lo, hi = float(np.min(arr)), float(np.max(arr))
        if lo < self.a or hi > self.b or (right_open and hi >= self.b):
            bound = ")" if right_open else "]"
            raise DomainError(
                f"Time outside the derivator domain [{self.a}, {self.b}{bound}: "
                f"{lo if lo < self.a else hi}"
            )
        if not np.all(np.isfinite(arr)):
            raise DomainError("Non-finite time")

    # Evaluation --------------------------------------------------------------

    def eval(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """
        Left-continuous evaluation g(t).

        :param t: A time or array of times in [a, b].
        :returns: g(t) with the same shape as t.
        """
        arr = np.asarray(t, dtype=float)
        self._check_domain(arr)
        flat = arr.reshape(-1)
        k = np.searchsorted(self._breakpoints, flat, side="left") - 1
        out = np.full(flat.shape, self._anchor)
        for idx in np.unique(k[k >= 0]):
            mask = k == idx
            offset = flat[mask] - self._breakpoints[idx]
            out[mask] = (
                self._left_values[idx]
                + self._jump_sizes[idx]
                + self._segments[idx].primitive(offset, self._lengths[idx])
            )
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def jump_at(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """
        The jump g(t+) - g(t); zero off the breakpoints.
        """
        arr = np.asarray(t, dtype=float)
        flat = arr.reshape(-1)
        k = np.clip(np.searchsorted(self._breakpoints, flat), 0, self._breakpoints.size - 1)
        out = np.where(self._breakpoints[k] == flat, self._jump_sizes[k], 0.0)
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def eval_right(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """
        Right limit g(t+) = g(t) + jump(t) for t in [a, b).
        """
        arr = np.asarray(t, dtype=float)
        self._check_domain(arr, right_open=True)
        return self.eval(t) + self.jump_at(t)

    def density_at(self, t: float) -> float:
        """
        Density of the absolutely continuous part at t (right-open segments).
        """
        self._check_domain(np.asarray(t, dtype=float))
        k = min(
            int(np.searchsorted(self._breakpoints, t, side="right")) - 1,
            len(self._segments) - 1,
        )
        offset = t - self._breakpoints[k]
        return float(self._segments[k].values(np.array([offset]), self._lengths[k])[0])

    # Structure ---------------------------------------------------------------

    def _sign_split(self) -> Tuple[np.ndarray, List[Tuple[Density, int]]]:
        """
        Refines the breakpoints so every segment density has constant sign.

        :returns: The refined breakpoints and (density, sign) per segment.
        """
        points = [self.a]
        pieces: List[Tuple[Density, int]] = []
        for k, seg in enumerate(self._segments):
            start = float(self._breakpoints[k])
            parts = seg.sign_pieces(float(self._lengths[k]))
            for i, (lo, hi, piece) in enumerate(parts):
                end = (
                    float(self._breakpoints[k + 1])
                    if i == len(parts) - 1
                    else start + hi
                )
                if end <= points[-1]:
                    continue
                points.append(end)
                pieces.append((piece, density_sign(piece, hi - lo)))
        return np.array(points), pieces

    def _rebuild(
        self,
        breakpoints: np.ndarray,
        segments: Sequence[Density],
        jump_map: Callable[[float], float],
        anchor: float,
    ) -> "Derivator":
        jumps = {}
        for t, size in zip(self._breakpoints[:-1], self._jump_sizes[:-1]):
            mapped = jump_map(float(size))
            if mapped != 0.0:
                jumps[float(t)] = mapped
        return Derivator(
            breakpoints,
            segments,
            jumps=jumps,
            anchor=anchor,
            require_b_not_in_ng_plus=None,
        )

    @cached_property
    def variation_derivator(self) -> "Derivator":
        """
        The variation function g~(t) = var_g[a, t].
        """
        points, pieces = self._sign_split()
        segments = [piece if sign >= 0 else piece.scaled(-1.0) for piece, sign in pieces]
        return self._rebuild(points, segments, abs, 0.0)

    @cached_property
    def jordan_parts(self) -> Tuple["Derivator", "Derivator"]:
        """
        Positive and negative variations (g_1, g_2) with g = g(a) + g_1 - g_2.
        """
        points, pieces = self._sign_split()
        positive = [piece if sign > 0 else Zero() for piece, sign in pieces]
        negative = [piece.scaled(-1.0) if sign < 0 else Zero() for piece, sign in pieces]
        return (
            self._rebuild(points, positive, lambda s: max(s, 0.0), 0.0),
            self._rebuild(points, negative, lambda s: max(-s, 0.0), 0.0),
        )

    @cached_property
    def constancy_components(self) -> Tuple[Tuple[float, float], ...]:
        """
        Maximal open intervals on which g is constant, sorted.
        """
        components: List[Tuple[float, float]] = []
        start = None
        for k, seg in enumerate(self._segments):
            t_k = float(self._breakpoints[k])
            if start is not None and (not seg.is_zero or self._jump_sizes[k] != 0.0):
                components.append((start, t_k))
                start = None
            if seg.is_zero and start is None:
                start = t_k
        if start is not None:
            components.append((start, self.b))
        return tuple(components)

    def total_variation(self) -> float:
        """
        var_g[a, b].
        """
        return float(self.variation_derivator.eval(self.b))

    def scale(self) -> float:
        """
        max(1, total variation), the unit for tolerance statements.
        """
        return max(1.0, self.total_variation())

    def pseudometric(self, s: ArrayLike, t: ArrayLike) -> Union[float, np.ndarray]:
        """
        The g-topology distance |g~(s) - g~(t)|.
        """
        tilde = self.variation_derivator
        return np.abs(tilde.eval(s) - tilde.eval(t))

    def classify_point(self, t: float) -> PointClass:
        """
        Tags t and computes t*: the right end of the constancy component
        containing t (or starting at t = a when a is not a jump), else t.
        """
        self._check_domain(np.asarray(t, dtype=float))
        t = float(t)
        if t < self.b and self.jump_at(t) != 0.0:
            return PointClass(PointTag.JUMP, t)
        for lo, hi in self.constancy_components:
            if lo < t < hi:
                return PointClass(PointTag.CONSTANCY_INTERIOR, hi)
            if t == lo == self.a:
                return PointClass(PointTag.CONSTANCY_INTERIOR, hi)
            if t == hi:
                return PointClass(PointTag.NG_PLUS, t)
            if t == lo:
                return PointClass(PointTag.NG_MINUS, t)
        return PointClass(PointTag.REGULAR, t)

    def star(self, t: float) -> float:
        """
        The representative point t*.
        """
        return self.classify_point(t).star

    # Serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        """
        Returns the documented serialization schema.
        """
        return {
            "format": SERIALIZATION_FORMAT,
            "anchor": self._anchor,
            "breakpoints": self._breakpoints.tolist(),
            "segments": [seg.to_dict() for seg in self._segments],
            "jumps": [[t, size] for t, size in self.jumps.items()],
        }

    @classmethod
    def from_dict(
        cls, data: Mapping, require_b_not_in_ng_plus: Optional[bool] = False
    ) -> "Derivator":
        """
        Rebuilds a derivator from Derivator.to_dict() output.
        """
        if data.get("format", SERIALIZATION_FORMAT) != SERIALIZATION_FORMAT:
            raise InputError(f"Unsupported derivator format: {data.get('format')!r}")
        try:
            return cls(
                data["breakpoints"],
                [density_from_dict(seg) for seg in data["segments"]],
                jumps=[(float(t), float(s)) for t, s in data.get("jumps", [])],
                anchor=float(data.get("anchor", 0.0)),
                require_b_not_in_ng_plus=require_b_not_in_ng_plus,
            )
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed derivator description: {e}") from e

    def to_json(self) -> str:
        """
        Serializes to JSON text; floats round-trip exactly.
        """
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Derivator":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InputError(f"Derivator file is not valid JSON: {e}") from e
        return cls.from_dict(data)

    def save(self, path: str):
        write_text_file(path, self.to_json() + "\n")

    @classmethod
    def load(cls, path: str) -> "Derivator":
        return cls.from_json(read_text_file(path))

    def __add__(self, other: "Derivator") -> "Derivator":
        return sum_derivators([self, other])

    def __repr__(self) -> str:
        kinds = ",".join(seg.kind for seg in self._segments)
        return (
            f"Derivator([{self.a}, {self.b}], segments=[{kinds}], "
            f"jumps={len(self.jump_points)}, anchor={self._anchor})"
        )


def eval(g: Derivator, t: ArrayLike):  # pylint: disable=redefined-builtin
    """
    g(t), left-continuous.
    """
    return g.eval(t)


def eval_right(g: Derivator, t: ArrayLike):
    """
    g(t+) for t in [a, b).
    """
    return g.eval_right(t)


def variation(g: Derivator) -> Derivator:
    """
    The variation function g~ with g~(a) = 0.
    """
    return g.variation_derivator


def jordan(g: Derivator) -> Tuple[Derivator, Derivator]:
    """
    The Jordan decomposition (g_1, g_2) of g.
    """
    return g.jordan_parts


def positive_variation(g: Derivator) -> Derivator:
    """
    g_1, the distribution function of mu_g+ on [a, t).
    """
    return g.jordan_parts[0]


def negative_variation(g: Derivator) -> Derivator:
    """
    g_2, the distribution function of mu_g- on [a, t).
    """
    return g.jordan_parts[1]


def jump_at(g: Derivator, t: ArrayLike):
    return g.jump_at(t)


def jump_points(g: Derivator) -> np.ndarray:
    return g.jump_points


def total_variation(g: Derivator) -> float:
    return g.total_variation()


def pseudometric(g: Derivator, s: ArrayLike, t: ArrayLike):
    return g.pseudometric(s, t)


def classify_point(g: Derivator, t: float) -> PointClass:
    """
    Point tag and t* for t.
    """
    return g.classify_point(t)


def constancy_components(g: Derivator) -> List[Tuple[float, float]]:
    """
    The components (a_n, b_n) of the constancy set C_g.
    """
    return list(g.constancy_components)


def _combine_densities(densities: Sequence[Density], length: float) -> Density:
    terms = [d for d in densities if not d.is_zero]
    if not terms:
        return Zero()
    if len(terms) == 1:
        return terms[0]
    if all(isinstance(d, (ConstantSlope, PolynomialDensity)) for d in terms):
        total = Polynomial([0.0])
        for d in terms:
            coefficients = (d.slope,) if isinstance(d, ConstantSlope) else d.coefficients
            total = total + Polynomial(coefficients)
        return _normalize(PolynomialDensity(tuple(float(c) for c in total.coef)))
    sampled = [d for d in terms if isinstance(d, SampledDensity)]
    constants = [d for d in terms if isinstance(d, ConstantSlope)]
    if (
        sampled
        and len(sampled) + len(constants) == len(terms)
        and len({(d.rule, d.n_cells) for d in sampled}) == 1
    ):
        samples = np.sum([d.samples for d in sampled], axis=0)
        samples = samples + sum(d.slope for d in constants)
        return _normalize(SampledDensity(samples, sampled[0].rule))
    flat: List[Tuple[Density, float, float]] = []
    for d in terms:
        if isinstance(d, CompositeDensity):
            flat.extend(d.terms)
        else:
            flat.append((d, 0.0, length))
    return _normalize(CompositeDensity(tuple(flat)))


def sum_derivators(gs: Sequence[Derivator]) -> Derivator:
    """
    Pointwise sum of derivators sharing a domain.

    :param gs: The derivators to add.
    :returns: The sum; breakpoints are the merged union and jumps add.
    """
    if not gs:
        raise InputError("Cannot sum an empty list of derivators")
    a, b = gs[0].a, gs[0].b
    for g in gs[1:]:
        if g.a != a or g.b != b:
            raise DomainError(
                f"Derivator domain mismatch: [{a}, {b}] vs [{g.a}, {g.b}]"
            )
    merged = np.unique(np.concatenate([g.breakpoints for g in gs]))
    segments = []
    for u, v in zip(merged[:-1], merged[1:]):
        parts = []
        for g in gs:
            k = int(np.searchsorted(g.breakpoints, u, side="right")) - 1
            start = float(g.breakpoints[k])
            length = float(g.lengths[k])
            x0, x1 = float(u) - start, float(v) - start
            if x0 == 0.0 and float(v) == float(g.breakpoints[k + 1]):
                parts.append(g.segments[k])
            else:
                parts.append(g.segments[k].restrict(x0, x1, length))
        segments.append(_combine_densities(parts, float(v - u)))
    jumps = {}
    for t in merged[:-1]:
        size = sum(g.jump_at(float(t)) for g in gs)
        if size != 0.0:
            jumps[float(t)] = size
    return Derivator(
        merged,
        segments,
        jumps=jumps,
        anchor=sum(g.anchor for g in gs),
        require_b_not_in_ng_plus=None,
    )
