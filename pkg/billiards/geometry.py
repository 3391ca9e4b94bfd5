"""
Table geometry for stadium-type billiards

Boundaries are two strictly convex arcs glued C1 to two flat segments and
traversed counter-clockwise in the order arc1, flat3, arc2, flat4. The
arclength coordinate r starts at the gluing point P14.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, optimize

from .config import SOLVER_CONFIG
from .errors import ConfigError, DegenerateChord, ValidationError

logger = logging.getLogger(__name__)

ARC_LETTERS = (1, 2)
FLAT_LETTERS = (3, 4)
BOUNDARY_ORDER = (1, 3, 2, 4)

# Rays start this far along the chord before a hit counts
RAY_T_MIN = 1e-10
# Arclength slack when mapping an intersection back to a component
ARC_SLACK = 1e-9

Point = Tuple[float, float]


def rotate90(v: np.ndarray) -> np.ndarray:
    """Counter-clockwise rotation by a right angle."""
    return np.array([-v[1], v[0]])


def cross(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _as_point(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float).reshape(2)


class Isometry:
    """Planar isometry x -> linear @ x + offset."""

    def __init__(self, linear: np.ndarray, offset: np.ndarray):
        self.linear = np.asarray(linear, dtype=float)
        self.offset = np.asarray(offset, dtype=float)

    @classmethod
    def identity(cls) -> 'Isometry':
        return cls(np.eye(2), np.zeros(2))

    @classmethod
    def reflection(cls, point: np.ndarray, direction: np.ndarray) -> 'Isometry':
        """Reflection across the line through point with the given direction."""
        e = _as_point(direction)
        e = e / np.linalg.norm(e)
        linear = 2.0 * np.outer(e, e) - np.eye(2)
        a = _as_point(point)
        return cls(linear, a - linear @ a)

    @property
    def is_reflection(self) -> bool:
        return np.linalg.det(self.linear) < 0

    @property
    def axis_angle(self) -> float:
        """Twice the axis angle for reflections, the rotation angle otherwise."""
        return math.atan2(self.linear[1, 0], self.linear[0, 0])

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.linear @ _as_point(point) + self.offset

    def rotate(self, vector: np.ndarray) -> np.ndarray:
        return self.linear @ _as_point(vector)

    def compose(self, other: 'Isometry') -> 'Isometry':
        """self after other."""
        return Isometry(self.linear @ other.linear, self.linear @ other.offset + self.offset)

    def inverse(self) -> 'Isometry':
        inv = self.linear.T
        return Isometry(inv, -inv @ self.offset)

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous matrix."""
        m = np.eye(3)
        m[:2, :2] = self.linear
        m[:2, 2] = self.offset
        return m


class ArcSpec:
    """A boundary piece parametrized by arclength s in [0, length]."""

    kind = 'arc'

    @property
    def length(self) -> float:
        raise NotImplementedError

    def position(self, s: float) -> np.ndarray:
        raise NotImplementedError

    def tangent(self, s: float) -> np.ndarray:
        raise NotImplementedError

    def acceleration(self, s: float) -> np.ndarray:
        """Second derivative of the position in arclength."""
        raise NotImplementedError

    def local_frame(self, s: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.position(s), self.tangent(s), self.acceleration(s)

    def normal(self, s: float) -> np.ndarray:
        """Inward unit normal."""
        return rotate90(self.tangent(s))

    def signed_curvature(self, s: float) -> float:
        """Negative on convex arcs, zero on flats."""
        return -float(np.dot(self.acceleration(s), self.normal(s)))

    def curvature(self, s: float) -> float:
        return abs(self.signed_curvature(s))

    def curvature_rate(self, s: float) -> float:
        """Arclength derivative of the absolute curvature."""
        h = 1e-5
        return (self.curvature(s + h) - self.curvature(s - h)) / (2 * h)

    @property
    def start_point(self) -> np.ndarray:
        return self.position(0.0)

    @property
    def end_point(self) -> np.ndarray:
        return self.position(self.length)

    def intersect(self, origin: np.ndarray, direction: np.ndarray,
                  t_min: float = RAY_T_MIN) -> List[Tuple[float, float]]:
        """All (t, s) with origin + t*direction = position(s), t > t_min."""
        raise NotImplementedError

    def reflected(self, isometry: Isometry) -> 'ArcSpec':
        """Image under an isometry, traversed so the image table stays counter-clockwise."""
        raise NotImplementedError

    def sample_parameters(self, count: int, midpoints: bool = True) -> np.ndarray:
        if midpoints:
            return (np.arange(count) + 0.5) * self.length / count
        return np.linspace(0.0, self.length, count)

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError

    def _clamp(self, s: float) -> Optional[float]:
        if -ARC_SLACK <= s <= self.length + ARC_SLACK:
            return min(max(s, 0.0), self.length)
        return None


@dataclass(frozen=True)
class CircularArc(ArcSpec):
    center: Point
    radius: float
    start_angle: float
    end_angle: float
    counter_clockwise: bool = True

    kind = 'circular'

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError(f"Arc radius must be positive, got {self.radius}")

    @cached_property
    def _center(self) -> np.ndarray:
        return _as_point(self.center)

    @property
    def _sign(self) -> float:
        return 1.0 if self.counter_clockwise else -1.0

    @property
    def length(self) -> float:
        return self.radius * abs(self.end_angle - self.start_angle)

    def angle(self, s: float) -> float:
        return self.start_angle + self._sign * s / self.radius

    def position(self, s: float) -> np.ndarray:
        a = self.angle(s)
        return self._center + self.radius * np.array([math.cos(a), math.sin(a)])

    def tangent(self, s: float) -> np.ndarray:
        a = self.angle(s)
        return self._sign * np.array([-math.sin(a), math.cos(a)])

    def acceleration(self, s: float) -> np.ndarray:
        a = self.angle(s)
        return -np.array([math.cos(a), math.sin(a)]) / self.radius

    def curvature_rate(self, s: float) -> float:
        return 0.0

    def arclength_of_angle(self, alpha: float) -> float:
        total = abs(self.end_angle - self.start_angle)
        delta = (self._sign * (alpha - self.start_angle)) % (2 * math.pi)
        slack = ARC_SLACK / self.radius
        if delta > total + slack and delta - 2 * math.pi >= -slack:
            delta -= 2 * math.pi
        return self.radius * delta

    def intersect(self, origin: np.ndarray, direction: np.ndarray,
                  t_min: float = RAY_T_MIN) -> List[Tuple[float, float]]:
        d = _as_point(direction)
        m = _as_point(origin) - self._center
        b = float(np.dot(d, m))
        dist = float(np.linalg.norm(m))
        c_val = (dist + self.radius) * (dist - self.radius)
        disc = b * b - c_val
        if disc < 0:
            return []
        q = -(b + math.copysign(math.sqrt(disc), b))
        roots = [q]
        if q != 0.0:
            roots.append(c_val / q)
        hits = []
        for t in sorted(roots):
            if t <= t_min:
                continue
            p = m + t * d
            s = self._clamp(self.arclength_of_angle(math.atan2(p[1], p[0])))
            if s is not None:
                hits.append((t, s))
        return hits

    def reflected(self, isometry: Isometry) -> 'CircularArc':
        center = tuple(isometry.apply(self._center))
        turn = isometry.axis_angle
        if isometry.is_reflection:
            return CircularArc(center, self.radius, turn - self.end_angle,
                               turn - self.start_angle, self.counter_clockwise)
        return CircularArc(center, self.radius, self.start_angle + turn,
                           self.end_angle + turn, self.counter_clockwise)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'center': list(self.center),
            'radius': self.radius,
            'start_angle': self.start_angle,
            'end_angle': self.end_angle,
            'counter_clockwise': self.counter_clockwise,
        }


class ParametricArc(ArcSpec):
    """Arc given by a native parameter sigma, reparametrized by arclength.

    Subclasses provide native_bounds and curve_derivatives(sigma) returning
    the point and its first two sigma-derivatives.
    """

    breakpoint_count = 32

    @property
    def native_bounds(self) -> Tuple[float, float]:
        raise NotImplementedError

    def curve_derivatives(self, sigma: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def curve_points(self, sigma: np.ndarray) -> np.ndarray:
        """Points for an array of sigma values, shape (n, 2)."""
        return np.array([self.curve_derivatives(x)[0] for x in sigma])

    def speed(self, sigma: float) -> float:
        return float(np.linalg.norm(self.curve_derivatives(sigma)[1]))

    def _quad(self, a: float, b: float) -> float:
        value, _ = integrate.quad(self.speed, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
        return value

    @cached_property
    def _breakpoints(self) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = self.native_bounds
        grid = np.linspace(lo, hi, self.breakpoint_count + 1)
        pieces = [self._quad(grid[i], grid[i + 1]) for i in range(self.breakpoint_count)]
        return grid, np.concatenate([[0.0], np.cumsum(pieces)])

    @property
    def length(self) -> float:
        return float(self._breakpoints[1][-1])

    def arclength(self, sigma: float) -> float:
        grid, cumulative = self._breakpoints
        idx = int(np.clip(np.searchsorted(grid, sigma) - 1, 0, len(grid) - 2))
        return float(cumulative[idx]) + self._quad(grid[idx], sigma)

    def parameter(self, s: float) -> float:
        """Native parameter at arclength s (Newton on the cached breakpoint table)."""
        grid, cumulative = self._breakpoints
        sigma = float(np.interp(s, cumulative, grid))
        if s < 0 or s > cumulative[-1]:
            # linear extension past the ends
            end = 0 if s < 0 else -1
            sigma = float(grid[end]) + (s - float(cumulative[end])) / self.speed(grid[end])
        tol = 1e-14 * max(1.0, float(cumulative[-1]))
        for _ in range(50):
            err = self.arclength(sigma) - s
            if abs(err) <= tol:
                break
            sigma -= err / self.speed(sigma)
        return sigma

    def local_frame(self, s: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        p, p1, p2 = self.curve_derivatives(self.parameter(s))
        speed = float(np.linalg.norm(p1))
        t = p1 / speed
        acc = (p2 - np.dot(p2, t) * t) / speed ** 2
        return p, t, acc

    def position(self, s: float) -> np.ndarray:
        return self.local_frame(s)[0]

    def tangent(self, s: float) -> np.ndarray:
        return self.local_frame(s)[1]

    def acceleration(self, s: float) -> np.ndarray:
        return self.local_frame(s)[2]

    def intersect(self, origin: np.ndarray, direction: np.ndarray,
                  t_min: float = RAY_T_MIN) -> List[Tuple[float, float]]:
        o = _as_point(origin)
        d = _as_point(direction)
        lo, hi = self.native_bounds
        pad = 1e-9 * (hi - lo)
        sigmas = np.linspace(lo - pad, hi + pad, 129)
        pts = self.curve_points(sigmas)
        values = d[0] * (pts[:, 1] - o[1]) - d[1] * (pts[:, 0] - o[0])

        def side(x: float) -> float:
            p = self.curve_derivatives(x)[0]
            return d[0] * (p[1] - o[1]) - d[1] * (p[0] - o[0])

        roots = [float(sigmas[i]) for i in range(len(sigmas)) if values[i] == 0.0]
        for i in range(len(sigmas) - 1):
            if values[i] * values[i + 1] < 0:
                roots.append(optimize.brentq(side, sigmas[i], sigmas[i + 1], xtol=1e-15))
        hits = []
        for sigma in sorted(roots):
            p = self.curve_derivatives(sigma)[0]
            t = float(np.dot(p - o, d))
            if t <= t_min:
                continue
            s = self._clamp(self.arclength(sigma))
            if s is not None:
                hits.append((t, s))
        return sorted(hits)


@dataclass(frozen=True)
class PolynomialGraphArc(ParametricArc):
    """Graph y = P(x), x in [x_start, x_end], placed by a rotation and a translation.

    counter_clockwise means the arc is traversed with increasing x.
    """

    coefficients: Tuple[float, ...]
    x_start: float
    x_end: float
    origin: Point = (0.0, 0.0)
    angle: float = 0.0
    counter_clockwise: bool = True

    kind = 'graph-polynomial'

    def __post_init__(self):
        if not self.x_end > self.x_start:
            raise ValidationError(f"Graph arc needs x_start < x_end, got {self.x_start}, {self.x_end}")

    @cached_property
    def _polys(self) -> Tuple[Polynomial, Polynomial, Polynomial, Polynomial]:
        p = Polynomial(self.coefficients)
        return p, p.deriv(1), p.deriv(2), p.deriv(3)

    @cached_property
    def _rotation(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    @property
    def _sign(self) -> float:
        return 1.0 if self.counter_clockwise else -1.0

    @property
    def native_bounds(self) -> Tuple[float, float]:
        if self.counter_clockwise:
            return self.x_start, self.x_end
        return -self.x_end, -self.x_start

    def curve_derivatives(self, sigma: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        p, dp, ddp, _ = self._polys
        x = self._sign * sigma
        local = np.array([x, p(x)])
        first = self._sign * np.array([1.0, dp(x)])
        second = np.array([0.0, ddp(x)])
        return (_as_point(self.origin) + self._rotation @ local,
                self._rotation @ first, self._rotation @ second)

    def curve_points(self, sigma: np.ndarray) -> np.ndarray:
        x = self._sign * np.asarray(sigma)
        local = np.vstack([x, self._polys[0](x)])
        return (self._rotation @ local).T + _as_point(self.origin)

    def curvature_rate(self, s: float) -> float:
        _, dp, ddp, dddp = self._polys
        x = self._sign * self.parameter(s)
        v = math.sqrt(1.0 + dp(x) ** 2)
        dkappa_dx = dddp(x) / v ** 3 - 3.0 * ddp(x) ** 2 * dp(x) / v ** 5
        return math.copysign(1.0, ddp(x)) * dkappa_dx * self._sign / v

    def reflected(self, isometry: Isometry) -> 'PolynomialGraphArc':
        origin = tuple(isometry.apply(self.origin))
        turn = isometry.axis_angle
        if isometry.is_reflection:
            return PolynomialGraphArc(tuple(-c for c in self.coefficients), self.x_start,
                                      self.x_end, origin, turn - self.angle,
                                      not self.counter_clockwise)
        return PolynomialGraphArc(self.coefficients, self.x_start, self.x_end, origin,
                                  self.angle + turn, self.counter_clockwise)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'coefficients': list(self.coefficients),
            'x_start': self.x_start,
            'x_end': self.x_end,
            'origin': list(self.origin),
            'angle': self.angle,
            'counter_clockwise': self.counter_clockwise,
        }


@dataclass(frozen=True)
class Segment(ArcSpec):
    """Flat boundary piece; heading fixes the direction of a zero-length flat."""

    start: Point
    end: Point
    heading: Optional[Point] = None

    kind = 'flat'

    @cached_property
    def _start(self) -> np.ndarray:
        return _as_point(self.start)

    @cached_property
    def _edge(self) -> np.ndarray:
        return _as_point(self.end) - self._start

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self._edge))

    @cached_property
    def direction(self) -> np.ndarray:
        if self.length > 1e-15:
            return self._edge / self.length
        if self.heading is None:
            raise ValidationError("Zero-length flat needs a heading")
        h = _as_point(self.heading)
        return h / np.linalg.norm(h)

    def position(self, s: float) -> np.ndarray:
        return self._start + s * self.direction

    def tangent(self, s: float) -> np.ndarray:
        return self.direction.copy()

    def acceleration(self, s: float) -> np.ndarray:
        return np.zeros(2)

    def signed_curvature(self, s: float) -> float:
        return 0.0

    def curvature_rate(self, s: float) -> float:
        return 0.0

    def intersect(self, origin: np.ndarray, direction: np.ndarray,
                  t_min: float = RAY_T_MIN) -> List[Tuple[float, float]]:
        if self.length <= 1e-15:
            return []
        d = _as_point(direction)
        e = self._edge
        denom = cross(d, e)
        if abs(denom) < 1e-300:
            return []
        w = self._start - _as_point(origin)
        t = cross(w, e) / denom
        u = cross(w, d) / denom
        if t <= t_min:
            return []
        s = self._clamp(u * self.length)
        return [] if s is None else [(t, s)]

    def reflected(self, isometry: Isometry) -> 'Segment':
        if isometry.is_reflection:
            heading = -isometry.rotate(self.direction)
            return Segment(tuple(isometry.apply(self.end)), tuple(isometry.apply(self.start)),
                           tuple(heading))
        return Segment(tuple(isometry.apply(self.start)), tuple(isometry.apply(self.end)),
                       tuple(isometry.rotate(self.direction)))

    def to_dict(self) -> Dict[str, Any]:
        data = {'start': list(self.start), 'end': list(self.end)}
        if self.heading is not None:
            data['heading'] = list(self.heading)
        return data


@dataclass(frozen=True, eq=False)
class BoundaryPoint:
    r: float
    position: np.ndarray
    tangent: np.ndarray
    inward_normal: np.ndarray
    curvature: float
    letter: int
    local_s: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'r': self.r,
            'position': self.position.tolist(),
            'tangent': self.tangent.tolist(),
            'inward_normal': self.inward_normal.tolist(),
            'curvature': self.curvature,
            'letter': self.letter,
            'local_s': self.local_s,
        }


@dataclass(frozen=True, eq=False)
class TableSpec:
    arc1: ArcSpec
    flat3: Segment
    arc2: ArcSpec
    flat4: Segment
    kind: str = 'stadium'
    name: str = 'table'
    warnings: List[str] = field(default_factory=list, compare=False)

    def piece(self, letter: int) -> ArcSpec:
        return {1: self.arc1, 2: self.arc2, 3: self.flat3, 4: self.flat4}[letter]

    @property
    def components(self) -> List[Tuple[int, ArcSpec]]:
        return [(letter, self.piece(letter)) for letter in BOUNDARY_ORDER]

    @cached_property
    def offsets(self) -> Dict[int, float]:
        offsets = {}
        total = 0.0
        for letter, piece in self.components:
            offsets[letter] = total
            total += piece.length
        return offsets

    @cached_property
    def perimeter(self) -> float:
        return sum(piece.length for _, piece in self.components)

    @property
    def gluing_points(self) -> Dict[str, np.ndarray]:
        return {
            'P14': self.arc1.start_point,
            'P13': self.arc1.end_point,
            'P23': self.arc2.start_point,
            'P24': self.arc2.end_point,
        }

    @property
    def gluing_offsets(self) -> List[float]:
        return [self.offsets[letter] for letter in BOUNDARY_ORDER]

    def normalize(self, r: float) -> float:
        r = r % self.perimeter
        return 0.0 if r >= self.perimeter else r

    def locate(self, r: float) -> Tuple[int, float]:
        """Boundary letter and local arclength of coordinate r."""
        r = self.normalize(r)
        for letter, piece in self.components:
            start = self.offsets[letter]
            if piece.length > 0 and start <= r < start + piece.length:
                return letter, r - start
        return 4, self.flat4.length

    def coordinate(self, letter: int, s: float) -> float:
        return self.normalize(self.offsets[letter] + s)

    def gluing_distance(self, r: float) -> float:
        """Arclength distance from r to the nearest gluing point."""
        r = self.normalize(r)
        return min(min(abs(r - g), self.perimeter - abs(r - g)) for g in self.gluing_offsets)

    def validate(self, c1_tolerance: Optional[float] = None, samples: int = 64) -> List[str]:
        """Check convexity, C1 gluing, orientation and simplicity.

        Returns the recorded warnings (curvature jumps); raises ValidationError.
        """
        tol = c1_tolerance if c1_tolerance is not None else SOLVER_CONFIG['c1_tolerance']
        problems = []
        warnings = []
        scale = max(1.0, self.perimeter)

        for letter in ARC_LETTERS:
            arc = self.piece(letter)
            if not arc.length > 0:
                problems.append(f"arc{letter} has zero length")
                continue
            ks = [arc.signed_curvature(s) for s in arc.sample_parameters(samples, midpoints=False)]
            if max(ks) >= -1e-9:
                problems.append(f"arc{letter} is not strictly convex (max signed curvature {max(ks):.3g})")

        joints = [(1, 3, 'P13'), (3, 2, 'P23'), (2, 4, 'P24'), (4, 1, 'P14')]
        for before, after, name in joints:
            a, b = self.piece(before), self.piece(after)
            gap = float(np.linalg.norm(a.end_point - b.start_point))
            if gap > 1e-9 * scale:
                problems.append(f"boundary is not closed at {name} (gap {gap:.3g})")
            ta, tb = a.tangent(a.length), b.tangent(0.0)
            angle = abs(math.atan2(cross(ta, tb), float(np.dot(ta, tb))))
            if angle > tol:
                problems.append(f"boundary is not C1 at {name} (angle {angle:.3g} rad)")
            jump = abs(a.curvature(a.length) - b.curvature(0.0))
            if jump < 1e-9:
                warnings.append(f"curvature matches across {name}")
                logger.warning(f"Table {self.name}: curvature matches across gluing point {name}")

        if self.kind == 'stadium':
            d3, d4 = self.flat3.direction, self.flat4.direction
            if abs(float(np.dot(d3, d4)) + 1.0) > tol:
                problems.append("stadium flats are not antiparallel")
            points = self.gluing_points
            for side in (points['P13'] - points['P14'], points['P24'] - points['P23']):
                if abs(float(np.dot(side, d3))) > 1e-9 * scale:
                    problems.append("stadium gluing points do not form a rectangle")
                    break

        polygon = self._polygon(samples)
        if len(polygon) >= 3:
            area = 0.5 * float(np.sum(polygon[:, 0] * np.roll(polygon[:, 1], -1)
                                      - np.roll(polygon[:, 0], -1) * polygon[:, 1]))
            if area <= 0:
                problems.append("boundary is not counter-clockwise")
            if _polygon_self_intersects(polygon):
                problems.append("boundary is not a simple closed curve")

        if problems:
            raise ValidationError(f"Invalid table {self.name}: " + "; ".join(problems),
                                  {'problems': problems})
        self.warnings[:] = warnings
        return warnings

    def _polygon(self, samples: int) -> np.ndarray:
        points = []
        for _, piece in self.components:
            if piece.length <= 1e-15:
                continue
            count = samples if piece.kind != 'flat' else 4
            for s in np.linspace(0.0, piece.length, count + 1)[:-1]:
                points.append(piece.position(s))
        return np.array(points)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'kind': self.kind,
            'arc1': self.arc1.to_dict(),
            'arc2': self.arc2.to_dict(),
            'flat3': self.flat3.to_dict(),
            'flat4': self.flat4.to_dict(),
        }


def _polygon_self_intersects(polygon: np.ndarray) -> bool:
    p = polygon
    q = np.roll(polygon, -1, axis=0)
    n = len(p)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]

    def orient(a, b, c):
        return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])

    o1 = orient(p[i], q[i], p[j])
    o2 = orient(p[i], q[i], q[j])
    o3 = orient(p[j], q[j], p[i])
    o4 = orient(p[j], q[j], q[i])
    return bool(np.any((o1 * o2 < 0) & (o3 * o4 < 0)))


def boundary_at(table: TableSpec, r: float) -> BoundaryPoint:
    """Position, frame and signed curvature at arclength coordinate r."""
    r = table.normalize(r)
    letter, s = table.locate(r)
    position, tangent, acceleration = table.piece(letter).local_frame(s)
    normal = rotate90(tangent)
    curvature = 0.0 if letter in FLAT_LETTERS else -float(np.dot(acceleration, normal))
    return BoundaryPoint(r, position, tangent, normal, curvature, letter, s)


# Canonical tables

def std_stadium(R: float = 1.0, L: float = 2.0, name: Optional[str] = None) -> TableSpec:
    """Semicircle caps of radius R joined by horizontal flats of length L."""
    if not R > 0 or L < 0:
        raise ValidationError(f"std-stadium needs R > 0 and L >= 0, got R={R}, L={L}")
    half = L / 2.0
    table = TableSpec(
        arc1=CircularArc((-half, 0.0), R, math.pi / 2, 3 * math.pi / 2),
        flat3=Segment((-half, -R), (half, -R), heading=(1.0, 0.0)),
        arc2=CircularArc((half, 0.0), R, -math.pi / 2, math.pi / 2),
        flat4=Segment((half, R), (-half, R), heading=(-1.0, 0.0)),
        kind='stadium',
        name=name or f"std-stadium(R={R:g},L={L:g})",
    )
    table.validate()
    return table


def weak_stadium() -> TableSpec:
    return std_stadium(1.0, 0.2, name='weak-stadium')


def squash_stadium(R1: float, R2: float, d: float, name: Optional[str] = None) -> TableSpec:
    """Two circles with centers d apart joined by their outer common tangents."""
    if not (R1 > 0 and R2 > 0 and d > abs(R1 - R2)):
        raise ValidationError(f"squash-stadium needs R1, R2 > 0 and d > |R1 - R2|, got {R1}, {R2}, {d}")
    nx = (R1 - R2) / d
    ny = math.sqrt(1.0 - nx * nx)
    alpha = math.acos(nx)
    c2 = np.array([d, 0.0])
    n_low = np.array([nx, -ny])
    n_up = np.array([nx, ny])
    table = TableSpec(
        arc1=CircularArc((0.0, 0.0), R1, alpha, 2 * math.pi - alpha),
        flat3=Segment(tuple(R1 * n_low), tuple(c2 + R2 * n_low)),
        arc2=CircularArc((d, 0.0), R2, -alpha, alpha),
        flat4=Segment(tuple(c2 + R2 * n_up), tuple(R1 * n_up)),
        kind='squash' if abs(R1 - R2) > 0 else 'stadium',
        name=name or f"squash-stadium(R1={R1:g},R2={R2:g},d={d:g})",
    )
    table.validate()
    return table


def squash_from_curvatures(tau_star: float, K1: float, K2: float,
                           name: Optional[str] = None) -> TableSpec:
    """Circular squash whose axis chord has length tau_star."""
    if not (K1 > 0 and K2 > 0):
        raise ValidationError(f"Curvatures must be positive, got {K1}, {K2}")
    R1, R2 = 1.0 / K1, 1.0 / K2
    return squash_stadium(R1, R2, tau_star - R1 - R2, name=name)


def squash_with_flat_angle(degrees: float, R1: float = 1.0, d: float = 2.0) -> TableSpec:
    """Squash table whose flats meet at the given angle."""
    R2 = R1 - d * math.sin(math.radians(degrees) / 2.0)
    return squash_stadium(R1, R2, d)


_NAME_PATTERN = re.compile(r'^\s*([a-z][a-z\-]*)\s*(?:\((.*)\))?\s*$')

_BUILTINS = {
    'std-stadium': (std_stadium, ('R', 'L')),
    'weak-stadium': (weak_stadium, ()),
    'squash-stadium': (squash_stadium, ('R1', 'R2', 'd')),
}


def table_from_name(text: str) -> TableSpec:
    """Build a canonical table from a name like 'std-stadium(R=1,L=2)'."""
    match = _NAME_PATTERN.match(text)
    if not match or match.group(1) not in _BUILTINS:
        raise ConfigError(f"Unknown table: {text}")
    factory, names = _BUILTINS[match.group(1)]
    kwargs = {}
    args = [a.strip() for a in (match.group(2) or '').split(',') if a.strip()]
    if len(args) > len(names):
        raise ConfigError(f"Too many parameters for {match.group(1)}: {text}")
    for position, arg in enumerate(args):
        key, _, value = arg.rpartition('=')
        key = key.strip() or names[position]
        if key not in names:
            raise ConfigError(f"Unknown parameter {key} for {match.group(1)}")
        try:
            kwargs[key] = float(value)
        except ValueError:
            raise ConfigError(f"Parameter {key} must be a number, got {value!r}")
    return factory(**kwargs)


def _strict(data: Dict[str, Any], allowed: Tuple[str, ...], where: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"Unknown keys in {where}: {', '.join(unknown)}")


def arc_from_dict(data: Dict[str, Any]) -> ArcSpec:
    kind = data.get('kind', 'circular')
    if kind == 'circular':
        _strict(data, ('kind', 'center', 'radius', 'start_angle', 'end_angle',
                       'counter_clockwise'), 'circular arc')
        return CircularArc(tuple(data['center']), float(data['radius']),
                           float(data['start_angle']), float(data['end_angle']),
                           bool(data.get('counter_clockwise', True)))
    if kind == 'graph-polynomial':
        _strict(data, ('kind', 'coefficients', 'x_start', 'x_end', 'origin', 'angle',
                       'counter_clockwise'), 'polynomial arc')
        return PolynomialGraphArc(tuple(float(c) for c in data['coefficients']),
                                  float(data['x_start']), float(data['x_end']),
                                  tuple(data.get('origin', (0.0, 0.0))),
                                  float(data.get('angle', 0.0)),
                                  bool(data.get('counter_clockwise', True)))
    raise ConfigError(f"Unknown arc kind: {kind}")


def table_from_dict(data: Dict[str, Any]) -> TableSpec:
    """Build a table from a parsed table file."""
    if 'builtin' in data:
        _strict(data, ('builtin', 'params'), 'table')
        params = data.get('params', {})
        name = data['builtin']
        if params:
            name += '(' + ','.join(f"{k}={v}" for k, v in params.items()) + ')'
        return table_from_name(name)
    _strict(data, ('name', 'kind', 'arc1', 'arc2', 'flat3', 'flat4'), 'table')
    try:
        flats = {}
        for key in ('flat3', 'flat4'):
            _strict(data[key], ('start', 'end', 'heading'), key)
            heading = data[key].get('heading')
            flats[key] = Segment(tuple(data[key]['start']), tuple(data[key]['end']),
                                 tuple(heading) if heading is not None else None)
        table = TableSpec(arc1=arc_from_dict(data['arc1']), flat3=flats['flat3'],
                          arc2=arc_from_dict(data['arc2']), flat4=flats['flat4'],
                          kind=data.get('kind', 'stadium'), name=data.get('name', 'table'))
    except KeyError as e:
        raise ConfigError(f"Missing table field: {e}")
    if table.kind not in ('stadium', 'squash'):
        raise ConfigError(f"Unknown table kind: {table.kind}")
    table.validate()
    return table


def load_table(source: Union[str, Dict[str, Any]]) -> TableSpec:
    """Table from a builtin name, a JSON table file, or an already parsed dict."""
    if isinstance(source, dict):
        return table_from_dict(source)
    path = Path(source)
    if path.suffix == '.json' or path.is_file():
        try:
            with open(path) as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read table file {source}: {e}")
        return table_from_dict(data)
    return table_from_name(source)


# Global geometry

def table_diameter(table: TableSpec, samples: int = 512) -> Tuple[float, Dict[str, Any]]:
    """Largest distance between two boundary points.

    Dense sampling picks the best pair, L-BFGS-B refines it on the two pieces.
    """
    pieces = [(letter, piece) for letter, piece in table.components if piece.length > 0]
    labels, params, points = [], [], []
    for letter, piece in pieces:
        count = max(8, int(samples * piece.length / table.perimeter))
        for s in piece.sample_parameters(count, midpoints=False):
            labels.append(letter)
            params.append(s)
            points.append(piece.position(s))
    points = np.array(points)
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    i, j = np.unravel_index(np.argmax(dist), dist.shape)
    a, b = table.piece(labels[i]), table.piece(labels[j])

    def objective(x):
        pa, ta, _ = a.local_frame(x[0])
        pb, tb, _ = b.local_frame(x[1])
        chord = pa - pb
        d = float(np.linalg.norm(chord))
        u = chord / d
        return -d, np.array([-float(np.dot(ta, u)), float(np.dot(tb, u))])

    result = optimize.minimize(objective, [params[i], params[j]], jac=True, method='L-BFGS-B',
                               bounds=[(0.0, a.length), (0.0, b.length)],
                               options={'ftol': 1e-16, 'gtol': 1e-13, 'maxiter': 500})
    diameter = max(float(dist[i, j]), -float(result.fun))
    witness = {
        'letters': (labels[i], labels[j]),
        's': tuple(float(v) for v in result.x),
    }
    return diameter, witness


@dataclass
class DefocusingReport:
    holds: bool
    worst_margin: float
    witness: Dict[str, Any]
    doubly: bool
    grid: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            'holds': self.holds,
            'worst_margin': self.worst_margin,
            'witness': self.witness,
            'doubly': self.doubly,
            'grid': self.grid,
        }


def _margin_grid(arc_a: ArcSpec, arc_b: ArcSpec, grid: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    sa = arc_a.sample_parameters(grid)
    sb = arc_b.sample_parameters(grid)

    def sample(arc, ss):
        pos, nor, kap = [], [], []
        for s in ss:
            p, t, _ = arc.local_frame(s)
            pos.append(p)
            nor.append(rotate90(t))
            kap.append(arc.curvature(s))
        return np.array(pos), np.array(nor), np.array(kap)

    pa, na, ka = sample(arc_a, sa)
    pb, nb, kb = sample(arc_b, sb)
    chord = pb[None, :, :] - pa[:, None, :]
    length = np.linalg.norm(chord, axis=-1)
    if np.min(length) < 1e-12:
        raise DegenerateChord("Arcs overlap: chord shorter than 1e-12",
                              {'min_chord': float(np.min(length))})
    u = chord / length[..., None]
    qa = np.maximum(0.0, 2.0 * np.einsum('ik,ijk->ij', na, u) / ka[:, None])
    qb = np.maximum(0.0, -2.0 * np.einsum('jk,ijk->ij', nb, u) / kb[None, :])
    return length - np.maximum(qa, qb), sa, sb


def _pair_margin(arc_a: ArcSpec, arc_b: ArcSpec, sa: float, sb: float) -> float:
    pa, ta, _ = arc_a.local_frame(sa)
    pb, tb, _ = arc_b.local_frame(sb)
    chord = pb - pa
    length = float(np.linalg.norm(chord))
    if length < 1e-12:
        return 0.0
    u = chord / length
    qa = max(0.0, 2.0 * float(np.dot(rotate90(ta), u)) / arc_a.curvature(sa))
    qb = max(0.0, -2.0 * float(np.dot(rotate90(tb), u)) / arc_b.curvature(sb))
    return length - max(qa, qb)


def check_defocusing(table: TableSpec, grid: Optional[int] = None,
                     doubly: Optional[bool] = None, across: int = 3) -> DefocusingReport:
    """Worst margin of |P1P2| - max(|P1Q1|, |P2Q2|) over arc pairs.

    Q_i is the second intersection of the chord with the osculating circle at
    P_i. The doubly variant also pairs the reflected arcs of the double cover.
    """
    grid = grid or SOLVER_CONFIG['defocusing_grid']
    if doubly is None:
        doubly = table.kind == 'squash'
    first = [('1', table.arc1)]
    second = [('2', table.arc2)]
    if doubly:
        cover = double_cover(table, across)
        first.append(('~1', cover.reflected_arc1))
        second.append(('~2', cover.reflected_arc2))

    worst = None
    for name_a, arc_a in first:
        for name_b, arc_b in second:
            margins, sa, sb = _margin_grid(arc_a, arc_b, grid)
            i, j = np.unravel_index(np.argmin(margins), margins.shape)
            if worst is None or margins[i, j] < worst[0]:
                worst = (float(margins[i, j]), name_a, arc_a, name_b, arc_b, sa[i], sb[j])

    margin, name_a, arc_a, name_b, arc_b, sa, sb = worst
    result = optimize.minimize(lambda x: _pair_margin(arc_a, arc_b, x[0], x[1]), [sa, sb],
                               method='L-BFGS-B',
                               bounds=[(0.0, arc_a.length), (0.0, arc_b.length)])
    if result.fun < margin:
        margin = float(result.fun)
        sa, sb = (float(v) for v in result.x)

    witness = {
        'arcs': (name_a, name_b),
        's': (float(sa), float(sb)),
        'points': (arc_a.position(sa).tolist(), arc_b.position(sb).tolist()),
    }
    holds = margin > 1e-12
    logger.info(f"Defocusing on {table.name}: holds={holds}, worst margin {margin:.6g}")
    return DefocusingReport(holds, margin, witness, doubly, grid)


@dataclass(frozen=True, eq=False)
class DoubleCover:
    """Base table plus its mirror image across one flat."""

    base: TableSpec
    across: int
    reflection: Isometry
    mirror: TableSpec

    @property
    def reflected_arc1(self) -> ArcSpec:
        return self.mirror.arc2

    @property
    def reflected_arc2(self) -> ArcSpec:
        return self.mirror.arc1

    @property
    def matrix(self) -> np.ndarray:
        return self.reflection.matrix()

    @property
    def arcs(self) -> List[Tuple[str, ArcSpec]]:
        return [('1', self.base.arc1), ('2', self.base.arc2),
                ('~1', self.reflected_arc1), ('~2', self.reflected_arc2)]

    @property
    def gluing_points(self) -> Dict[str, np.ndarray]:
        points = dict(self.base.gluing_points)
        for name, p in self.base.gluing_points.items():
            points[name + '~'] = self.reflection.apply(p)
        return points


def double_cover(table: TableSpec, across: int = 3) -> DoubleCover:
    """Attach the mirror image of the table across flat 3 or flat 4."""
    if across not in FLAT_LETTERS:
        raise ValidationError(f"Double cover is taken across flat 3 or 4, got {across}")
    flat = table.piece(across)
    reflection = Isometry.reflection(flat.start_point, flat.direction)
    mirror = TableSpec(
        arc1=table.arc2.reflected(reflection),
        flat3=table.flat3.reflected(reflection),
        arc2=table.arc1.reflected(reflection),
        flat4=table.flat4.reflected(reflection),
        kind=table.kind,
        name=f"{table.name}~{across}",
    )
    return DoubleCover(table, across, reflection, mirror)
