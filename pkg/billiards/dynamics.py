"""
Billiard map, free path derivatives and the map differential
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import SOLVER_CONFIG
from .errors import GluingHit, InfeasibleChord, TangentialShot, ValidationError
from .geometry import FLAT_LETTERS, TableSpec, boundary_at, rotate90

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhasePoint:
    """Collision coordinates: arclength r and angle phi to the inward normal."""

    r: float
    phi: float

    def __post_init__(self):
        if abs(self.phi) > math.pi / 2 + 1e-15:
            raise ValidationError(f"phi must lie in [-pi/2, pi/2], got {self.phi}")

    def to_dict(self) -> Dict[str, float]:
        return {'r': self.r, 'phi': self.phi}


def phase_point(table: TableSpec, r: float, phi: float) -> PhasePoint:
    return PhasePoint(table.normalize(r), phi)


@dataclass(frozen=True, eq=False)
class MapStep:
    z: PhasePoint
    z1: PhasePoint
    tau: float
    letter: int
    position: np.ndarray
    hit_position: np.ndarray
    incoming: np.ndarray
    reflection_residual: float


@dataclass(frozen=True, eq=False)
class Jacobian2:
    """Differential of the billiard map in (r, phi) coordinates."""

    matrix: np.ndarray
    phi: float
    phi1: float

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))

    @property
    def expected_determinant(self) -> float:
        return math.cos(self.phi) / math.cos(self.phi1)

    def to_list(self) -> List[List[float]]:
        return self.matrix.tolist()


@dataclass(frozen=True)
class PathHessian:
    """Free path tau(r, r1) and its first and second partials."""

    tau: float
    d_r: float
    d_r1: float
    d_rr: float
    d_rr1: float
    d_r1r1: float
    phi: float
    phi1: float

    def to_dict(self) -> Dict[str, float]:
        return {
            'tau': self.tau, 'd_r': self.d_r, 'd_r1': self.d_r1,
            'd_rr': self.d_rr, 'd_rr1': self.d_rr1, 'd_r1r1': self.d_r1r1,
            'phi': self.phi, 'phi1': self.phi1,
        }


def outgoing_direction(tangent: np.ndarray, phi: float) -> np.ndarray:
    return math.sin(phi) * tangent + math.cos(phi) * rotate90(tangent)


def angle_of(tangent: np.ndarray, direction: np.ndarray) -> float:
    """Angle between an outgoing direction and the inward normal."""
    return math.atan2(float(np.dot(tangent, direction)),
                      float(np.dot(rotate90(tangent), direction)))


def reflection_residual(table: TableSpec, incoming: np.ndarray, z1: PhasePoint) -> float:
    """Gap between the direction leaving z1 and the mirror image of incoming.

    The boundary frame is rebuilt from the stored coordinates, so a wrong sign
    or a wrapped r in z1 shows up here.
    """
    landing = boundary_at(table, z1.r)
    normal = landing.inward_normal
    reflected = incoming - 2.0 * float(np.dot(incoming, normal)) * normal
    return float(np.linalg.norm(outgoing_direction(landing.tangent, z1.phi) - reflected))


def cast_ray(table: TableSpec, origin: np.ndarray,
             direction: np.ndarray) -> Tuple[float, int, float]:
    """First boundary hit (t, letter, local s) of a ray from inside the table."""
    best = None
    for letter, piece in table.components:
        for t, s in piece.intersect(origin, direction):
            if best is None or t < best[0]:
                best = (t, letter, s)
    if best is None:
        raise InfeasibleChord("Ray leaves the table without hitting the boundary",
                              {'origin': list(origin), 'direction': list(direction)})
    return best


def billiard_map(table: TableSpec, z: PhasePoint,
                 gluing_tolerance: Optional[float] = None) -> MapStep:
    """Next collision of the trajectory leaving z, and the chord length."""
    if abs(z.phi) >= math.pi / 2 - SOLVER_CONFIG['tangential_tolerance']:
        raise TangentialShot(f"Tangential departure at r={z.r:.17g}", z.to_dict())
    tol = gluing_tolerance if gluing_tolerance is not None else SOLVER_CONFIG['gluing_tolerance']
    start = boundary_at(table, z.r)
    v = outgoing_direction(start.tangent, z.phi)
    tau, letter, s = cast_ray(table, start.position, v)
    r1 = table.coordinate(letter, s)
    if table.gluing_distance(r1) < tol:
        raise GluingHit(f"Trajectory from r={z.r:.17g} lands on a gluing point",
                        {'r1': r1, **z.to_dict()})
    hit = boundary_at(table, r1)
    sin1 = float(np.dot(hit.tangent, v))
    cos1 = -float(np.dot(hit.inward_normal, v))
    z1 = phase_point(table, r1, math.atan2(sin1, cos1))
    return MapStep(z, z1, tau, letter, start.position, hit.position, v,
                   reflection_residual(table, v, z1))


def trajectory(table: TableSpec, z: PhasePoint, steps: int) -> List[MapStep]:
    path = []
    for _ in range(steps):
        step = billiard_map(table, z)
        path.append(step)
        z = step.z1
    return path


def map_differential(table: TableSpec, z: PhasePoint) -> Jacobian2:
    """D_z F with signed curvatures K at z and K1 at the next collision."""
    step = billiard_map(table, z)
    k = boundary_at(table, z.r).curvature
    k1 = boundary_at(table, step.z1.r).curvature
    tau = step.tau
    c, c1 = math.cos(z.phi), math.cos(step.z1.phi)
    matrix = -np.array([
        [tau * k + c, tau],
        [tau * k * k1 + k * c1 + k1 * c, tau * k1 + c1],
    ]) / c1
    return Jacobian2(matrix, z.phi, step.z1.phi)


def chord_jet(pa: np.ndarray, ta: np.ndarray, acc_a: np.ndarray,
              pb: np.ndarray, tb: np.ndarray, acc_b: np.ndarray) -> Tuple[float, ...]:
    """Length of the chord A->B and its arclength derivatives up to order two.

    Returns (tau, d_s, d_t, d_ss, d_st, d_tt) where s moves A and t moves B.
    """
    chord = pb - pa
    tau = float(np.linalg.norm(chord))
    u = chord / tau
    ta_u = float(np.dot(ta, u))
    tb_u = float(np.dot(tb, u))
    d_ss = (1.0 - ta_u * ta_u) / tau - float(np.dot(acc_a, u))
    d_st = -(float(np.dot(ta, tb)) - ta_u * tb_u) / tau
    d_tt = (1.0 - tb_u * tb_u) / tau + float(np.dot(acc_b, u))
    return tau, -ta_u, tb_u, d_ss, d_st, d_tt


def free_path_jet(table: TableSpec, r: float, r1: float) -> PathHessian:
    """Free path between boundary coordinates r and r1 with its partials."""
    a = boundary_at(table, r)
    b = boundary_at(table, r1)
    if a.letter in FLAT_LETTERS and a.letter == b.letter:
        raise InfeasibleChord(f"Chord between two points of flat {a.letter}")
    pa, ta, acc_a = table.piece(a.letter).local_frame(a.local_s)
    pb, tb, acc_b = table.piece(b.letter).local_frame(b.local_s)
    tau, d_s, d_t, d_ss, d_st, d_tt = chord_jet(pa, ta, acc_a, pb, tb, acc_b)
    if tau < 1e-12:
        raise InfeasibleChord("Chord has zero length")
    u = (pb - pa) / tau
    if float(np.dot(a.inward_normal, u)) <= 0 or float(np.dot(b.inward_normal, u)) >= 0:
        raise InfeasibleChord(f"Chord from r={r:.17g} to r1={r1:.17g} leaves the table")
    t_hit, letter, s = cast_ray(table, pa, u)
    if abs(t_hit - tau) > 1e-9 * max(1.0, tau):
        raise InfeasibleChord(f"Chord from r={r:.17g} to r1={r1:.17g} crosses the boundary",
                              {'first_hit': table.coordinate(letter, s)})
    phi = angle_of(ta, u)
    phi1 = math.atan2(float(np.dot(tb, u)), -float(np.dot(b.inward_normal, u)))
    return PathHessian(tau, d_s, d_t, d_ss, d_st, d_tt, phi, phi1)


def expansion_factor(table: TableSpec, z: PhasePoint) -> float:
    """One-step p-norm expansion |1 + tau B+| of a flat wave front hitting z.

    B+ = -2/d with focal length d = cos(phi)/|K|.
    """
    point = boundary_at(table, z.r)
    if point.letter in FLAT_LETTERS:
        raise ValidationError(f"Expansion factor needs a point on a convex arc, got flat {point.letter}")
    step = billiard_map(table, z)
    d = math.cos(z.phi) / abs(point.curvature)
    return abs(1.0 - 2.0 * step.tau / d)
