"""
Deformation families, Lagrange cancellations and unfolded-channel orbits
"""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial

from .config import SOLVER_CONFIG
from .dynamics import PhasePoint, angle_of
from .errors import (InfeasibleChord, NearUnitLambda, NoConvergence, OrbitBifurcation,
                     ValidationError)
from .geometry import (ARC_LETTERS, ArcSpec, DefocusingReport, Isometry, ParametricArc,
                       TableSpec, check_defocusing, cross, rotate90)
from .invariants import analyze_period_two
from .numerics import CompensatedSum, inverse_n_fit, loglinear_fit
from .orbits import Chord, ChordProblem, OrbitResult, palindromic_family, solve_named

logger = logging.getLogger(__name__)

DISPLACEMENT_KINDS = ('zero', 'bump', 'polynomial')


@dataclass(frozen=True)
class DisplacementSpec:
    """Normal displacement f(s) along one arc, s the base arclength.

    bump: amplitude * v**power * exp(-v**2 / 2) with v = (s - center) / width
    polynomial: sum coefficients[k] * (s - center)**k
    """

    kind: str = 'zero'
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0
    power: int = 0
    coefficients: Tuple[float, ...] = ()
    reverse_length: Optional[float] = None

    def __post_init__(self):
        if self.kind not in DISPLACEMENT_KINDS:
            raise ValidationError(f"Unknown displacement kind: {self.kind}")
        if self.kind == 'bump' and not self.width > 0:
            raise ValidationError(f"Bump width must be positive, got {self.width}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DisplacementSpec':
        allowed = {'kind', 'amplitude', 'center', 'width', 'power', 'coefficients'}
        unknown = set(data) - allowed
        if unknown:
            raise ValidationError(f"Unknown displacement keys: {sorted(unknown)}")
        values = dict(data)
        if 'coefficients' in values:
            values['coefficients'] = tuple(float(c) for c in values['coefficients'])
        return cls(**values)

    def reversed(self, length: float) -> 'DisplacementSpec':
        """Same displacement read with s -> length - s."""
        if self.reverse_length is not None:
            return DisplacementSpec(self.kind, self.amplitude, self.center, self.width,
                                    self.power, self.coefficients, None)
        return DisplacementSpec(self.kind, self.amplitude, self.center, self.width,
                                self.power, self.coefficients, length)

    def _bump_polys(self) -> List[Polynomial]:
        # d^k/dv^k [q(v) exp(-v^2/2)] = q_k(v) exp(-v^2/2), q_{k+1} = q_k' - v q_k
        q = Polynomial([0.0] * self.power + [self.amplitude])
        polys = [q]
        for _ in range(2):
            q = q.deriv() - Polynomial([0.0, 1.0]) * q
            polys.append(q)
        return polys

    def derivatives(self, s: float) -> Tuple[float, float, float]:
        """f, f' and f'' at base arclength s."""
        sign = 1.0
        if self.reverse_length is not None:
            s = self.reverse_length - s
            sign = -1.0
        if self.kind == 'zero':
            return 0.0, 0.0, 0.0
        if self.kind == 'bump':
            v = (s - self.center) / self.width
            g = math.exp(-0.5 * v * v)
            q0, q1, q2 = self._bump_polys()
            return (q0(v) * g, sign * q1(v) * g / self.width, q2(v) * g / self.width ** 2)
        p = Polynomial(self.coefficients or (0.0,))
        x = s - self.center
        return float(p(x)), sign * float(p.deriv(1)(x)), float(p.deriv(2)(x))

    def __call__(self, s: float) -> float:
        return self.derivatives(s)[0]

    def to_dict(self) -> Dict[str, Any]:
        data = {'kind': self.kind}
        if self.kind == 'bump':
            data.update(amplitude=self.amplitude, center=self.center, width=self.width,
                        power=self.power)
        elif self.kind == 'polynomial':
            data.update(center=self.center, coefficients=list(self.coefficients))
        return data


def quartic_well(length: float, amplitude: float = 1.0, flat_order: int = 0) -> DisplacementSpec:
    """amplitude * v**flat_order * (h^2 - v^2)^2 / h^(4 + flat_order), h = length / 2.

    Vanishes with its first derivative at both arc ends; flat_order > 0 also
    flattens it at the middle.
    """
    h = length / 2.0
    well = Polynomial([h ** 4, 0.0, -2.0 * h ** 2, 0.0, 1.0])
    poly = Polynomial([0.0] * flat_order + [1.0]) * well * (amplitude / h ** (4 + flat_order))
    return DisplacementSpec('polynomial', center=h, coefficients=tuple(poly.coef))


class DisplacedArc(ParametricArc):
    """Base arc pushed outward by mu * f(u), u the base arclength."""

    kind = 'displaced'

    def __init__(self, base: ArcSpec, displacement: DisplacementSpec, mu: float):
        self.base = base
        self.displacement = displacement
        self.mu = mu

    @property
    def native_bounds(self) -> Tuple[float, float]:
        return 0.0, self.base.length

    def curve_derivatives(self, sigma: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        c, t, acc = self.base.local_frame(sigma)
        n = rotate90(t)
        kappa = -float(np.dot(acc, n))
        kappa1 = -self.base.curvature_rate(sigma)
        f, f1, f2 = self.displacement.derivatives(sigma)
        mu = self.mu
        p = c - mu * f * n
        p1 = (1.0 - mu * f * kappa) * t - mu * f1 * n
        p2 = (-mu * (2.0 * f1 * kappa + f * kappa1) * t
              - (kappa * (1.0 - mu * f * kappa) + mu * f2) * n)
        return p, p1, p2

    def base_normal_product(self, s: float) -> Tuple[float, float]:
        """(f(u), <N_base(u), N(u)>) at arclength s of the displaced arc."""
        u = self.parameter(s)
        _, p1, _ = self.curve_derivatives(u)
        tangent = p1 / np.linalg.norm(p1)
        return self.displacement(u), float(np.dot(self.base.normal(u), rotate90(tangent)))

    def reflected(self, isometry: Isometry) -> 'DisplacedArc':
        displacement = self.displacement
        if isometry.is_reflection:
            displacement = displacement.reversed(self.base.length)
        return DisplacedArc(self.base.reflected(isometry), displacement, self.mu)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'base': self.base.to_dict(),
                'displacement': self.displacement.to_dict(), 'mu': self.mu}


@dataclass(frozen=True, eq=False)
class DeformationFamily:
    base: TableSpec
    displacements: Dict[int, DisplacementSpec]
    mu_range: Tuple[float, float] = (-1.0, 1.0)
    _tables: Dict[float, TableSpec] = field(default_factory=dict, repr=False)
    _lock: Any = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        tol = SOLVER_CONFIG['c1_tolerance'] * 10
        for letter, spec in self.displacements.items():
            if letter not in ARC_LETTERS:
                raise ValidationError(f"Displacements apply to arcs 1 and 2, got {letter}")
            length = self.base.piece(letter).length
            for s in (0.0, length):
                f, f1, _ = spec.derivatives(s)
                if abs(f) > tol or abs(f1) > tol:
                    raise ValidationError(
                        f"Displacement on arc{letter} breaks C1 gluing at s={s:.6g} "
                        f"(f={f:.3g}, f'={f1:.3g})")

    def displacement(self, letter: int) -> DisplacementSpec:
        return self.displacements.get(letter, DisplacementSpec())

    def table_at(self, mu: float) -> TableSpec:
        lo, hi = self.mu_range
        if not lo <= mu <= hi:
            raise ValidationError(f"mu={mu} outside {self.mu_range}")
        if mu == 0.0:
            return self.base
        with self._lock:
            if mu not in self._tables:
                arcs = {letter: DisplacedArc(self.base.piece(letter), self.displacement(letter), mu)
                        if letter in self.displacements else self.base.piece(letter)
                        for letter in ARC_LETTERS}
                self._tables[mu] = TableSpec(arcs[1], self.base.flat3, arcs[2], self.base.flat4,
                                             kind=self.base.kind, name=f"{self.base.name}@{mu:g}")
            return self._tables[mu]

    def check(self, mu: float, grid: Optional[int] = None) -> DefocusingReport:
        """Validate the deformed table and run the defocusing test on it."""
        table = self.table_at(mu)
        table.validate()
        report = check_defocusing(table, grid=grid or 64)
        if not report.holds:
            logger.warning(f"{table.name}: deformed table is not defocusing "
                           f"(margin {report.worst_margin:.3g})")
        return report


def normal_displacement(family: DeformationFamily, mu: float, r: float) -> float:
    """Deformation function n(mu, r) = <d Phi / d mu, N>."""
    table = family.table_at(mu)
    letter, s = table.locate(r)
    if letter not in ARC_LETTERS:
        return 0.0
    arc = table.piece(letter)
    if isinstance(arc, DisplacedArc):
        f, product = arc.base_normal_product(s)
        return f * product
    return family.displacement(letter)(s)


def deformation_G(family: DeformationFamily, mu: float, z: PhasePoint) -> float:
    return normal_displacement(family, mu, z.r) * math.cos(z.phi)


def orbit_G_sum(family: DeformationFamily, mu: float, orbit: OrbitResult) -> float:
    return CompensatedSum().extend(deformation_G(family, mu, z) for z in orbit.points).value


def _seed_of(code: str, orbit: OrbitResult) -> np.ndarray:
    if code.strip().startswith('gamma'):
        return orbit.diagnostics['cover_parameters']
    return orbit.site_parameters


def isospectral_derivative_check(family: DeformationFamily,
                                 code: Union[str, Sequence[str]], mu: float = 0.0,
                                 h: float = 1e-5) -> Dict[str, Any]:
    """Compare half the derivative of the maximal length with the sum of G.

    With several candidate codes the maximal one is taken at mu - h, mu and
    mu + h; a change of maximizer or a tie raises OrbitBifurcation.
    """
    codes = [code] if isinstance(code, str) else list(code)
    base_orbits = {c: solve_named(family.table_at(mu), c) for c in codes}

    def solve(args):
        c, nu = args
        return (c, nu), solve_named(family.table_at(nu), c, seed=_seed_of(c, base_orbits[c]))

    jobs = [(c, nu) for c in codes for nu in (mu - h, mu + h)]
    with ThreadPoolExecutor(max_workers=SOLVER_CONFIG['workers']) as pool:
        solved = dict(pool.map(solve, jobs))

    tie = SOLVER_CONFIG['tie_tolerance']
    leaders = []
    for nu, lengths in ((mu - h, {c: solved[(c, mu - h)].total_length for c in codes}),
                        (mu, {c: base_orbits[c].total_length for c in codes}),
                        (mu + h, {c: solved[(c, mu + h)].total_length for c in codes})):
        best = max(lengths.values())
        top = sorted(c for c, length in lengths.items() if best - length <= tie)
        if len(top) > 1:
            raise OrbitBifurcation(f"Codes {top} tie for the maximum at mu={nu:.6g}",
                                   {'mu': nu, 'lengths': lengths})
        leaders.append(top[0])
    if len(set(leaders)) > 1:
        raise OrbitBifurcation(f"Maximal code changes across [{mu - h:.6g}, {mu + h:.6g}]: {leaders}")

    winner = leaders[1]
    lower, upper = solved[(winner, mu - h)], solved[(winner, mu + h)]
    lhs = 0.5 * (upper.total_length - lower.total_length) / (2.0 * h)
    rhs = orbit_G_sum(family, mu, base_orbits[winner])
    scale = max(abs(lhs), abs(rhs))
    rel_err = 0.0 if scale == 0.0 else abs(lhs - rhs) / scale
    logger.info(f"{winner} at mu={mu:g}: half derivative {lhs:.12g}, sum G {rhs:.12g}, "
                f"relative error {rel_err:.3g}")
    return {'code': winner, 'mu': mu, 'h': h, 'lhs': lhs, 'rhs': rhs, 'rel_err': rel_err}


# Lagrange coefficients

@dataclass
class LagrangeCoeffs:
    m: int
    lam: float
    A: List[float]

    @property
    def weighted(self) -> bool:
        return self.m % 2 == 0

    def weight(self, u: float) -> float:
        return math.cos(u) if self.weighted else 1.0

    def identity_residuals(self) -> List[float]:
        """sum_j A_j lam^(-kj) / w(lam^-j) * w(1), k = 0..m-1; all vanish."""
        w1 = self.weight(1.0)
        return [CompensatedSum().extend(
            a * self.lam ** (-k * j) * w1 / self.weight(self.lam ** -j)
            for j, a in enumerate(self.A)).value for k in range(self.m)]

    def unweighted_sums(self) -> List[float]:
        return [CompensatedSum().extend(a * self.lam ** (-k * j) for j, a in enumerate(self.A)).value
                for k in range(self.m)]

    def to_dict(self) -> Dict[str, Any]:
        return {'m': self.m, 'lambda': self.lam, 'A': self.A}


def lagrange_coeffs(m: int, lam: float) -> LagrangeCoeffs:
    """Coefficients cancelling the first m powers of lam**-j; A_0 = -1."""
    if m < 2:
        raise ValidationError(f"m must be at least 2, got {m}")
    if lam - 1.0 < 1e-6:
        raise NearUnitLambda(f"lambda={lam} is too close to 1")

    def w(u: float) -> float:
        return math.cos(u) if m % 2 == 0 else 1.0

    coefficients = [-1.0]
    for j in range(1, m + 1):
        product = 1.0
        for i in range(1, m + 1):
            if i != j:
                product *= (lam ** i - 1.0) / (lam ** (i - j) - 1.0)
        coefficients.append(w(lam ** -j) / w(1.0) * product)
    return LagrangeCoeffs(m, lam, coefficients)


# Cancellation sums over palindromic orbits

def _G_base(table: TableSpec, displacements: Dict[int, DisplacementSpec], z: PhasePoint) -> float:
    letter, s = table.locate(z.r)
    if letter not in displacements:
        return 0.0
    return displacements[letter](s) * math.cos(z.phi)


def palindromic_sums(table: TableSpec, displacements: Dict[int, DisplacementSpec],
                     orbit: OrbitResult, n: int, ell: int) -> Dict[str, float]:
    """S_n(ell) by the head formula and by the complement formula."""
    if n < 2 * ell:
        raise ValidationError(f"S_n(ell) needs n >= 2 ell, got n={n}, ell={ell}")

    def G(label: str) -> float:
        return _G_base(table, displacements, orbit.label_point(label))

    head = CompensatedSum(-G('x0')).add(-2.0 * G('y0'))
    for k in range(1, ell + 1):
        head.add(-2.0 * G(f'x{k}')).add(-2.0 * G(f'y{k}'))
    complement = CompensatedSum()
    complement.extend(G(f'x{k}') for k in range(ell + 1, n - ell + 2))
    complement.extend(G(f'y{k}') for k in range(ell + 1, n - ell + 1))
    total = CompensatedSum().extend(_G_base(table, displacements, z) for z in orbit.points)
    return {'head': head.value, 'complement': complement.value, 'orbit_sum': total.value}


def cancellation_sums(table: TableSpec, displacements: Dict[int, DisplacementSpec], ell: int,
                      m: int, lam: Optional[float] = None) -> Dict[str, Any]:
    """A-weighted combination of S_{2 ell + j}(ell), j = 0..m."""
    lam = lam or analyze_period_two(table).lam
    coeffs = lagrange_coeffs(m, lam)
    orbits = palindromic_family(table, 2 * ell + m)
    sums = []
    for j in range(m + 1):
        n = 2 * ell + j
        if n not in orbits:
            raise NoConvergence(f"Palindromic orbit n={n} is unavailable")
        sums.append(palindromic_sums(table, displacements, orbits[n], n, ell))
    combo = CompensatedSum().extend(a * s['head'] for a, s in zip(coeffs.A, sums)).value
    combo_complement = CompensatedSum().extend(
        a * s['complement'] for a, s in zip(coeffs.A, sums)).value
    return {
        'ell': ell,
        'm': m,
        'S': [s['head'] for s in sums],
        'S_complement': [s['complement'] for s in sums],
        'orbit_G_sums': [s['orbit_sum'] for s in sums],
        'combo': combo,
        'combo_complement': combo_complement,
        'predicted_bound': lam ** (-m * ell),
        'coefficients': coeffs.A,
    }


def cancellation_sweep(table: TableSpec, displacements: Dict[int, DisplacementSpec],
                       ells: Sequence[int], m: int) -> Dict[str, Any]:
    """Decay of the cancellation combination in ell."""
    lam = analyze_period_two(table).lam
    palindromic_family(table, 2 * max(ells) + m)
    results = [cancellation_sums(table, displacements, ell, m, lam) for ell in ells]
    combos = [r['combo'] for r in results]
    slope, _, rms = loglinear_fit(list(ells), combos)
    ratios = [b / a for a, b in zip(combos, combos[1:])]
    coeffs = lagrange_coeffs(m, lam)
    if coeffs.weighted:
        logger.info(f"m={m}: unweighted sums {coeffs.unweighted_sums()}")
    logger.info(f"Cancellation exponent {-slope:.6g} vs m log lambda {m * math.log(lam):.6g}")
    return {
        'ells': list(ells),
        'm': m,
        'lambda': lam,
        'combos': combos,
        'exponent': -slope,
        'expected_exponent': m * math.log(lam),
        'ratios': ratios,
        'expected_ratio': lam ** -m,
        'fit_rms': rms,
        'rows': results,
    }


# Unfolded channel

@dataclass
class ChannelOrbit:
    n: int
    m: Optional[int]
    s_bar: float
    t_bar: float
    t_bar2: Optional[float]
    phi_bar: float
    length: float
    perpendicularity: float
    equal_angle: Optional[float] = None
    grad_norm: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {key: getattr(self, key) for key in (
            'n', 'm', 's_bar', 't_bar', 't_bar2', 'phi_bar', 'length', 'perpendicularity',
            'equal_angle', 'grad_norm')}


def _require_stadium(table: TableSpec) -> None:
    if table.kind != 'stadium':
        raise ValidationError(f"Channel unfolding needs parallel flats, got a {table.kind} table")


def rectangle_quotient(table: TableSpec) -> float:
    """|P13 P23| / |P14 P13|."""
    points = table.gluing_points
    return float(np.linalg.norm(points['P23'] - points['P13'])
                 / np.linalg.norm(points['P13'] - points['P14']))


def channel_transform(table: TableSpec, k: int) -> Isometry:
    """Placement of cell k; the wall between cells j and j+1 is flat 3 for even j."""
    transform = Isometry.identity()
    for j in range(k):
        flat = table.flat3 if j % 2 == 0 else table.flat4
        transform = transform.compose(Isometry.reflection(flat.start_point, flat.direction))
    return transform


def _check_channel(table: TableSpec, a: np.ndarray, b: np.ndarray, cells: int) -> None:
    d = b - a
    last = 0.0
    for k in range(cells):
        flat = table.flat3 if k % 2 == 0 else table.flat4
        m = channel_transform(table, k)
        p, q = m.apply(flat.start_point), m.apply(flat.end_point)
        e = q - p
        denom = cross(d, e)
        if abs(denom) < 1e-300:
            raise InfeasibleChord(f"Channel chord is parallel to wall {k}")
        w = p - a
        t = cross(w, e) / denom
        u = cross(w, d) / denom
        if not (last < t < 1.0 and -1e-12 <= u <= 1.0 + 1e-12):
            raise InfeasibleChord(f"Channel chord leaves the channel at wall {k}",
                                  {'t': t, 'u': u})
        last = t


def _far_coordinate(table: TableSpec, cells: int, s: float) -> float:
    # arc2 in an odd cell is traversed backwards from the channel's point of view
    return s if cells % 2 == 0 else table.arc2.length - s


def _arc2_seed(table: TableSpec, cells: int, t: float) -> float:
    t = min(max(t, 0.0), table.arc2.length / 2)
    return _far_coordinate(table, cells, t)


def _maximize(problem: ChordProblem, seed: Sequence[float]) -> Tuple[np.ndarray, float]:
    s, stats = problem.maximize(seed)
    if not stats.converged:
        raise NoConvergence(f"{problem.name} did not converge: gradient {stats.grad_norm:.3g}")
    return s, stats.grad_norm


def unfolded_period_two(table: TableSpec, n: int) -> ChannelOrbit:
    """Longest chord from arc1 of cell 0 to arc2 of cell n."""
    _require_stadium(table)
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}")
    q = rectangle_quotient(table)
    k14, k23 = table.arc1.curvature(0.0), table.arc2.curvature(0.0)
    m_n = channel_transform(table, n)
    problem = ChordProblem([table.arc1, table.arc2], [Chord(0, 1, m_n)], name=f"channel period two n={n}")
    seed = [min(q / (n * k14), table.arc1.length / 2), _arc2_seed(table, n, q / (n * k23))]
    s, grad_norm = _maximize(problem, seed)

    pa, ta, _ = table.arc1.local_frame(s[0])
    pb, tb, _ = table.arc2.local_frame(s[1])
    pb, tb = m_n.apply(pb), m_n.rotate(tb)
    _check_channel(table, pa, pb, n)
    u = (pb - pa) / np.linalg.norm(pb - pa)
    residual = max(abs(angle_of(ta, u)), abs(math.asin(max(-1.0, min(1.0, float(np.dot(tb, u)))))))
    return ChannelOrbit(n=n, m=None, s_bar=float(s[0]), t_bar=_far_coordinate(table, n, float(s[1])),
                        t_bar2=None, phi_bar=0.0, length=float(np.linalg.norm(pb - pa)),
                        perpendicularity=residual, grad_norm=grad_norm)


def unfolded_period_four(table: TableSpec, n: int, rho: float) -> ChannelOrbit:
    """Longest pair of chords from one point of arc1 to arc2 in cells n and floor(n rho)."""
    _require_stadium(table)
    if not rho > 1.0:
        raise ValidationError(f"rho must exceed 1, got {rho}")
    m = int(math.floor(n * rho))
    if m <= n:
        raise ValidationError(f"floor(n rho) = {m} must exceed n = {n}")
    q = rectangle_quotient(table)
    k14, k23 = table.arc1.curvature(0.0), table.arc2.curvature(0.0)
    m_n, m_m = channel_transform(table, n), channel_transform(table, m)
    problem = ChordProblem([table.arc1, table.arc2, table.arc2],
                           [Chord(0, 1, m_n), Chord(0, 2, m_m)],
                           name=f"channel period four n={n} rho={rho:g}")
    seed = [min(q * (1 + 1 / rho) / (2 * n * k14), table.arc1.length / 2),
            _arc2_seed(table, n, q / (n * k23)),
            _arc2_seed(table, m, q / (rho * n * k23))]
    s, grad_norm = _maximize(problem, seed)

    pa, ta, _ = table.arc1.local_frame(s[0])
    angles, residual, length = [], 0.0, 0.0
    for cells, transform, x in ((n, m_n, s[1]), (m, m_m, s[2])):
        pb, tb, _ = table.arc2.local_frame(x)
        pb, tb = transform.apply(pb), transform.rotate(tb)
        _check_channel(table, pa, pb, cells)
        u = (pb - pa) / np.linalg.norm(pb - pa)
        angles.append(angle_of(ta, u))
        residual = max(residual, abs(math.asin(max(-1.0, min(1.0, float(np.dot(tb, u)))))))
        length += float(np.linalg.norm(pb - pa))
    return ChannelOrbit(n=n, m=m, s_bar=float(s[0]), t_bar=_far_coordinate(table, n, float(s[1])),
                        t_bar2=_far_coordinate(table, m, float(s[2])), phi_bar=abs(angles[0]),
                        length=length, perpendicularity=residual,
                        equal_angle=abs(angles[0] + angles[1]), grad_norm=grad_norm)


def channel_sweep(table: TableSpec, n_values: Sequence[int],
                  rho: Optional[float] = None) -> Dict[str, Any]:
    """Channel orbits over n with weighted 1/n fits of their scaled coordinates."""
    q = rectangle_quotient(table)
    k14, k23 = table.arc1.curvature(0.0), table.arc2.curvature(0.0)

    def solve(n):
        return unfolded_period_two(table, n) if rho is None else unfolded_period_four(table, n, rho)

    with ThreadPoolExecutor(max_workers=SOLVER_CONFIG['workers']) as pool:
        orbits = list(pool.map(solve, n_values))
    ns = [o.n for o in orbits]
    fits = {}
    if rho is None:
        targets = {'s_bar': q / k14, 't_bar': q / k23}
    else:
        targets = {'s_bar': q * (1 + 1 / rho) / (2 * k14), 't_bar': q / k23,
                   't_bar2': q / (rho * k23), 'phi_bar': q * (1 - 1 / rho) / 2}
    for key, expected in targets.items():
        intercept, slope = inverse_n_fit(ns, [o.n * getattr(o, key) for o in orbits])
        fits[key] = {'intercept': intercept, 'slope': slope, 'expected': expected,
                     'rel_err': abs(intercept - expected) / abs(expected)}
    return {'Q': q, 'K14': k14, 'K23': k23, 'rho': rho, 'orbits': orbits, 'fits': fits}
