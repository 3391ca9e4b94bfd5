"""
Periodic orbits as maximizers of the length functional

Orbit variables are the arclength coordinates of the collisions on the convex
arcs. Flat collisions are removed by unfolding: the head of a chord that
bounces off flats is moved by the composed reflections.
"""

import logging
import re
import threading
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .config import SOLVER_CONFIG
from .dynamics import PhasePoint, angle_of, billiard_map, chord_jet
from .errors import (BilliardError, DegenerateChord, InfeasibleOrbit, NoConvergence,
                     NonConcave, ValidationError)
from .geometry import (ARC_LETTERS, FLAT_LETTERS, BOUNDARY_ORDER, ArcSpec, Isometry,
                       TableSpec, double_cover, table_diameter)
from .numerics import CompensatedSum, loglinear_fit

logger = logging.getLogger(__name__)

CodeLike = Union['SymbolicCode', str, Sequence[int]]

_GROUP = re.compile(r'\(([1-4\s]+)\)\s*\^\s*(\d+)')
_PLAIN_GROUP = re.compile(r'\(([1-4\s]+)\)')


def other_arc(letter: int) -> int:
    return 2 if letter == 1 else 1


@dataclass(frozen=True)
class SymbolicCode:
    """Cyclic word over the boundary letters 1, 2 (arcs) and 3, 4 (flats)."""

    word: Tuple[int, ...]
    label: Optional[str] = field(default=None, compare=False)

    @classmethod
    def parse(cls, text: str, label: Optional[str] = None) -> 'SymbolicCode':
        """Parse compact strings like '2(12)^4' or '323(12)^2 1'."""
        expanded = text
        while True:
            new = _GROUP.sub(lambda m: m.group(1) * int(m.group(2)), expanded)
            new = _PLAIN_GROUP.sub(lambda m: m.group(1), new)
            if new == expanded:
                break
            expanded = new
        expanded = re.sub(r'\s+', '', expanded)
        if not expanded or not re.fullmatch(r'[1-4]+', expanded):
            raise ValidationError(f"Cannot parse symbolic code: {text!r}")
        return cls(tuple(int(c) for c in expanded), label)

    @classmethod
    def coerce(cls, code: CodeLike) -> 'SymbolicCode':
        if isinstance(code, SymbolicCode):
            return code
        if isinstance(code, str):
            return cls.parse(code)
        return cls(tuple(int(c) for c in code))

    @property
    def period(self) -> int:
        return len(self.word)

    @property
    def winding(self) -> int:
        """Turns around the boundary, counted from the cyclic order 1, 3, 2, 4."""
        position = {letter: i for i, letter in enumerate(BOUNDARY_ORDER)}
        total = 0
        for a, b in zip(self.word, self.word[1:] + self.word[:1]):
            if a != b:
                total += (position[b] - position[a]) % 4
        return total // 4

    @property
    def rotation(self) -> Fraction:
        p = self.winding % self.period
        return Fraction(min(p, self.period - p), self.period)

    @property
    def arc_indices(self) -> List[int]:
        return [i for i, letter in enumerate(self.word) if letter in ARC_LETTERS]

    def validate(self) -> 'SymbolicCode':
        word = self.word
        if not word or any(letter not in (1, 2, 3, 4) for letter in word):
            raise ValidationError(f"Code {self} has letters outside 1..4")
        if not self.arc_indices:
            raise ValidationError(f"Code {self} has no arc collision")
        for a, b in zip(word, word[1:] + word[:1]):
            if a == b and a in FLAT_LETTERS:
                raise ValidationError(f"Code {self} repeats flat {a}")
        if not 0 < self.rotation <= Fraction(1, 2):
            raise ValidationError(f"Code {self} has rotation {self.rotation} outside (0, 1/2]")
        return self

    def __str__(self) -> str:
        return ''.join(str(letter) for letter in self.word)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'word': str(self),
            'label': self.label,
            'period': self.period,
            'winding': self.winding,
            'rotation': str(self.rotation),
        }


def family_code(n: int, i: int) -> SymbolicCode:
    """Code (i 12...12) with n pairs."""
    return SymbolicCode((i,) + (1, 2) * n, label=f"gamma_{n}^({i})")


def palindromic_code(n: int, variant: str = 'gamma') -> SymbolicCode:
    if variant == 'gamma':
        return SymbolicCode((3, 2, 3) + (1, 2) * n + (1,), label=f"gamma_{n}")
    if variant == 'gamma_hat':
        return SymbolicCode((3, 1, 3) + (2, 1) * n + (2,), label=f"gamma_hat_{n}")
    raise ValidationError(f"Unknown palindromic variant: {variant}")


# Length functional

@dataclass(frozen=True, eq=False)
class Chord:
    """Chord from site tail to the image of site head under transform."""

    tail: int
    head: int
    transform: Isometry


@dataclass
class NewtonStats:
    iterations: int
    grad_norm: float
    eigenvalues: np.ndarray
    converged: bool


class ChordProblem:
    """Total length of a set of chords between points on arcs."""

    def __init__(self, pieces: List[ArcSpec], chords: List[Chord], name: str = 'orbit'):
        self.pieces = pieces
        self.chords = chords
        self.name = name
        self.upper = np.array([piece.length for piece in pieces])

    @property
    def size(self) -> int:
        return len(self.pieces)

    def chord_lengths(self, s: np.ndarray) -> List[float]:
        frames = [piece.local_frame(x) for piece, x in zip(self.pieces, s)]
        return [float(np.linalg.norm(c.transform.apply(frames[c.head][0]) - frames[c.tail][0]))
                for c in self.chords]

    def evaluate(self, s: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        frames = [piece.local_frame(x) for piece, x in zip(self.pieces, s)]
        total = CompensatedSum()
        grad = np.zeros(self.size)
        hess = np.zeros((self.size, self.size))
        for c in self.chords:
            pa, ta, aa = frames[c.tail]
            pb, tb, ab = frames[c.head]
            m = c.transform
            tau, d_s, d_t, d_ss, d_st, d_tt = chord_jet(pa, ta, aa, m.apply(pb), m.rotate(tb),
                                                         m.rotate(ab))
            if tau < 1e-12:
                raise DegenerateChord(f"Chord {c.tail}->{c.head} of {self.name} collapsed")
            i, j = c.tail, c.head
            total.add(tau)
            grad[i] += d_s
            grad[j] += d_t
            hess[i, i] += d_ss
            hess[j, j] += d_tt
            hess[i, j] += d_st
            hess[j, i] += d_st
        return total.value, grad, hess

    def _inside(self, s: np.ndarray) -> bool:
        return bool(np.all(s >= 0.0) and np.all(s <= self.upper))

    def maximize(self, seed: Sequence[float],
                 tolerances: Optional[Dict[str, Any]] = None) -> Tuple[np.ndarray, NewtonStats]:
        """Damped Newton ascent with an eigenvalue shift when the Hessian is not definite."""
        tol = tolerances or SOLVER_CONFIG
        s = np.clip(np.array(seed, dtype=float), 0.0, self.upper)
        total, grad, hess = self.evaluate(s)
        iterations = 0
        while True:
            grad_norm = float(np.max(np.abs(grad)))
            if grad_norm < tol['grad_target'] or iterations >= tol['max_newton_steps']:
                break
            eig = linalg.eigvalsh(hess)
            scale = max(1.0, float(np.max(np.abs(eig))))
            shift = 0.0
            if eig[-1] > -1e-10 * scale:
                shift = eig[-1] + 1e-3 * scale
            step = linalg.solve(hess - shift * np.eye(self.size), -grad, assume_a='sym')
            alpha = 1.0
            accepted = False
            for _ in range(60):
                trial = s + alpha * step
                if self._inside(trial):
                    try:
                        trial_total, trial_grad, trial_hess = self.evaluate(trial)
                    except DegenerateChord:
                        trial_total = None
                    if trial_total is not None and \
                            trial_total >= total - 1e-12 * max(1.0, abs(total)):
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                logger.debug(f"{self.name}: line search stalled at gradient {grad_norm:.3g}")
                break
            s, total, grad, hess = trial, trial_total, trial_grad, trial_hess
            iterations += 1
        grad_norm = float(np.max(np.abs(grad)))
        eig = linalg.eigvalsh(hess)
        converged = grad_norm < tol['grad_accept']
        logger.debug(f"{self.name}: {iterations} Newton steps, gradient {grad_norm:.3g}")
        return s, NewtonStats(iterations, grad_norm, eig, converged)


# Orbit results

@dataclass(eq=False)
class OrbitResult:
    code: SymbolicCode
    points: List[PhasePoint]
    letters: List[int]
    chord_lengths: List[float]
    total_length: float
    grad_norm: float
    hessian_definite: bool
    feasible: bool
    iterations: int
    site_parameters: np.ndarray
    eigenvalues: np.ndarray
    reflection_residual: float
    closure_residual: float
    table_name: str
    labels: Dict[str, int] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def period(self) -> int:
        return len(self.points)

    def length_excess(self, tau_star: float) -> float:
        """Sum of (chord - tau_star), compensated."""
        return CompensatedSum().extend(c - tau_star for c in self.chord_lengths).value

    def local_parameters(self, table: TableSpec) -> List[float]:
        return [table.locate(p.r)[1] for p in self.points]

    def label_point(self, label: str) -> PhasePoint:
        return self.points[self.labels[label]]

    def to_rows(self) -> List[Tuple[int, int, float, float, float]]:
        return [(i, letter, p.r, p.phi, chord)
                for i, (letter, p, chord) in enumerate(zip(self.letters, self.points,
                                                            self.chord_lengths))]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'code': self.code.to_dict(),
            'period': self.period,
            'total_length': self.total_length,
            'grad_norm': self.grad_norm,
            'hessian_definite': self.hessian_definite,
            'feasible': self.feasible,
            'iterations': self.iterations,
            'reflection_residual': self.reflection_residual,
            'closure_residual': self.closure_residual,
        }


@dataclass
class _Layout:
    """Arc sites of a code and the flats crossed after each of them."""

    code: SymbolicCode
    offset: int
    letters: List[int]
    word_index: List[int]
    legs: List[List[int]]


def _layout(code: SymbolicCode) -> _Layout:
    offset = code.arc_indices[0]
    word = code.word[offset:] + code.word[:offset]
    letters, word_index, legs = [], [], []
    for i, letter in enumerate(word):
        if letter in ARC_LETTERS:
            letters.append(letter)
            word_index.append(i)
            legs.append([])
        else:
            legs[-1].append(letter)
    return _Layout(code, offset, letters, word_index, legs)


def _unfolding(table: TableSpec, flats: Sequence[int]) -> Isometry:
    transform = Isometry.identity()
    for letter in flats:
        flat = table.piece(letter)
        transform = transform.compose(Isometry.reflection(flat.start_point, flat.direction))
    return transform


def _problem(table: TableSpec, layout: _Layout) -> ChordProblem:
    count = len(layout.letters)
    chords = [Chord(j, (j + 1) % count, _unfolding(table, layout.legs[j])) for j in range(count)]
    pieces = [table.piece(letter) for letter in layout.letters]
    return ChordProblem(pieces, chords, name=str(layout.code))


def _replay(table: TableSpec, layout: _Layout, problem: ChordProblem,
            s: np.ndarray, tolerances: Dict[str, Any]):
    """Replay each leg with the billiard map from its solved arc point."""
    count = len(layout.letters)
    frames = [piece.local_frame(x) for piece, x in zip(problem.pieces, s)]
    site_r = [table.coordinate(letter, x) for letter, x in zip(layout.letters, s)]
    site_phi = []
    for j, chord in enumerate(problem.chords):
        pa, ta, _ = frames[j]
        target = chord.transform.apply(frames[chord.head][0])
        u = (target - pa) / np.linalg.norm(target - pa)
        site_phi.append(angle_of(ta, u))

    points, letters, chords = [], [], []
    reflection, closure = 0.0, 0.0
    try:
        for j in range(count):
            z = PhasePoint(site_r[j], site_phi[j])
            points.append(z)
            letters.append(layout.letters[j])
            expected = layout.legs[j] + [layout.letters[(j + 1) % count]]
            for k, letter in enumerate(expected):
                step = billiard_map(table, z)
                chords.append(step.tau)
                if step.letter != letter:
                    raise InfeasibleOrbit(
                        f"Leg {j} of {layout.code} hits boundary {step.letter}, expected {letter}")
                if k < len(expected) - 1:
                    points.append(step.z1)
                    letters.append(letter)
                z = step.z1
            nxt = (j + 1) % count
            dr = abs(z.r - site_r[nxt])
            dr = min(dr, table.perimeter - dr)
            closure = max(closure, dr)
            reflection = max(reflection, abs(z.phi - site_phi[nxt]))
            if dr > tolerances['replay_tolerance']:
                raise InfeasibleOrbit(
                    f"Leg {j} of {layout.code} misses its landing point by {dr:.3g}")
    except InfeasibleOrbit:
        raise
    except BilliardError as e:
        raise InfeasibleOrbit(f"Replay of {layout.code} failed: {e}", e.to_dict()) from e

    shift = -layout.offset
    points = points[shift:] + points[:shift] if shift else points
    letters = letters[shift:] + letters[:shift] if shift else letters
    chords = chords[shift:] + chords[:shift] if shift else chords
    return points, letters, chords, reflection, closure


def _finish(table: TableSpec, code: SymbolicCode, layout: _Layout, problem: ChordProblem,
            s: np.ndarray, stats: NewtonStats, require_concave: bool,
            tolerances: Dict[str, Any]) -> OrbitResult:
    if not stats.converged:
        raise NoConvergence(f"Orbit {code} did not converge: gradient {stats.grad_norm:.3g}",
                            {'grad_norm': stats.grad_norm, 'iterations': stats.iterations})
    scale = max(1.0, float(np.max(np.abs(stats.eigenvalues))))
    definite = bool(np.all(stats.eigenvalues < -1e-12 * scale))
    if not definite:
        if require_concave:
            raise NonConcave(f"Hessian of orbit {code} is not negative definite",
                             {'eigenvalues': stats.eigenvalues.tolist()})
        logger.warning(f"Orbit {code} on {table.name}: Hessian not negative definite "
                       f"(largest eigenvalue {stats.eigenvalues[-1]:.3g})")
    points, letters, chords, reflection, closure = _replay(table, layout, problem, s, tolerances)
    return OrbitResult(
        code=code,
        points=points,
        letters=letters,
        chord_lengths=chords,
        total_length=CompensatedSum().extend(chords).value,
        grad_norm=stats.grad_norm,
        hessian_definite=definite,
        feasible=True,
        iterations=stats.iterations,
        site_parameters=np.array(s),
        eigenvalues=stats.eigenvalues,
        reflection_residual=reflection,
        closure_residual=closure,
        table_name=table.name,
    )


# Seeds

_APEX_CACHE: 'weakref.WeakKeyDictionary[TableSpec, Tuple[float, float]]' = weakref.WeakKeyDictionary()
_FAMILY_CACHE: 'weakref.WeakKeyDictionary[TableSpec, Dict[Tuple[int, str], Any]]' = weakref.WeakKeyDictionary()
_CACHE_LOCK = threading.RLock()


def apex_parameters(table: TableSpec) -> Tuple[float, float]:
    """Arclength of the period-two points A on arc1 and B on arc2."""
    with _CACHE_LOCK:
        if table not in _APEX_CACHE:
            orbit = period_two(table, check_diameter=False)
            _APEX_CACHE[table] = (float(orbit.site_parameters[0]), float(orbit.site_parameters[1]))
        return _APEX_CACHE[table]


def default_seed(table: TableSpec, code: CodeLike, spread: float = 0.4) -> List[float]:
    """Arc sites at the apexes, consecutive same-arc sites split around the apex."""
    layout = _layout(SymbolicCode.coerce(code))
    apex = dict(zip(ARC_LETTERS, apex_parameters(table)))
    seed = [apex[letter] for letter in layout.letters]
    count = len(seed)
    for j in range(count):
        nxt = (j + 1) % count
        if count > 1 and not layout.legs[j] and layout.letters[j] == layout.letters[nxt]:
            half = table.piece(layout.letters[j]).length / 2
            delta = spread * min(apex[layout.letters[j]], 2 * half - apex[layout.letters[j]], half)
            seed[nxt] = apex[layout.letters[nxt]] + delta
            seed[j] = apex[layout.letters[j]] - delta
    return seed


# Operations

def solve_code(table: TableSpec, code: CodeLike, seed: Optional[Sequence[float]] = None,
               require_concave: bool = False,
               tolerances: Optional[Dict[str, Any]] = None) -> OrbitResult:
    """Maximal periodic orbit with the given code."""
    tol = tolerances or SOLVER_CONFIG
    code = SymbolicCode.coerce(code).validate()
    layout = _layout(code)
    problem = _problem(table, layout)
    if seed is None:
        seed = default_seed(table, code)
    if len(seed) != problem.size:
        raise ValidationError(f"Seed for {code} needs {problem.size} arc parameters, got {len(seed)}")
    s, stats = problem.maximize(seed, tol)
    return _finish(table, code, layout, problem, s, stats, require_concave, tol)


def period_two(table: TableSpec, check_diameter: bool = True) -> OrbitResult:
    """The maximal period-two orbit between arc1 and arc2."""
    seed = [table.arc1.length / 2, table.arc2.length / 2]
    orbit = solve_code(table, SymbolicCode((1, 2), label='gamma_star'), seed=seed)
    if check_diameter:
        diameter, _ = table_diameter(table)
        tau_star = orbit.chord_lengths[0]
        orbit.diagnostics['diameter'] = diameter
        if abs(diameter - tau_star) > 1e-8 * max(1.0, diameter):
            raise InfeasibleOrbit(
                f"Period-two chord {tau_star:.17g} differs from the diameter {diameter:.17g}")
    with _CACHE_LOCK:
        _APEX_CACHE[table] = (float(orbit.site_parameters[0]), float(orbit.site_parameters[1]))
    return orbit


def _insert_pair(seed: List[float], letters: List[int], apex: Dict[int, float],
                 first: int = 0) -> Tuple[List[float], List[int]]:
    """Grow an alternating run by one (1, 2) pair near its middle."""
    k = first + max(len(letters) - first - 1, 0) // 2
    a = letters[k]
    b = other_arc(a)
    return (seed[:k + 1] + [apex[b], apex[a]] + seed[k + 1:],
            letters[:k + 1] + [b, a] + letters[k + 1:])


@dataclass
class FamilyRecord:
    orbits: Dict[int, OrbitResult] = field(default_factory=dict)
    error: Optional[BilliardError] = None
    lock: Any = field(default_factory=threading.Lock)


def _family_record(table: TableSpec, key: Tuple[int, str]) -> FamilyRecord:
    with _CACHE_LOCK:
        families = _FAMILY_CACHE.setdefault(table, {})
        if key not in families:
            families[key] = FamilyRecord()
        return families[key]


def orbit_family(table: TableSpec, i: int, n_max: int, expert: bool = False) -> Dict[int, OrbitResult]:
    """Orbits (i 12...12) for n = 1..n_max by continuation in n."""
    if i not in (1, 2, 3, 4):
        raise ValidationError(f"Family letter must be 1..4, got {i}")
    if i == 1 and not expert:
        raise ValidationError("Family (1 12...12) repeats arc 1; enable the expert flag to solve it")
    record = _family_record(table, (i, 'rotation'))
    with record.lock:
        apex = dict(zip(ARC_LETTERS, apex_parameters(table)))
        n = max(record.orbits) if record.orbits else 0
        while n < n_max and record.error is None:
            n += 1
            if n == 1:
                seed = default_seed(table, family_code(1, i))
            else:
                prev = record.orbits[n - 1]
                layout = _layout(prev.code)
                first = 1 if i in ARC_LETTERS else 0
                seed, _ = _insert_pair(list(prev.site_parameters), layout.letters, apex, first)
            try:
                record.orbits[n] = solve_code(table, family_code(n, i), seed=seed)
            except BilliardError as e:
                logger.warning(f"Family {i} on {table.name} stopped at n={n}: {e}")
                record.error = e
        return {k: v for k, v in record.orbits.items() if k <= n_max}


def rotation_orbit(table: TableSpec, n: int, i: int, expert: bool = False,
                   seed: Optional[Sequence[float]] = None) -> OrbitResult:
    """Orbit (i 12...12) with n pairs and rotation n/(2n+1)."""
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}")
    if seed is not None:
        if i == 1 and not expert:
            raise ValidationError("Family (1 12...12) needs the expert flag")
        return solve_code(table, family_code(n, i), seed=seed)
    family = orbit_family(table, i, n, expert=expert)
    if n not in family:
        error = _family_record(table, (i, 'rotation')).error
        raise error if error is not None else NoConvergence(f"Family {i} has no orbit at n={n}")
    return family[n]


def _palindromic_layout(table: TableSpec, n: int, variant: str):
    cover = double_cover(table, 3)
    if variant == 'gamma':
        first_piece, run = cover.reflected_arc2, [1, 2] * n + [1]
    else:
        first_piece, run = cover.reflected_arc1, [2, 1] * n + [2]
    pieces = [first_piece] + [table.piece(letter) for letter in run]
    count = len(pieces)
    chords = [Chord(j, (j + 1) % count, Isometry.identity()) for j in range(count)]
    return cover, run, ChordProblem(pieces, chords, name=f"{variant}_{n} double cover")


def _palindromic_solve(table: TableSpec, n: int, variant: str, seed: Optional[Sequence[float]],
                       tolerances: Dict[str, Any]) -> OrbitResult:
    code = palindromic_code(n, variant)
    cover, run, cover_problem = _palindromic_layout(table, n, variant)
    mirror_letter = 2 if variant == 'gamma' else 1
    apex = dict(zip(ARC_LETTERS, apex_parameters(table)))
    if seed is None:
        seed = [table.piece(mirror_letter).length - apex[mirror_letter]] + [apex[a] for a in run]
    s_cover, _ = cover_problem.maximize(seed, tolerances)

    # fold back: the mirrored arc is traversed backwards
    s_base = np.array(s_cover)
    s_base[0] = table.piece(mirror_letter).length - s_cover[0]
    layout = _layout(code)
    problem = _problem(table, layout)
    total, grad, hess = problem.evaluate(s_base)
    stats = NewtonStats(0, float(np.max(np.abs(grad))), linalg.eigvalsh(hess),
                        float(np.max(np.abs(grad))) < tolerances['grad_accept'])
    result = _finish(table, code, layout, problem, s_base, stats, False, tolerances)
    result.diagnostics['cover_parameters'] = np.array(s_cover)

    size = len(s_base)
    symmetry = max((abs(s_base[k] - s_base[size - k]) for k in range(1, size)), default=0.0)
    middle = result.points[(layout.word_index[n + 1] + layout.offset) % result.period]
    turn = result.points[(layout.word_index[0] + layout.offset) % result.period]
    result.diagnostics.update({
        'symmetry_residual': float(symmetry),
        'middle_angle': middle.phi,
        'turning_angle': turn.phi,
    })
    if symmetry > tolerances['replay_tolerance']:
        raise InfeasibleOrbit(f"{code.label} is not palindromic (residual {symmetry:.3g})")
    if abs(middle.phi) > 1e-9 or abs(turn.phi) > 1e-9:
        raise InfeasibleOrbit(f"{code.label} misses a perpendicular turning point",
                              {'middle': middle.phi, 'turning': turn.phi})

    # word positions: flat, x0, flat, then x1, y1, x2, ...
    result.labels = {'y0-': 0, 'x0': 1, 'y0': 2}
    for k in range(1, n + 2):
        result.labels[f'x{k}'] = 2 * k + 1
        if k <= n:
            result.labels[f'y{k}'] = 2 * k + 2
    return result


def palindromic_family(table: TableSpec, n_max: int,
                       variant: str = 'gamma') -> Dict[int, OrbitResult]:
    """Palindromic orbits for n = 1..n_max by continuation in n."""
    record = _family_record(table, (0, variant))
    with record.lock:
        apex = dict(zip(ARC_LETTERS, apex_parameters(table)))
        n = max(record.orbits) if record.orbits else 0
        while n < n_max and record.error is None:
            n += 1
            seed = None
            if n > 1:
                prev = record.orbits[n - 1].diagnostics['cover_parameters']
                letters = [0] + ([1, 2] * (n - 1) + [1] if variant == 'gamma'
                                 else [2, 1] * (n - 1) + [2])
                seed, _ = _insert_pair(list(prev), letters, apex, first=1)
            try:
                record.orbits[n] = _palindromic_solve(table, n, variant, seed, SOLVER_CONFIG)
            except BilliardError as e:
                logger.warning(f"Palindromic {variant} on {table.name} stopped at n={n}: {e}")
                record.error = e
        return {k: v for k, v in record.orbits.items() if k <= n_max}


def palindromic_orbit(table: TableSpec, n: int, variant: str = 'gamma',
                      seed: Optional[Sequence[float]] = None) -> OrbitResult:
    """Palindromic orbit (323 12...12 1) or its variant (313 21...21 2)."""
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}")
    palindromic_code(n, variant)
    if seed is not None:
        return _palindromic_solve(table, n, variant, seed, SOLVER_CONFIG)
    family = palindromic_family(table, n, variant)
    if n not in family:
        error = _family_record(table, (0, variant)).error
        raise error if error is not None else NoConvergence(f"No palindromic orbit at n={n}")
    return family[n]


def solve_named(table: TableSpec, name: str, seed: Optional[Sequence[float]] = None) -> OrbitResult:
    """Solve a code string, or a palindromic label like 'gamma_2' / 'gamma_hat_1'."""
    match = re.fullmatch(r'(gamma|gamma_hat)_(\d+)', name.strip())
    if match:
        return palindromic_orbit(table, int(match.group(2)), match.group(1), seed=seed)
    return solve_code(table, name, seed=seed)


def orbit_points(table: TableSpec, orbit: OrbitResult) -> np.ndarray:
    return np.array([table.piece(letter).position(s)
                     for letter, s in (table.locate(p.r) for p in orbit.points)])


def orbit_distance(table: TableSpec, a: OrbitResult, b: OrbitResult) -> float:
    """Hausdorff distance between the collision point sets of two orbits."""
    pa, pb = orbit_points(table, a), orbit_points(table, b)
    dist = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1)
    return float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))


def replay_orbit(table: TableSpec, orbit: OrbitResult) -> Dict[str, float]:
    """Iterate the billiard map from points[0] around the whole orbit."""
    z = orbit.points[0]
    worst_r, worst_phi, mismatches = 0.0, 0.0, 0
    for k in range(1, orbit.period + 1):
        step = billiard_map(table, z)
        z = step.z1
        expected = orbit.points[k % orbit.period]
        dr = abs(z.r - expected.r)
        worst_r = max(worst_r, min(dr, table.perimeter - dr))
        worst_phi = max(worst_phi, abs(z.phi - expected.phi))
        if step.letter != orbit.letters[k % orbit.period]:
            mismatches += 1
    return {'r': worst_r, 'phi': worst_phi, 'letter_mismatches': mismatches}


def multistart(table: TableSpec, code: CodeLike, starts: int = 16, spread: float = 0.15,
               seed: int = 0, workers: Optional[int] = None) -> List[OrbitResult]:
    """Solve one code from randomly perturbed seeds."""
    code = SymbolicCode.coerce(code).validate()
    base = np.array(default_seed(table, code))
    rng = np.random.default_rng(seed)
    seeds = [base + rng.uniform(-spread, spread, size=base.shape) for _ in range(starts)]
    with ThreadPoolExecutor(max_workers=workers or SOLVER_CONFIG['workers']) as pool:
        return list(pool.map(lambda x: solve_code(table, code, seed=x), seeds))


@dataclass
class MarkedLengthEntry:
    q: int
    rotation: Fraction
    max_length: float
    argmax_code: SymbolicCode
    candidates_examined: int
    ties: List[str] = field(default_factory=list)
    lengths: Dict[str, float] = field(default_factory=dict)
    partial: bool = False
    failures: Dict[str, str] = field(default_factory=dict)
    orbit: Optional[OrbitResult] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'q': self.q,
            'rotation': str(self.rotation),
            'max_length': self.max_length,
            'argmax_code': str(self.argmax_code),
            'argmax_label': self.argmax_code.label,
            'candidates_examined': self.candidates_examined,
            'ties': self.ties,
            'partial': self.partial,
            'failures': self.failures,
        }


def _candidates(expert: bool) -> List[int]:
    return [1, 2, 3, 4] if expert else [2, 3, 4]


def _entry(q: int, families: Dict[int, Any], tie_tolerance: float) -> MarkedLengthEntry:
    n = (q - 1) // 2
    found, failures = [], {}
    for i, family in sorted(families.items()):
        code = family_code(n, i)
        if isinstance(family, BilliardError):
            failures[str(code)] = str(family)
        elif n in family:
            found.append(family[n])
        else:
            failures[str(code)] = 'continuation stopped before this period'
    if not found:
        raise NoConvergence(f"No candidate orbit converged for q={q}", {'failures': failures})
    found.sort(key=lambda orbit: str(orbit.code))
    best = max(found, key=lambda orbit: orbit.total_length)
    ties = [str(o.code) for o in found
            if o is not best and best.total_length - o.total_length <= tie_tolerance]
    if ties:
        logger.warning(f"q={q}: candidates {ties} tie with {best.code} within {tie_tolerance}")
    if failures:
        logger.warning(f"q={q}: failed candidates {sorted(failures)}")
    return MarkedLengthEntry(
        q=q,
        rotation=Fraction(n, q),
        max_length=best.total_length,
        argmax_code=best.code,
        candidates_examined=len(families),
        ties=ties,
        lengths={str(o.code): o.total_length for o in found},
        partial=bool(failures),
        failures=failures,
        orbit=best,
    )


def _check_q(q: int) -> None:
    if q < 3 or q % 2 == 0:
        raise ValidationError(f"q must be odd and at least 3, got {q}")


def marked_length_spectrum(table: TableSpec, q_list: Sequence[int], expert: bool = False,
                           workers: Optional[int] = None) -> List[MarkedLengthEntry]:
    """Maximal lengths over the candidate families for each odd q."""
    for q in q_list:
        _check_q(q)
    n_max = (max(q_list) - 1) // 2
    apex_parameters(table)

    def run(i):
        try:
            return i, orbit_family(table, i, n_max, expert=expert)
        except BilliardError as e:
            return i, e

    with ThreadPoolExecutor(max_workers=workers or SOLVER_CONFIG['workers']) as pool:
        families = dict(pool.map(run, _candidates(expert)))
    return [_entry(q, families, SOLVER_CONFIG['tie_tolerance']) for q in sorted(q_list)]


def marked_length_max(table: TableSpec, q: int, expert: bool = False,
                      workers: Optional[int] = None) -> MarkedLengthEntry:
    """Largest length among orbits of rotation (q-1)/(2q) candidates with q collisions."""
    return marked_length_spectrum(table, [q], expert=expert, workers=workers)[0]


def shadowing_profile(table: TableSpec, n_values: Sequence[int],
                      m_values: Sequence[int] = (1, 2)) -> List[Dict[str, Any]]:
    """Distances |x_{n+m}(k) - x_n(k)| between palindromic orbits and their decay in k."""
    family = palindromic_family(table, max(n_values) + max(m_values))
    profile = []
    for n in n_values:
        for m in m_values:
            a, b = family[n], family[n + m]
            # x_k up to the middle turning point
            ks = list(range(1, max(n // 2, 2) + 1))
            diffs = []
            for k in ks:
                pa = a.label_point(f'x{k}')
                pb = b.label_point(f'x{k}')
                dr = abs(pa.r - pb.r)
                diffs.append(min(dr, table.perimeter - dr))
            slope, _, _ = loglinear_fit(ks, diffs)
            profile.append({'n': n, 'm': m, 'k': ks, 'diff': diffs, 'slope': slope})
    return profile
