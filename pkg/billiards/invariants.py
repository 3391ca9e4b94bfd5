"""
Monodromy of the period-two orbit, homoclinic constants and spectral invariants
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .dynamics import map_differential
from .errors import (BilliardError, FitUnstable, InsufficientDecayWindow, NoConvergence,
                     NoRealRoot, NotHyperbolic, ParityMismatch, ValidationError)
from .geometry import TableSpec, boundary_at, squash_from_curvatures
from .numerics import (CompensatedSum, aitken_sequence, decay_window, geometric_limit,
                       loglinear_fit, median_constant, richardson_limit)
from .orbits import (OrbitResult, marked_length_spectrum, orbit_family, period_two)

logger = logging.getLogger(__name__)


@dataclass
class PeriodTwoData:
    tau_star: float
    K_z: float
    K_w: float
    a_z: float
    a_w: float
    b: float
    lam: float
    theta_z: float
    theta_w: float
    lambda_z: float
    lambda_w: float
    analytic_matrix: np.ndarray
    numeric_matrix: np.ndarray
    numeric: Dict[str, float] = field(default_factory=dict)
    orbit: Optional[OrbitResult] = None

    @property
    def log_lambda(self) -> float:
        return math.log(self.lam)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'tau_star': self.tau_star,
            'K_z': self.K_z,
            'K_w': self.K_w,
            'a_z': self.a_z,
            'a_w': self.a_w,
            'b': self.b,
            'lambda': self.lam,
            'theta_z': self.theta_z,
            'theta_w': self.theta_w,
            'lambda_z': self.lambda_z,
            'lambda_w': self.lambda_w,
            'numeric': self.numeric,
        }


def _stable_unstable(matrix: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Leading eigenvalue with stable and unstable unit vectors (first component >= 0)."""
    values, vectors = np.linalg.eig(matrix)
    values = np.real(values)
    vectors = np.real(vectors)
    order = np.argsort(np.abs(values))
    stable, unstable = vectors[:, order[0]], vectors[:, order[1]]
    stable = stable * (1 if stable[0] >= 0 else -1) / np.linalg.norm(stable)
    unstable = unstable * (1 if unstable[0] >= 0 else -1) / np.linalg.norm(unstable)
    return float(values[order[1]]), stable, unstable


def analyze_period_two(table: TableSpec) -> PeriodTwoData:
    """Analytic and numerical monodromy data of the period-two orbit."""
    orbit = period_two(table)
    z_a, z_b = orbit.points
    tau = orbit.chord_lengths[0]
    k_z = abs(boundary_at(table, z_a.r).curvature)
    k_w = abs(boundary_at(table, z_b.r).curvature)
    a_z = 1.0 - k_z * tau
    a_w = 1.0 - k_w * tau
    b = (a_z * a_w - 1.0) / tau
    trace = 2.0 * (2.0 * a_z * a_w - 1.0)
    if abs(trace) <= 2.0 + 1e-12:
        raise NotHyperbolic(f"Period-two orbit of {table.name} is not hyperbolic (trace {trace:.17g})",
                            {'trace': trace, 'a_z': a_z, 'a_w': a_w})
    lam = (abs(trace) + math.sqrt(trace * trace - 4.0)) / 2.0
    theta_z = math.atan((1.0 / lam - lam) / (4.0 * a_w * tau))
    theta_w = math.atan((1.0 / lam - lam) / (4.0 * a_z * tau))
    lambda_z = -(math.cos(theta_z) / math.cos(theta_w)) * (lam + 1.0) / (2.0 * a_w)
    lambda_w = -(math.cos(theta_w) / math.cos(theta_z)) * (lam + 1.0) / (2.0 * a_z)
    m = 2.0 * a_z * a_w - 1.0
    analytic = np.array([[m, 2.0 * a_w * tau], [2.0 * a_z * b, m]])

    df_a = map_differential(table, z_a).matrix
    df_b = map_differential(table, z_b).matrix
    numeric = df_b @ df_a
    lam_num, stable_a, unstable_a = _stable_unstable(numeric)
    _, stable_b, unstable_b = _stable_unstable(df_a @ df_b)
    lam_num = abs(lam_num)
    numeric_data = {
        'lambda': lam_num,
        'determinant': float(np.linalg.det(numeric)),
        'theta_z': math.atan2(stable_a[1], stable_a[0]),
        'theta_w': math.atan2(stable_b[1], stable_b[0]),
        'lambda_z': float(np.dot(df_a @ unstable_a, unstable_b)),
        'lambda_w': float(np.dot(df_b @ unstable_b, unstable_a)),
        'relative_lambda_error': abs(lam_num - lam) / lam,
    }
    if numeric_data['relative_lambda_error'] > 1e-8:
        logger.warning(f"{table.name}: analytic and numerical lambda differ by "
                       f"{numeric_data['relative_lambda_error']:.3g}")
    logger.info(f"{table.name}: tau*={tau:.12g}, lambda={lam:.12g}")
    return PeriodTwoData(tau, k_z, k_w, a_z, a_w, b, lam, theta_z, theta_w, lambda_z,
                         lambda_w, analytic, numeric, numeric_data, orbit)


# Homoclinic constants

@dataclass
class HomoclinicFit:
    family: int
    n: int
    lam: float
    exponent: float
    C_s: float
    C_phi: float
    C_t: float
    C_psi: float
    C_neg_s: float
    C_neg_t: float
    Theta_z: float
    Theta_w: float
    Theta_z_t_branch: float
    window: List[int]
    fit_residuals: Dict[str, float] = field(default_factory=dict)
    Theta_z_predicted: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {key: getattr(self, key) for key in (
            'family', 'n', 'lam', 'exponent', 'C_s', 'C_phi', 'C_t', 'C_psi', 'C_neg_s',
            'C_neg_t', 'Theta_z', 'Theta_w', 'Theta_z_t_branch', 'window', 'Theta_z_predicted')}
        data['fit_residuals'] = self.fit_residuals
        return data


def family_coordinates(table: TableSpec, orbit: OrbitResult,
                       apex: Tuple[float, float]) -> Dict[str, np.ndarray]:
    """Offsets from the period-two points along an orbit (i 12...12).

    Index k = 1..n; x_k sits at word position 2k-1, y_k at 2k, and the
    backward points x_-k, y_-k at 2n+1-2k and 2n+2-2k.
    """
    n = (orbit.period - 1) // 2
    s_apex, t_apex = apex
    local = orbit.local_parameters(table)

    def pick(positions, offset):
        return (np.array([local[p] - offset for p in positions]),
                np.array([orbit.points[p].phi for p in positions]))

    ks = np.arange(1, n + 1)
    s, phi = pick(2 * ks - 1, s_apex)
    t, psi = pick(2 * ks, t_apex)
    s_neg, phi_neg = pick(2 * n + 1 - 2 * ks, s_apex)
    t_neg, psi_neg = pick(2 * n + 2 - 2 * ks, t_apex)
    return {'k': ks, 's': s, 'phi': phi, 't': t, 'psi': psi,
            's_neg': s_neg, 'phi_neg': phi_neg, 't_neg': t_neg, 'psi_neg': psi_neg}


def _leading_constant(k: np.ndarray, values: np.ndarray, window: Sequence[int],
                      lam: float) -> Tuple[float, float, float]:
    """Fit values ~ C * lam**-(k-1) on the window; returns (C, slope, rms)."""
    idx = [w - 1 for w in window]
    x = k[idx] - 1
    slope, intercept, rms = loglinear_fit(x, values[idx])
    # constant at the analytic rate
    return median_constant(values[idx], lam ** x), slope, rms


def fit_homoclinic_constants(table: TableSpec, family: int = 2,
                             n_range: Sequence[int] = range(1, 32),
                             period_data: Optional[PeriodTwoData] = None) -> HomoclinicFit:
    """Leading constants of the homoclinic orbit from the largest odd-n family orbit."""
    odd = [n for n in n_range if n % 2 == 1]
    if not odd:
        raise ValidationError("n_range needs an odd n to locate the orbit middle")
    n = max(odd)
    data = period_data or analyze_period_two(table)
    lam = data.lam
    orbits = orbit_family(table, family, n)
    if n not in orbits:
        raise InsufficientDecayWindow(f"Family {family} reached only n={max(orbits, default=0)}")
    orbit = orbits[n]
    apex = (float(data.orbit.site_parameters[0]), float(data.orbit.site_parameters[1]))
    coords = family_coordinates(table, orbit, apex)
    window = decay_window(n + 1, math.log(lam), order=1, shadow_length=n)
    window = [w for w in window if w >= 1]
    if len(window) < 4:
        raise InsufficientDecayWindow(f"Only {len(window)} usable k values", {'window': window})

    k = coords['k']
    constants, residuals = {}, {}
    for name in ('s', 'phi', 't', 'psi', 's_neg', 't_neg'):
        c, slope, rms = _leading_constant(k, coords[name], window, lam)
        constants[name] = c
        residuals[name] = rms
        residuals[f'{name}_exponent'] = -slope
    exponent = residuals['s_exponent']

    # y_mid is one step past x_mid; over that step the unstable part gains a factor
    # lam on the stable one
    k_mid = (n + 1) // 2
    rho_s = coords['s'][k_mid - 1] * lam ** (k_mid - 1) / constants['s']
    rho_t = coords['t'][k_mid - 1] * lam ** (k_mid - 1) / constants['t']
    theta_z = rho_s - 1.0
    theta_z_t = (rho_t - 1.0) / lam
    theta_w = (rho_t - 1.0) / lam ** 2
    residuals['theta_product'] = theta_z * theta_w * lam - 1.0

    predicted = None
    if family in (3, 4):
        tan_z = math.tan(data.theta_z)
        predicted = (tan_z + data.K_z) / (tan_z - data.K_z)
    fit = HomoclinicFit(
        family=family, n=n, lam=lam, exponent=exponent,
        C_s=constants['s'], C_phi=constants['phi'], C_t=constants['t'], C_psi=constants['psi'],
        C_neg_s=constants['s_neg'], C_neg_t=constants['t_neg'],
        Theta_z=theta_z, Theta_w=theta_w, Theta_z_t_branch=theta_z_t,
        window=window, fit_residuals=residuals, Theta_z_predicted=predicted,
    )
    logger.info(f"Family {family} n={n}: exponent {exponent:.6g} vs log lambda "
                f"{math.log(lam):.6g}, Theta_z={theta_z:.6g}")
    return fit


# Length defects

@dataclass
class DefectSeries:
    k: List[int]
    defects: List[float]
    partial_sum: float
    tail: float
    ratio: float
    slope: float
    window: List[int]
    leading_coefficient: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'k': self.k,
            'defects': self.defects,
            'partial_sum': self.partial_sum,
            'tail': self.tail,
            'ratio': self.ratio,
            'slope': self.slope,
            'window': self.window,
            'leading_coefficient': self.leading_coefficient,
        }


def length_defect_series(table: TableSpec, n_max: int, family: int = 2,
                         homoclinic: Optional[HomoclinicFit] = None,
                         period_data: Optional[PeriodTwoData] = None) -> DefectSeries:
    """Per-pair defects 2 tau* - (|x_k y_k| + |y_k x_k+1|) along the largest orbit."""
    data = period_data or analyze_period_two(table)
    orbits = orbit_family(table, family, n_max)
    if n_max not in orbits:
        raise InsufficientDecayWindow(f"Family {family} reached only n={max(orbits, default=0)}")
    orbit = orbits[n_max]
    chords = orbit.chord_lengths
    tau2 = 2.0 * data.tau_star
    ks = list(range(1, n_max))
    defects = [-CompensatedSum(-tau2).extend((chords[2 * k - 1], chords[2 * k])).value
               for k in ks]
    window = decay_window(n_max, math.log(data.lam), order=2, shadow_length=n_max)
    slope, _, _ = loglinear_fit(window, [defects[w - 1] for w in window])
    ratio = math.exp(slope)
    partial = CompensatedSum().extend(defects).value
    tail = defects[window[-1] - 1] * ratio / (1.0 - ratio)
    coefficient = None
    if homoclinic is not None:
        coefficient = homoclinic.C_s * homoclinic.C_t * (data.lam - 1.0) / (4.0 * data.tau_star)
    return DefectSeries(ks, defects, partial, tail, ratio, slope, window, coefficient)


# Spectral invariants

@dataclass
class SpectralEstimates:
    parity: int
    B: float
    rate: float
    C: float
    D: float
    L_infinity: float
    lam: float
    lam_half: float
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'parity': self.parity, 'B': self.B, 'rate': self.rate, 'C': self.C, 'D': self.D,
            'L_infinity': self.L_infinity, 'lambda': self.lam, 'lambda_half': self.lam_half,
            'diagnostics': self.diagnostics,
        }


@dataclass
class SpectralReport:
    tau_star: float
    lam: float
    tau_star_measured: float
    lam_measured: float
    log_ratio: float
    estimates: Dict[int, SpectralEstimates]
    rows: List[Dict[str, Any]]
    warnings: List[str] = field(default_factory=list)

    def summary(self) -> Dict[str, Any]:
        data = {
            'tau_star': self.tau_star,
            'lambda_analytic': self.lam,
            'lambda_measured': self.lam_measured,
            'tau_star_measured': self.tau_star_measured,
            'log_lambda_half_over_log_lambda': self.log_ratio,
        }
        for parity, est in sorted(self.estimates.items()):
            data[f'B_{parity}'] = est.B
            data[f'C_{parity}'] = est.C
            data[f'D_{parity}'] = est.D
            data[f'rate_{parity}'] = est.rate
        return data


def parity_class(q: int) -> int:
    """1 when (q-1)/2 is odd, 2 when it is even."""
    return 1 if ((q - 1) // 2) % 2 == 1 else 2


def fit_excess_sequence(qs: Sequence[int], excess: Sequence[float],
                        parity: Optional[int] = None) -> SpectralEstimates:
    """Fit excess_q = -B + C * lam_half**-q along one parity class (q spaced by 4)."""
    if len(qs) < 3:
        raise ParityMismatch(f"Parity class needs 3 values, got {len(qs)}")
    steps = np.diff(qs)
    if np.any(steps != 4):
        raise FitUnstable(f"Parity class values must be spaced by 4, got {list(qs)}")
    limit, ratio = geometric_limit(*excess[-3:])
    q_last = qs[-1]
    lam_half = ratio ** -0.25
    lam = ratio ** -0.5
    n_last = (q_last - 1) // 2

    # excess_q = L + b * ratio**((q - q_last)/4), least squares over the tail
    tail_q = np.asarray(qs[-4:], dtype=float)
    tail_d = np.asarray(excess[-4:], dtype=float)
    design = np.column_stack([np.ones_like(tail_q), ratio ** ((tail_q - q_last) / 4.0)])
    (tail_limit, amplitude), *_ = np.linalg.lstsq(design, tail_d, rcond=None)
    fit_residual = tail_d - design @ np.array([tail_limit, amplitude])

    # L_infinity = d_first + sum of increments + geometric tail of the increments
    increments = np.diff(np.asarray(excess, dtype=float))
    l_infinity = CompensatedSum(excess[0]).extend(increments).add(
        increments[-1] * ratio / (1.0 - ratio)).value

    diagnostics = {'window': list(qs[-3:]), 'tail_window': [int(q) for q in tail_q],
                   'B_tail_fit': -float(tail_limit),
                   'tail_rms': float(np.sqrt(np.mean(fit_residual ** 2)))}
    estimates = aitken_sequence(list(excess))
    if len(estimates) > 1:
        diagnostics['B_shift_delta'] = abs(estimates[-1][0] - estimates[-2][0])
    diagnostics['B_richardson'] = -richardson_limit(1.0 / ratio, list(excess[-3:]))
    return SpectralEstimates(
        parity=parity if parity is not None else parity_class(q_last),
        B=-limit,
        rate=ratio,
        C=abs(float(amplitude)) * lam_half ** q_last,
        D=-float(amplitude) * lam ** n_last,
        L_infinity=float(l_infinity),
        lam=lam,
        lam_half=lam_half,
        diagnostics=diagnostics,
    )


def extract_spectral_invariants(table: TableSpec, q_list: Sequence[int],
                                expert: bool = False,
                                period_data: Optional[PeriodTwoData] = None) -> SpectralReport:
    """B, rate, C and D per parity class from the maximal marked lengths."""
    data = period_data or analyze_period_two(table)
    tau = data.tau_star
    warnings = []
    usable = math.floor(math.log(1e-3 / 1e-13) / (2.0 * math.log(data.lam)))
    if usable < 5:
        message = f"lambda={data.lam:.6g} leaves only {usable} usable points above the precision floor"
        logger.warning(message)
        warnings.append(message)

    q_sorted = sorted(set(q_list))
    classes = {1: [q for q in q_sorted if parity_class(q) == 1],
               2: [q for q in q_sorted if parity_class(q) == 2]}
    if not any(len(members) >= 3 for members in classes.values()):
        raise ParityMismatch("No parity class has 3 values of q",
                             {'class_1': classes[1], 'class_2': classes[2]})

    entries = {e.q: e for e in marked_length_spectrum(table, q_sorted, expert=expert)}
    excess = {q: entries[q].orbit.length_excess(tau) for q in q_sorted}

    estimates = {}
    for parity, members in classes.items():
        if len(members) < 3:
            message = f"Parity class {parity} has only {len(members)} values of q; skipped"
            logger.warning(message)
            warnings.append(message)
            continue
        estimates[parity] = fit_excess_sequence(members, [excess[q] for q in members], parity)

    rows = []
    for q in q_sorted:
        parity = parity_class(q)
        members = classes[parity]
        i = members.index(q)
        row = {'q': q, 'parity': parity, 'ML': entries[q].max_length, 'd_q': excess[q],
               'B_accelerated': float('nan'), 'local_rate': float('nan'),
               'argmax': str(entries[q].argmax_code)}
        if i >= 2:
            try:
                limit, ratio = geometric_limit(*[excess[m] for m in members[i - 2:i + 1]])
                row['B_accelerated'] = -limit
                row['local_rate'] = ratio
            except FitUnstable as e:
                logger.debug(f"q={q}: {e}")
        rows.append(row)

    tau_estimates = []
    for members in classes.values():
        steps = [(entries[b].max_length - entries[a].max_length) / (b - a)
                 for a, b in zip(members, members[1:])]
        if len(steps) >= 3:
            try:
                tau_estimates.append(aitken_sequence(steps)[-1][0])
                continue
            except FitUnstable:
                pass
        if steps:
            tau_estimates.append(steps[-1])
    tau_measured = float(np.mean(tau_estimates)) if tau_estimates else float('nan')

    lam_measured = float(np.exp(np.mean([math.log(e.lam) for e in estimates.values()])))
    lam_half = float(np.exp(np.mean([math.log(e.lam_half) for e in estimates.values()])))
    report = SpectralReport(
        tau_star=tau,
        lam=data.lam,
        tau_star_measured=tau_measured,
        lam_measured=lam_measured,
        log_ratio=math.log(lam_half) / math.log(data.lam),
        estimates=estimates,
        rows=rows,
        warnings=warnings,
    )
    logger.info(f"{table.name}: measured lambda {lam_measured:.8g} vs analytic {data.lam:.8g}")
    return report


# Curvature recovery

@dataclass
class RecoveryResult:
    K1: float
    K2: float
    roots: List[Tuple[float, float]]
    branch_ambiguous: bool
    residuals: Tuple[float, float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'K1': self.K1,
            'K2': self.K2,
            'roots': [list(root) for root in self.roots],
            'branch_ambiguous': self.branch_ambiguous,
            'residuals': list(self.residuals),
        }


def relation_one(lam: float, tau_star: float, k1: float, k2: float) -> float:
    return 4.0 * (tau_star * k1 - 1.0) * (tau_star * k2 - 1.0) - 2.0 - (lam + 1.0 / lam)


def relation_two_rhs(tau_star: float, k1: float, k2: float) -> float:
    x = 1.0 - 1.0 / (tau_star * k1)
    y = 1.0 - 1.0 / (tau_star * k2)
    denominator = (1.0 - 1.0 / (tau_star * k1) - 1.0 / (tau_star * k2)) ** 2 + 3.0
    if denominator == 0.0:
        raise FitUnstable("Curvature relation denominator vanishes")
    return (x * x - y * y) / denominator


def relation_two_lhs(lam: float, c1: float, c2: float) -> float:
    if c1 + c2 == 0.0:
        raise NoRealRoot("C constants sum to zero")
    return (c1 - c2) * (lam + 1.0) ** 2 / ((c1 + c2) * (lam - 1.0) ** 2)


def symmetric_curvature(lam: float, tau_star: float) -> float:
    """Common curvature of both arcs when K1 = K2."""
    product = (lam + 1.0 / lam + 2.0) / 4.0
    return (1.0 + math.sqrt(product)) / tau_star


def recover_curvatures(estimates: Mapping[int, SpectralEstimates], tau_star: float,
                       scan_points: int = 2000) -> RecoveryResult:
    """Solve both curvature relations for (K1, K2)."""
    if 1 not in estimates or 2 not in estimates:
        raise ParityMismatch("Curvature recovery needs estimates for both parity classes")
    lam = math.sqrt(estimates[1].lam * estimates[2].lam)
    if not lam > 1.0:
        raise NoRealRoot(f"lambda must exceed 1, got {lam}")
    c1, c2 = estimates[1].C, estimates[2].C
    lhs = relation_two_lhs(lam, c1, c2)
    product = (lam + 1.0 / lam + 2.0) / 4.0

    # relation one as a curve: tau*K1 = 1 + e^u, tau*K2 = 1 + product * e^-u
    def curvatures(u: float) -> Tuple[float, float]:
        return (1.0 + math.exp(u)) / tau_star, (1.0 + product * math.exp(-u)) / tau_star

    def gap(u: float) -> float:
        return relation_two_rhs(tau_star, *curvatures(u)) - lhs

    center = 0.5 * math.log(product)
    grid = np.linspace(center - 12.0, center + 12.0, scan_points)
    values = np.array([gap(u) for u in grid])
    roots = []
    for u0, u1, g0, g1 in zip(grid, grid[1:], values, values[1:]):
        if g0 == 0.0:
            roots.append(u0)
        elif g0 * g1 < 0.0:
            roots.append(optimize.brentq(gap, u0, u1, xtol=1e-15))
    if not roots:
        raise NoRealRoot("Curvature relations have no real solution",
                         {'lambda': lam, 'C1': c1, 'C2': c2, 'lhs': lhs})

    def residual(k):
        return [relation_one(lam, tau_star, k[0], k[1]),
                relation_two_rhs(tau_star, k[0], k[1]) - lhs]

    polished = []
    for u in roots:
        solution = optimize.root(residual, curvatures(u), method='hybr', tol=1e-14)
        k1, k2 = (solution.x if solution.success else curvatures(u))
        polished.append((float(k1), float(k2)))
    polished.sort()
    ambiguous = abs(c1 - c2) <= 1e-9 * abs(c1 + c2) or len(polished) > 1
    if ambiguous:
        logger.warning(f"Curvature recovery is branch ambiguous: {polished}")
    k1, k2 = polished[0]
    res = residual((k1, k2))
    return RecoveryResult(k1, k2, polished, ambiguous, (float(res[0]), float(res[1])))


def synthesize_estimates(tau_star: float, K1: float, K2: float,
                         c_sum: float = 1.0) -> Dict[int, SpectralEstimates]:
    """Spectral estimates a circular squash stadium with these curvatures produces."""
    trace = 4.0 * (tau_star * K1 - 1.0) * (tau_star * K2 - 1.0) - 2.0
    if trace <= 2.0:
        raise NotHyperbolic(f"lambda + 1/lambda = {trace} is not above 2")
    lam = (trace + math.sqrt(trace * trace - 4.0)) / 2.0
    ratio = relation_two_rhs(tau_star, K1, K2) * (lam - 1.0) ** 2 / (lam + 1.0) ** 2
    constants = {1: c_sum * (1.0 + ratio) / 2.0, 2: c_sum * (1.0 - ratio) / 2.0}
    return {
        parity: SpectralEstimates(parity=parity, B=0.0, rate=lam ** -2, C=c, D=0.0,
                                  L_infinity=0.0, lam=lam, lam_half=math.sqrt(lam),
                                  diagnostics={'synthetic': True})
        for parity, c in constants.items()
    }


def _mean_barrier(report: SpectralReport) -> float:
    if not report.estimates:
        raise ParityMismatch("Spectral report has no parity class estimates")
    return float(np.mean([est.B for est in report.estimates.values()]))


def _argmax_codes(report: SpectralReport) -> List[str]:
    return [row['argmax'] for row in report.rows]


def match_squash_curvatures(report: SpectralReport, q_list: Sequence[int], expert: bool = False,
                            scan_points: int = 9, passes: int = 2, flat_margin: float = 0.75,
                            xtol: float = 1e-10) -> RecoveryResult:
    """Curvatures of the circular squash whose computed spectrum reproduces the report.

    The search runs along the relation-one curve through the measured lambda and
    tau*, and stops where the model table's barrier B (mean over parity classes)
    equals the measured one. The model is evaluated on the same q values, so the
    finite-window bias of B cancels. Each further pass removes the bias of the
    measured lambda and tau* using the model table at the previous answer. The
    argmax codes decide between roots, which is what labels arc 1 against arc 2.
    """
    q_list = sorted(set(q_list))
    target = _mean_barrier(report)
    codes = _argmax_codes(report)
    lam, tau = report.lam_measured, report.tau_star_measured
    if not lam > 1.0:
        raise NoRealRoot(f"lambda must exceed 1, got {lam}")

    answer, chosen, ambiguous, model = None, [], False, None
    for step in range(passes):
        product = (lam + 1.0 / lam + 2.0) / 4.0
        center = 0.5 * math.log(product)

        def curvatures(u: float, tau=tau, product=product) -> Tuple[float, float]:
            return (1.0 + math.exp(u)) / tau, (1.0 + product * math.exp(-u)) / tau

        def slack(u: float) -> float:
            R1, R2 = (1.0 / k for k in curvatures(u))
            return (tau - R1 - R2) - abs(R1 - R2)

        # the flats vanish where the axis gap equals |R1 - R2|; symmetric about center
        edge = optimize.brentq(slack, center, center + 12.0, xtol=1e-12)
        half = flat_margin * (edge - center)
        models: Dict[float, Optional[SpectralReport]] = {}

        def evaluate(u: float) -> Optional[SpectralReport]:
            if u not in models:
                k1, k2 = curvatures(u)
                try:
                    table = squash_from_curvatures(tau, k1, k2)
                    models[u] = extract_spectral_invariants(table, q_list, expert=expert)
                except BilliardError as e:
                    logger.debug(f"Model squash at K=({k1:.6g}, {k2:.6g}) failed: {e}")
                    models[u] = None
            return models[u]

        def gap(u: float) -> float:
            found = evaluate(u)
            if found is None:
                raise NoConvergence(f"Model squash at u={u:.6g} has no spectrum")
            return _mean_barrier(found) - target

        grid = np.linspace(center - half, center + half, scan_points)
        values = []
        for u in grid:
            try:
                values.append(gap(float(u)))
            except BilliardError:
                values.append(float('nan'))
        roots = []
        for u0, u1, g0, g1 in zip(grid, grid[1:], values, values[1:]):
            if math.isnan(g0) or math.isnan(g1):
                continue
            if g0 == 0.0:
                roots.append(float(u0))
            elif g0 * g1 < 0.0:
                try:
                    roots.append(optimize.brentq(gap, float(u0), float(u1), xtol=xtol))
                except BilliardError as e:
                    logger.warning(f"Barrier bracket [{u0:.6g}, {u1:.6g}] abandoned: {e}")
        if values[-1] == 0.0:
            roots.append(float(grid[-1]))
        if not roots:
            raise NoRealRoot("No model squash reproduces the measured barrier",
                             {'target_B': target, 'lambda': lam, 'tau_star': tau,
                              'scan': [[float(u), g] for u, g in zip(grid, values)]})

        roots = [u for u in roots if evaluate(u) is not None]
        if not roots:
            raise NoConvergence("Model squash failed at every barrier root")
        chosen = [u for u in roots if _argmax_codes(evaluate(u)) == codes] or roots
        ambiguous = len(chosen) > 1
        if answer is not None:
            chosen.sort(key=lambda u: abs(curvatures(u)[0] - answer[0]))
        u = chosen[0]
        answer = curvatures(u)
        model = evaluate(u)
        logger.info(f"Pass {step + 1}: K=({answer[0]:.10g}, {answer[1]:.10g}) "
                    f"from {len(roots)} barrier roots")
        lam = report.lam_measured * model.lam / model.lam_measured
        tau = report.tau_star_measured * model.tau_star / model.tau_star_measured

    if ambiguous:
        logger.warning(f"Barrier match is ambiguous between {len(chosen)} roots")
    k1, k2 = answer
    pairs = sorted(curvatures(u) for u in chosen)
    residuals = (relation_one(model.lam, model.tau_star, k1, k2), _mean_barrier(model) - target)
    return RecoveryResult(k1, k2, [(float(a), float(b)) for a, b in pairs], ambiguous,
                          (float(residuals[0]), float(residuals[1])))
