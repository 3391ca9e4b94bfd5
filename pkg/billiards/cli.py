"""
Experiment orchestration for the billiard lab

Each experiment is a small runner object registered by name. A run loads and
validates the table, resolves parameters and tolerances, then writes CSV
outputs and summary.txt (or error.json when the experiment fails).
"""

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .config import LOG_FORMAT, get_log_level, override_tolerances, resolve_tolerances
from .dynamics import map_differential, phase_point, trajectory
from .errors import VALIDATION, BilliardError, ConfigError, NumericalFailure
from .geometry import TableSpec, check_defocusing, load_table, table_diameter
from .invariants import (analyze_period_two, extract_spectral_invariants,
                         fit_homoclinic_constants, length_defect_series,
                         match_squash_curvatures, recover_curvatures, SpectralEstimates,
                         synthesize_estimates)
from .orbits import (marked_length_spectrum, multistart, orbit_distance, replay_orbit,
                     solve_named)
from .reports import ReportWriter
from .rigidity import (DeformationFamily, DisplacementSpec, cancellation_sweep, channel_sweep,
                       isospectral_derivative_check, quartic_well)

logger = logging.getLogger(__name__)

CONFIG_KEYS = ('table', 'experiment', 'params', 'output', 'seed', 'tolerances')

# raised by numpy, scipy and math inside the solvers
NUMERICAL_ERRORS = (np.linalg.LinAlgError, ArithmeticError, ValueError)


@dataclass
class ExperimentConfig:
    experiment: str
    table: Union[str, Dict[str, Any]] = 'std-stadium'
    params: Dict[str, Any] = field(default_factory=dict)
    output: str = 'results'
    seed: int = 0
    tolerances: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        unknown = set(data) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        if 'experiment' not in data:
            raise ConfigError("Config needs an experiment")
        for key in ('params', 'tolerances'):
            if not isinstance(data.get(key, {}), dict):
                raise ConfigError(f"Config section {key} must be a mapping")
        seed = data.get('seed', 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        if not isinstance(data.get('output', 'results'), str):
            raise ConfigError("output must be a directory path")
        return cls(**data)


def load_config(path: str) -> Dict[str, Any]:
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must hold a JSON object")
    return data


# Parameter coercion

def _cast(value: Any, kind: Callable, key: str) -> Any:
    if isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"Parameter {key} must be {kind.__name__}, got {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"Parameter {key} must be {kind.__name__}, got {value!r}")


def _cast_list(value: Any, kind: Callable, key: str) -> List[Any]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"Parameter {key} must be a non-empty list, got {value!r}")
    return [_cast(v, kind, key) for v in value]


def _optional(value: Any, kind: Callable, key: str) -> Any:
    return None if value is None else _cast(value, kind, key)


def _arc_letter(name: Any) -> int:
    text = str(name).strip().lower()
    letter = text[3:] if text.startswith('arc') else text
    if letter not in ('1', '2'):
        raise ConfigError(f"Displacements apply to arc1 or arc2, got {name!r}")
    return int(letter)


def _displacements(table: TableSpec, spec: Optional[Dict[str, Any]], amplitude: float,
                   flat_order: int) -> Dict[int, DisplacementSpec]:
    """Displacement specs per arc; the default is a quartic well on arc1."""
    if spec is None:
        return {1: quartic_well(table.arc1.length, amplitude, flat_order)}
    if not isinstance(spec, dict):
        raise ConfigError("displacements must map arc names to displacement specs")
    result = {}
    for name, data in spec.items():
        letter = _arc_letter(name)
        if isinstance(data, dict) and data.get('kind') == 'quartic_well':
            extra = set(data) - {'kind', 'amplitude', 'flat_order'}
            if extra:
                raise ConfigError(f"Unknown quartic_well keys: {sorted(extra)}")
            result[letter] = quartic_well(table.piece(letter).length,
                                          _cast(data.get('amplitude', amplitude), float, 'amplitude'),
                                          _cast(data.get('flat_order', flat_order), int, 'flat_order'))
        elif isinstance(data, dict):
            result[letter] = DisplacementSpec.from_dict(data)
        else:
            raise ConfigError(f"Displacement for {name} must be a mapping")
    return result


# Experiments

class Experiment:
    """Base runner: defaults name the accepted parameters."""

    name = ''
    description = ''
    defaults: Dict[str, Any] = {}

    def resolve(self, params: Dict[str, Any]) -> Dict[str, Any]:
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise ConfigError(f"Unknown {self.name} parameters: {sorted(unknown)}")
        resolved = dict(self.defaults)
        resolved.update(params)
        return resolved

    def run(self, table: TableSpec, params: Dict[str, Any], writer: ReportWriter,
            seed: int) -> Dict[str, Dict[str, Any]]:
        raise NotImplementedError


class CheckExperiment(Experiment):
    name = 'check'
    description = 'Geometry validation, defocusing test and diameter'
    defaults = {'grid': None, 'doubly': None}

    def run(self, table, params, writer, seed):
        grid = _optional(params['grid'], int, 'grid')
        doubly = params['doubly'] if params['doubly'] is None else bool(params['doubly'])
        report = check_defocusing(table, grid=grid, doubly=doubly)
        diameter, info = table_diameter(table)
        writer.write_csv('defocusing.csv',
                         ['holds', 'worst_margin [length]', 'doubly', 'grid', 'diameter [length]'],
                         [(report.holds, report.worst_margin, report.doubly, report.grid, diameter)])
        return {
            'defocusing': report.to_dict(),
            'geometry': {'perimeter': table.perimeter, 'diameter': diameter,
                         'diameter_arcs': info.get('letters'), 'warnings': list(table.warnings)},
        }


class MapExperiment(Experiment):
    name = 'map'
    description = 'Iterate the billiard map and export the trajectory'
    defaults = {'r': None, 'phi': 0.0, 'steps': 10}

    def run(self, table, params, writer, seed):
        r = params['r']
        r = table.offsets[1] + table.arc1.length / 2 if r is None else _cast(r, float, 'r')
        z = phase_point(table, r, _cast(params['phi'], float, 'phi'))
        steps = _cast(params['steps'], int, 'steps')
        jacobian = map_differential(table, z)
        path = trajectory(table, z, steps)
        writer.write_csv('trajectory.csv',
                         ['step', 'letter', 'r [arclength]', 'phi [rad]', 'tau [length]'],
                         [(k + 1, step.letter, step.z1.r, step.z1.phi, step.tau)
                          for k, step in enumerate(path)])
        return {
            'start': z.to_dict(),
            'differential': {'matrix': jacobian.to_list(), 'determinant': jacobian.determinant,
                             'expected_determinant': jacobian.expected_determinant},
            'trajectory': {'steps': len(path),
                           'max_reflection_residual': max(s.reflection_residual for s in path)},
        }


class OrbitExperiment(Experiment):
    name = 'orbit'
    description = 'Solve periodic orbits by their codes'
    defaults = {'codes': ['(12)'], 'starts': 0, 'spread': 0.15}

    def run(self, table, params, writer, seed):
        codes = _cast_list(params['codes'], str, 'codes')
        starts = _cast(params['starts'], int, 'starts')
        rows, sections = [], {}
        for code in codes:
            orbit = solve_named(table, code)
            for index, letter, r, phi, chord in orbit.to_rows():
                rows.append((code, index, letter, r, phi, chord))
            section = orbit.to_dict()
            section.pop('code')
            section['label'] = orbit.code.label or str(orbit.code)
            if orbit.period <= 12:
                section['replay'] = replay_orbit(table, orbit)
            if starts > 0 and not code.strip().startswith('gamma'):
                found = multistart(table, code, starts,
                                   _cast(params['spread'], float, 'spread'), seed)
                lengths = [o.total_length for o in found]
                section['multistart_spread'] = max(lengths) - min(lengths)
                section['multistart_distance'] = max(orbit_distance(table, orbit, o) for o in found)
            sections[f'orbit {code}'] = section
        writer.write_csv('orbits.csv', ['code', 'index', 'letter', 'r [arclength]', 'phi [rad]',
                                        'chord [length]'], rows)
        return sections


class SpectrumExperiment(Experiment):
    name = 'spectrum'
    description = 'Maximal marked lengths for rotation (q-1)/(2q)'
    defaults = {'q_list': [3, 5, 7, 9, 11], 'expert': False}

    def run(self, table, params, writer, seed):
        q_list = _cast_list(params['q_list'], int, 'q_list')
        entries = marked_length_spectrum(table, q_list, expert=bool(params['expert']))
        writer.write_csv('spectrum.csv',
                         ['q', 'rotation', 'max_length [length]', 'argmax_code', 'argmax_label',
                          'candidates', 'ties', 'partial'],
                         [(e.q, e.rotation, e.max_length, str(e.argmax_code), e.argmax_code.label,
                           e.candidates_examined, ' '.join(e.ties), e.partial) for e in entries])
        return {f'q={e.q}': e.to_dict() for e in entries}


class InvariantsExperiment(Experiment):
    name = 'invariants'
    description = 'Spectral invariants, homoclinic constants and curvature recovery'
    defaults = {'q_list': [3, 7, 11, 15, 19, 23], 'expert': False, 'homoclinic_n': 0,
                'family': 2}

    def run(self, table, params, writer, seed):
        q_list = _cast_list(params['q_list'], int, 'q_list')
        data = analyze_period_two(table)
        report = extract_spectral_invariants(table, q_list, bool(params['expert']), data)
        writer.write_csv('spectral_report.csv',
                         ['q', 'parity', 'ML [length]', 'd_q [length]', 'B_accelerated [length]',
                          'local_rate [1]', 'argmax'],
                         [(row['q'], row['parity'], row['ML'], row['d_q'], row['B_accelerated'],
                           row['local_rate'], row['argmax']) for row in report.rows])
        sections = {
            'period two': data.to_dict(),
            'spectral': report.summary(),
        }
        for parity, est in sorted(report.estimates.items()):
            sections[f'parity {parity}'] = est.to_dict()
        if report.warnings:
            sections['warnings'] = {f'warning {i + 1}': w for i, w in enumerate(report.warnings)}
        if len(report.estimates) == 2:
            try:
                sections['recovery'] = recover_curvatures(report.estimates, data.tau_star).to_dict()
            except BilliardError as e:
                logger.warning(f"Curvature recovery failed: {e}")
                sections['recovery'] = e.to_dict()

        homoclinic_n = _cast(params['homoclinic_n'], int, 'homoclinic_n')
        if homoclinic_n > 0:
            family = _cast(params['family'], int, 'family')
            fit = fit_homoclinic_constants(table, family, range(1, homoclinic_n + 1), data)
            series = length_defect_series(table, fit.n, family, fit, data)
            writer.write_csv('defects.csv', ['k', 'defect [length]'],
                             zip(series.k, series.defects))
            sections['homoclinic'] = fit.to_dict()
            sections['defects'] = {key: value for key, value in series.to_dict().items()
                                   if key not in ('k', 'defects')}
        return sections


class RecoverExperiment(Experiment):
    name = 'recover'
    description = 'Recover arc curvatures from the length spectrum'
    defaults = {'tau_star': None, 'K1': None, 'K2': None, 'c_sum': 1.0, 'estimates': None,
                'q_list': None, 'expert': False}

    def run(self, table, params, writer, seed):
        if params['q_list'] is not None:
            return self._from_spectrum(table, params, writer)
        if params['tau_star'] is None:
            tau_star = analyze_period_two(table).tau_star
        else:
            tau_star = _cast(params['tau_star'], float, 'tau_star')
        truth = None
        if params['estimates'] is not None:
            estimates = {}
            for key, values in dict(params['estimates']).items():
                parity = _cast(key, int, 'estimates')
                lam = _cast(values['lambda'], float, 'lambda')
                estimates[parity] = SpectralEstimates(
                    parity=parity, B=0.0, rate=lam ** -2, C=_cast(values['C'], float, 'C'),
                    D=0.0, L_infinity=0.0, lam=lam, lam_half=math.sqrt(lam))
        else:
            if params['K1'] is None or params['K2'] is None:
                raise ConfigError("recover needs K1 and K2, an estimates section or a q_list")
            truth = (_cast(params['K1'], float, 'K1'), _cast(params['K2'], float, 'K2'))
            estimates = synthesize_estimates(tau_star, *truth, _cast(params['c_sum'], float, 'c_sum'))
        result = recover_curvatures(estimates, tau_star)
        writer.write_csv('recovery.csv',
                         ['root', 'K1 [1/length]', 'K2 [1/length]'],
                         [(i, k1, k2) for i, (k1, k2) in enumerate(result.roots)])
        section = result.to_dict()
        section['tau_star'] = tau_star
        if truth is not None:
            section['K1_error'] = abs(result.K1 - truth[0])
            section['K2_error'] = abs(result.K2 - truth[1])
        return {'recovery': section}

    def _from_spectrum(self, table, params, writer):
        q_list = _cast_list(params['q_list'], int, 'q_list')
        expert = bool(params['expert'])
        data = analyze_period_two(table)
        report = extract_spectral_invariants(table, q_list, expert=expert, period_data=data)
        result = match_squash_curvatures(report, q_list, expert=expert)
        writer.write_csv('recovery.csv',
                         ['root', 'K1 [1/length]', 'K2 [1/length]'],
                         [(i, k1, k2) for i, (k1, k2) in enumerate(result.roots)])
        section = result.to_dict()
        section.update({'tau_star': report.tau_star_measured, 'lambda': report.lam_measured,
                        'K1_error': abs(result.K1 - data.K_z),
                        'K2_error': abs(result.K2 - data.K_w)})
        sections = {'recovery': section, 'spectrum': report.summary()}
        try:
            relations = recover_curvatures(report.estimates, report.tau_star_measured)
            sections['relations'] = relations.to_dict()
        except BilliardError as e:
            sections['relations'] = {'error': e.to_dict()}
        return sections


class DeformExperiment(Experiment):
    name = 'deform'
    description = 'Isospectral derivative identity along a deformation'
    defaults = {'displacements': None, 'amplitude': 0.01, 'flat_order': 0, 'mu': 0.0, 'h': 1e-5,
                'codes': ['gamma_2'], 'mu_range': [-1.0, 1.0]}

    def run(self, table, params, writer, seed):
        displacements = _displacements(table, params['displacements'],
                                       _cast(params['amplitude'], float, 'amplitude'),
                                       _cast(params['flat_order'], int, 'flat_order'))
        mu_range = tuple(_cast_list(params['mu_range'], float, 'mu_range'))
        family = DeformationFamily(table, displacements, mu_range)
        mu = _cast(params['mu'], float, 'mu')
        codes = _cast_list(params['codes'], str, 'codes')
        result = isospectral_derivative_check(family, codes if len(codes) > 1 else codes[0],
                                              mu, _cast(params['h'], float, 'h'))
        writer.write_csv('deform.csv',
                         ['code', 'mu [1]', 'h [1]', 'half_derivative [length]',
                          'sum_G [length]', 'rel_err [1]'],
                         [(result['code'], result['mu'], result['h'], result['lhs'], result['rhs'],
                           result['rel_err'])])
        sections = {'identity': result,
                    'displacements': {f'arc{k}': v.to_dict() for k, v in displacements.items()}}
        if mu != 0.0:
            sections['defocusing'] = family.check(mu).to_dict()
        return sections


class UnfoldExperiment(Experiment):
    name = 'unfold'
    description = 'Channel orbits of a stadium and their asymptotic coordinates'
    defaults = {'n_values': list(range(5, 21)), 'rho': None}

    def run(self, table, params, writer, seed):
        n_values = _cast_list(params['n_values'], int, 'n_values')
        rho = _optional(params['rho'], float, 'rho')
        sweep = channel_sweep(table, n_values, rho)
        keys = ('n', 'm', 's_bar', 't_bar', 't_bar2', 'phi_bar', 'length', 'perpendicularity',
                'equal_angle')
        writer.write_csv('unfold.csv',
                         ['n', 'm', 's_bar [arclength]', 't_bar [arclength]',
                          't_bar2 [arclength]', 'phi_bar [rad]', 'length [length]',
                          'perpendicularity [rad]', 'equal_angle [rad]'],
                         [tuple(o.to_dict()[key] for key in keys) for o in sweep['orbits']])
        sections = {'channel': {'Q': sweep['Q'], 'K14': sweep['K14'], 'K23': sweep['K23'],
                                'rho': rho}}
        for key, fit in sweep['fits'].items():
            sections[f'fit {key}'] = fit
        return sections


class CancelExperiment(Experiment):
    name = 'cancel'
    description = 'Lagrange cancellation of palindromic G sums'
    defaults = {'displacements': None, 'amplitude': 1.0, 'flat_order': 2, 'ells': [2, 3, 4, 5],
                'm': 3}

    def run(self, table, params, writer, seed):
        displacements = _displacements(table, params['displacements'],
                                       _cast(params['amplitude'], float, 'amplitude'),
                                       _cast(params['flat_order'], int, 'flat_order'))
        ells = _cast_list(params['ells'], int, 'ells')
        sweep = cancellation_sweep(table, displacements, ells, _cast(params['m'], int, 'm'))
        writer.write_csv('cancel.csv',
                         ['ell', 'combo [length]', 'combo_complement [length]',
                          'predicted_bound [1]'],
                         [(row['ell'], row['combo'], row['combo_complement'],
                           row['predicted_bound']) for row in sweep['rows']])
        return {'cancellation': {key: value for key, value in sweep.items() if key != 'rows'}}


class ExperimentRunner:
    """Registry of experiments by name"""

    def __init__(self):
        self.experiments = {
            experiment.name: experiment for experiment in (
                CheckExperiment(), MapExperiment(), OrbitExperiment(), SpectrumExperiment(),
                InvariantsExperiment(), RecoverExperiment(), DeformExperiment(),
                UnfoldExperiment(), CancelExperiment(),
            )
        }

    def get(self, name: str) -> Experiment:
        if name not in self.experiments:
            raise ConfigError(f"Unknown experiment: {name}")
        return self.experiments[name]

    def get_experiments(self) -> List[str]:
        return list(self.experiments.keys())


RUNNER = ExperimentRunner()


def _fail(error: BilliardError, experiment: str, writer: ReportWriter) -> int:
    # invalid input found before any output leaves the directory untouched
    if error.category == VALIDATION and not writer.started:
        logger.error(f"{experiment}: {error.message}")
        print(json.dumps(error.to_dict(), sort_keys=True, default=str), file=sys.stderr)
    else:
        writer.write_error(error, experiment)
    return error.exit_code


def run(config: ExperimentConfig) -> int:
    """Execute one experiment; returns the exit code."""
    try:
        experiment = RUNNER.get(config.experiment)
        params = experiment.resolve(config.params)
        resolve_tolerances(config.tolerances)
        table = load_table(config.table)
        table.validate()
    except BilliardError as e:
        logger.error(f"Invalid run configuration: {e.message}")
        print(json.dumps(e.to_dict(), sort_keys=True, default=str), file=sys.stderr)
        return e.exit_code

    writer = ReportWriter(config.output)
    logger.info(f"Running {experiment.name} on {table.name} (seed {config.seed})")
    with override_tolerances(config.tolerances) as tolerances:
        try:
            sections = experiment.run(table, params, writer, config.seed)
        except BilliardError as e:
            return _fail(e, experiment.name, writer)
        except NUMERICAL_ERRORS as e:
            logger.exception(f"{experiment.name} hit a numerical failure")
            return _fail(NumericalFailure.wrap(e), experiment.name, writer)
    header = {'experiment': experiment.name, 'table': table.name, 'seed': config.seed,
              'outputs': list(writer.files)}
    header.update({f'tolerance {key}': value for key, value in sorted(tolerances.items())})
    writer.write_summary(f"{experiment.name}: {experiment.description}",
                         {'run': header, **sections})
    return 0


def _tolerance_pairs(values: Optional[Sequence[str]]) -> Dict[str, float]:
    overrides = {}
    for item in values or []:
        key, sep, value = item.partition('=')
        if not sep:
            raise ConfigError(f"Tolerance override must look like KEY=VALUE, got {item!r}")
        overrides[key.strip()] = _cast(value, float, key.strip())
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Billiard dynamics lab')
    subparsers = parser.add_subparsers(dest='experiment', help='Available experiments')

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument('--table', help='Builtin table name or JSON table file')
    shared.add_argument('--config', help='JSON experiment config; its keys override flags')
    shared.add_argument('--output', help='Output directory')
    shared.add_argument('--seed', type=int, help='Seed for multistart solves')
    shared.add_argument('--tolerance', action='append', metavar='KEY=VALUE',
                        help='Solver tolerance override')

    for experiment in RUNNER.experiments.values():
        sub = subparsers.add_parser(experiment.name, parents=[shared], help=experiment.description)
        if experiment.name == 'check':
            sub.add_argument('--grid', type=int, help='Defocusing grid size per arc')
            sub.add_argument('--doubly', action='store_true', default=None,
                             help='Include the reflected arcs of the double cover')
        elif experiment.name == 'map':
            sub.add_argument('--r', type=float, help='Start arclength')
            sub.add_argument('--phi', type=float, help='Start angle to the normal')
            sub.add_argument('--steps', type=int, help='Number of collisions')
        elif experiment.name == 'orbit':
            sub.add_argument('--code', dest='codes', action='append', help='Orbit code, repeatable')
            sub.add_argument('--starts', type=int, help='Multistart solves per code')
        elif experiment.name in ('spectrum', 'invariants'):
            sub.add_argument('--q', dest='q_list', type=int, nargs='+', help='Collision counts')
            sub.add_argument('--expert', action='store_true', default=None,
                             help='Include the family starting on arc1')
            if experiment.name == 'invariants':
                sub.add_argument('--homoclinic-n', dest='homoclinic_n', type=int,
                                 help='Largest n for homoclinic constants')
        elif experiment.name == 'recover':
            sub.add_argument('--tau-star', dest='tau_star', type=float, help='Period-two length')
            sub.add_argument('--K1', type=float, help='Arc1 curvature to round-trip')
            sub.add_argument('--K2', type=float, help='Arc2 curvature to round-trip')
            sub.add_argument('--q', dest='q_list', type=int, nargs='+',
                             help='Recover from the measured spectrum of the table at these q')
            sub.add_argument('--expert', action='store_true', default=None,
                             help='Include the family starting on arc1')
        elif experiment.name == 'deform':
            sub.add_argument('--mu', type=float, help='Deformation parameter')
            sub.add_argument('--h', type=float, help='Finite-difference step')
            sub.add_argument('--code', dest='codes', action='append', help='Candidate code')
            sub.add_argument('--amplitude', type=float, help='Default displacement amplitude')
        elif experiment.name == 'unfold':
            sub.add_argument('--n', dest='n_values', type=int, nargs='+', help='Cell counts')
            sub.add_argument('--rho', type=float, help='Cell ratio for period-four orbits')
        elif experiment.name == 'cancel':
            sub.add_argument('--ell', dest='ells', type=int, nargs='+', help='Values of ell')
            sub.add_argument('--m', type=int, help='Number of cancelled powers')
    return parser


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge flags with the config file; the file wins."""
    shared = {'table', 'config', 'output', 'seed', 'tolerance', 'experiment'}
    data: Dict[str, Any] = {'experiment': args.experiment}
    if args.table is not None:
        data['table'] = args.table
    if args.output is not None:
        data['output'] = args.output
    if args.seed is not None:
        data['seed'] = args.seed
    data['tolerances'] = _tolerance_pairs(args.tolerance)
    data['params'] = {key: value for key, value in vars(args).items()
                      if key not in shared and value is not None}
    if args.config:
        from_file = load_config(args.config)
        for key, value in from_file.items():
            if key in ('params', 'tolerances') and isinstance(value, dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
    return ExperimentConfig.from_dict(data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=get_log_level(), format=LOG_FORMAT)

    if not args.experiment:
        parser.print_help()
        return 0

    try:
        config = build_config(args)
    except BilliardError as e:
        print(f"❌ {e.message}")
        return e.exit_code

    code = run(config)
    if code == 0:
        print(f"✅ {config.experiment} finished, outputs in {Path(config.output)}")
    else:
        print(f"❌ {config.experiment} failed with exit code {code}")
    return code
