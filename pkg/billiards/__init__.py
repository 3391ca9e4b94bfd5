"""
Billiards - a numerical lab for stadium-like billiard tables.

Geometry, the billiard map, maximal periodic orbits, spectral invariants and
deformation rigidity experiments.
"""

from .errors import BilliardError, ValidationError
from .geometry import (TableSpec, check_defocusing, double_cover, load_table, squash_stadium,
                       std_stadium, table_diameter, weak_stadium)
from .dynamics import (PhasePoint, billiard_map, expansion_factor, free_path_jet,
                       map_differential, trajectory)
from .orbits import (OrbitResult, SymbolicCode, marked_length_max, marked_length_spectrum,
                     orbit_family, palindromic_orbit, period_two, rotation_orbit, solve_code)
from .invariants import (analyze_period_two, extract_spectral_invariants,
                         fit_homoclinic_constants, length_defect_series, recover_curvatures)
from .rigidity import (DeformationFamily, DisplacementSpec, cancellation_sums,
                       isospectral_derivative_check, lagrange_coeffs, unfolded_period_four,
                       unfolded_period_two)

__version__ = "0.1.0"

__all__ = [
    'BilliardError',
    'ValidationError',
    'TableSpec',
    'check_defocusing',
    'double_cover',
    'load_table',
    'squash_stadium',
    'std_stadium',
    'table_diameter',
    'weak_stadium',
    'PhasePoint',
    'billiard_map',
    'expansion_factor',
    'free_path_jet',
    'map_differential',
    'trajectory',
    'OrbitResult',
    'SymbolicCode',
    'marked_length_max',
    'marked_length_spectrum',
    'orbit_family',
    'palindromic_orbit',
    'period_two',
    'rotation_orbit',
    'solve_code',
    'analyze_period_two',
    'extract_spectral_invariants',
    'fit_homoclinic_constants',
    'length_defect_series',
    'recover_curvatures',
    'DeformationFamily',
    'DisplacementSpec',
    'cancellation_sums',
    'isospectral_derivative_check',
    'lagrange_coeffs',
    'unfolded_period_four',
    'unfolded_period_two',
]
