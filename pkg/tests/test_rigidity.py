from __future__ import annotations

import math

import numpy as np
import pytest

from billiards.dynamics import phase_point
from billiards.errors import NearUnitLambda, OrbitBifurcation, ValidationError
from billiards.orbits import palindromic_orbit
from billiards.rigidity import (
    DeformationFamily,
    DisplacedArc,
    DisplacementSpec,
    cancellation_sums,
    cancellation_sweep,
    channel_sweep,
    channel_transform,
    deformation_G,
    isospectral_derivative_check,
    lagrange_coeffs,
    normal_displacement,
    palindromic_sums,
    quartic_well,
    rectangle_quotient,
    unfolded_period_four,
    unfolded_period_two,
)


def _central(fn, x: float, h: float = 1e-6):
    return (np.asarray(fn(x + h)) - np.asarray(fn(x - h))) / (2 * h)


# Displacements

def test_bump_derivatives_match_finite_differences() -> None:
    spec = DisplacementSpec('bump', amplitude=0.5, center=1.0, width=0.3, power=2)
    for s in (0.6, 1.0, 1.25):
        f, f1, f2 = spec.derivatives(s)
        assert f1 == pytest.approx(float(_central(spec, s)), rel=1e-6, abs=1e-9)
        assert f2 == pytest.approx(float(_central(lambda x: spec.derivatives(x)[1], s)),
                                   rel=1e-6, abs=1e-8)


def test_reversed_displacement() -> None:
    spec = DisplacementSpec('bump', amplitude=0.5, center=1.0, width=0.3, power=1)
    flipped = spec.reversed(3.0)
    f, f1, f2 = spec.derivatives(2.6)
    g, g1, g2 = flipped.derivatives(0.4)
    assert g == pytest.approx(f)
    assert g1 == pytest.approx(-f1)
    assert g2 == pytest.approx(f2)
    assert flipped.reversed(3.0) == spec


def test_displacement_from_dict_is_strict() -> None:
    spec = DisplacementSpec.from_dict({'kind': 'polynomial', 'center': 1.0,
                                       'coefficients': [0.0, 0.0, 2.0]})
    assert spec(3.0) == pytest.approx(8.0)
    with pytest.raises(ValidationError):
        DisplacementSpec.from_dict({'kind': 'bump', 'amp': 1.0})
    with pytest.raises(ValidationError):
        DisplacementSpec.from_dict({'kind': 'wave'})


def test_quartic_well_shape() -> None:
    well = quartic_well(math.pi, 1.0)
    assert well(math.pi / 2) == pytest.approx(1.0)
    flat = quartic_well(math.pi, 1.0, flat_order=2)
    for s in (0.0, math.pi / 2, math.pi):
        f, f1, _ = flat.derivatives(s)
        assert f == pytest.approx(0.0, abs=1e-10)
        assert f1 == pytest.approx(0.0, abs=1e-10)
    assert flat(math.pi / 4) == pytest.approx(9.0 / 64.0)


def test_displaced_arc_derivatives(weak) -> None:
    arc = DisplacedArc(weak.arc1, quartic_well(weak.arc1.length, 0.05), 1.0)
    p, p1, p2 = arc.curve_derivatives(1.0)
    assert np.allclose(p1, _central(lambda u: arc.curve_derivatives(u)[0], 1.0), atol=1e-8)
    assert np.allclose(p2, _central(lambda u: arc.curve_derivatives(u)[1], 1.0), atol=1e-7)
    assert np.allclose(arc.position(0.0), weak.arc1.start_point)
    assert np.allclose(arc.position(arc.length), weak.arc1.end_point)
    assert arc.length > weak.arc1.length


# Deformation families

def test_family_rejects_displacement_breaking_gluing(weak) -> None:
    with pytest.raises(ValidationError):
        DeformationFamily(weak, {1: DisplacementSpec('bump', amplitude=0.1, center=0.0, width=0.3)})


def test_family_tables(weak) -> None:
    family = DeformationFamily(weak, {1: quartic_well(weak.arc1.length, 0.01)})
    assert family.table_at(0.0) is weak
    assert family.table_at(0.5) is family.table_at(0.5)
    with pytest.raises(ValidationError):
        family.table_at(2.0)
    assert family.check(0.5).holds


def test_normal_displacement_at_base(weak) -> None:
    well = quartic_well(weak.arc1.length, 0.01)
    family = DeformationFamily(weak, {1: well})
    assert normal_displacement(family, 0.0, 1.0) == pytest.approx(well(1.0))
    assert normal_displacement(family, 0.0, weak.offsets[2] + 0.5) == 0.0
    assert normal_displacement(family, 0.3, 1.0) == pytest.approx(well(1.0), rel=1e-2)


def test_deformation_G(weak) -> None:
    well = quartic_well(weak.arc1.length, 0.01)
    family = DeformationFamily(weak, {1: well})
    G = deformation_G(family, 0.0, phase_point(weak, 1.0, 0.0))
    assert G == pytest.approx(well(1.0))
    tilted = deformation_G(family, 0.0, phase_point(weak, 1.0, 0.5))
    assert tilted == pytest.approx(well(1.0) * math.cos(0.5))
    on_flat = phase_point(weak, weak.offsets[3] + 0.1, 0.2)
    assert deformation_G(family, 0.0, on_flat) == 0.0
    zero = DeformationFamily(weak, {})
    assert deformation_G(zero, 0.0, phase_point(weak, 1.0, 0.0)) == 0.0


def test_isospectral_derivative_identity(weak) -> None:
    family = DeformationFamily(weak, {1: quartic_well(weak.arc1.length, 0.01)})
    result = isospectral_derivative_check(family, 'gamma_2')
    assert result['code'] == 'gamma_2'
    assert result['rhs'] > 0
    assert result['rel_err'] < 1e-6


@pytest.mark.parametrize('code', ['(12)', '2(12)', '2(12)^2', 'gamma_1', 'gamma_2'])
def test_isospectral_identity_on_code_menu(weak, code: str) -> None:
    family = DeformationFamily(weak, {1: quartic_well(weak.arc1.length, 0.01)})
    result = isospectral_derivative_check(family, code)
    assert result['rhs'] > 0
    assert result['rel_err'] < 1e-4


def test_isospectral_check_flags_symmetric_tie(std) -> None:
    family = DeformationFamily(std, {})
    with pytest.raises(OrbitBifurcation):
        isospectral_derivative_check(family, ['3(12)', '4(12)'])


# Lagrange coefficients

def test_lagrange_coefficients_even_m() -> None:
    coeffs = lagrange_coeffs(2, 3.0)
    assert coeffs.weighted
    assert coeffs.A == pytest.approx([-1.0, 6.9958, -5.518], rel=1e-3)
    assert coeffs.identity_residuals() == pytest.approx([0.0, 0.0], abs=1e-12)


def test_lagrange_coefficients_odd_m() -> None:
    coeffs = lagrange_coeffs(3, 3.0)
    assert not coeffs.weighted
    assert coeffs.identity_residuals() == pytest.approx([0.0, 0.0, 0.0], abs=1e-11)
    assert coeffs.unweighted_sums() == pytest.approx([0.0, 0.0, 0.0], abs=1e-11)


def test_lagrange_coefficients_reject_bad_input() -> None:
    with pytest.raises(ValidationError):
        lagrange_coeffs(1, 3.0)
    with pytest.raises(NearUnitLambda):
        lagrange_coeffs(2, 1.0 + 1e-7)


# Palindromic sums

def test_head_and_complement_differ_by_orbit_sum(weak) -> None:
    displacements = {1: quartic_well(weak.arc1.length, 1.0)}
    orbit = palindromic_orbit(weak, 6)
    sums = palindromic_sums(weak, displacements, orbit, 6, 2)
    assert sums['complement'] - sums['head'] == pytest.approx(sums['orbit_sum'], abs=1e-10)
    with pytest.raises(ValidationError):
        palindromic_sums(weak, displacements, orbit, 6, 4)


def test_cancellation_combination_decays_fast(weak) -> None:
    displacements = {1: quartic_well(weak.arc1.length, 1.0, flat_order=2)}
    sweep = cancellation_sweep(weak, displacements, [2, 3, 4, 5], 3)
    assert sweep['expected_exponent'] == pytest.approx(3 * math.log(sweep['lambda']))
    assert sweep['exponent'] > 0.8 * sweep['expected_exponent']
    assert len(sweep['rows']) == 4


def test_cancellation_sums_single_ell(weak) -> None:
    displacements = {1: quartic_well(weak.arc1.length, 1.0, flat_order=2)}
    sums = cancellation_sums(weak, displacements, 2, 3)
    assert len(sums['S']) == 4
    assert sums['combo'] == pytest.approx(
        sum(a * s for a, s in zip(sums['coefficients'], sums['S'])), abs=1e-12)
    for head, complement, total in zip(sums['S'], sums['S_complement'], sums['orbit_G_sums']):
        assert complement - head == pytest.approx(total, abs=1e-10)


# Unfolded channel

def test_channel_geometry(std) -> None:
    assert rectangle_quotient(std) == pytest.approx(1.0)
    assert np.allclose(channel_transform(std, 1).apply([0.0, 0.0]), [0.0, -2.0])
    assert np.allclose(channel_transform(std, 2).apply([0.0, 0.0]), [0.0, -4.0])
    assert np.allclose(channel_transform(std, 3).apply([1.0, 0.0]), [1.0, -6.0])


@pytest.mark.parametrize('n', [3, 8])
def test_unfolded_period_two_closed_form(std, n: int) -> None:
    orbit = unfolded_period_two(std, n)
    assert orbit.s_bar == pytest.approx(math.atan(1.0 / n), rel=1e-7)
    assert orbit.t_bar == pytest.approx(math.atan(1.0 / n), rel=1e-7)
    assert orbit.length == pytest.approx(2.0 * math.sqrt(1.0 + n * n) + 2.0, rel=1e-12)
    assert orbit.perpendicularity < 1e-7


def test_unfolded_period_four(std) -> None:
    orbit = unfolded_period_four(std, 10, 1.5)
    assert orbit.m == 15
    assert orbit.equal_angle < 1e-7
    assert orbit.perpendicularity < 1e-7
    assert 10 * orbit.s_bar == pytest.approx((1 + 1 / 1.5) / 2, rel=0.05)
    assert 10 * orbit.phi_bar == pytest.approx((1 - 1 / 1.5) / 2, rel=0.15)


def test_unfolded_period_four_rejects_small_ratio(std) -> None:
    with pytest.raises(ValidationError):
        unfolded_period_four(std, 3, 1.0)
    with pytest.raises(ValidationError):
        unfolded_period_four(std, 3, 1.2)


def test_channel_needs_parallel_flats(squash) -> None:
    with pytest.raises(ValidationError):
        unfolded_period_two(squash, 4)


def test_channel_sweep_fits_intercept(std) -> None:
    sweep = channel_sweep(std, [6, 8, 10, 12, 14, 16])
    assert sweep['Q'] == pytest.approx(1.0)
    assert sweep['fits']['s_bar']['expected'] == pytest.approx(1.0)
    assert sweep['fits']['s_bar']['rel_err'] < 1e-2
    assert sweep['fits']['t_bar']['rel_err'] < 1e-2


def test_channel_sweep_period_four_at_ratio_two(std) -> None:
    sweep = channel_sweep(std, list(range(20, 201, 20)), rho=2.0)
    assert sweep['fits']['s_bar']['expected'] == pytest.approx(0.75)
    assert sweep['fits']['phi_bar']['expected'] == pytest.approx(0.25)
    for key in ('s_bar', 't_bar', 't_bar2', 'phi_bar'):
        assert sweep['fits'][key]['rel_err'] < 1e-2
    for orbit in sweep['orbits']:
        assert orbit.m == 2 * orbit.n
