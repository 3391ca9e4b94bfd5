from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from billiards.errors import (
    FitUnstable,
    InsufficientDecayWindow,
    NoRealRoot,
    NotHyperbolic,
    ParityMismatch,
)
from billiards.geometry import squash_from_curvatures, squash_stadium, std_stadium
from billiards.invariants import (
    analyze_period_two,
    extract_spectral_invariants,
    fit_excess_sequence,
    fit_homoclinic_constants,
    length_defect_series,
    match_squash_curvatures,
    parity_class,
    recover_curvatures,
    relation_one,
    symmetric_curvature,
    synthesize_estimates,
)

STD_LAMBDA = 17.0 + 12.0 * math.sqrt(2.0)


def test_period_two_monodromy_std(std) -> None:
    data = analyze_period_two(std)
    assert data.tau_star == pytest.approx(4.0)
    assert data.a_z == pytest.approx(-3.0)
    assert data.a_w == pytest.approx(-3.0)
    assert data.b == pytest.approx(2.0)
    assert data.lam == pytest.approx(STD_LAMBDA, rel=1e-12)
    assert np.allclose(data.analytic_matrix, [[17.0, -24.0], [-12.0, 17.0]])
    assert np.allclose(data.numeric_matrix, data.analytic_matrix, rtol=1e-10)
    assert data.numeric['relative_lambda_error'] < 1e-10
    assert data.lambda_z * data.lambda_w == pytest.approx(data.lam, rel=1e-10)


def test_period_two_monodromy_weak(weak) -> None:
    data = analyze_period_two(weak)
    assert data.tau_star == pytest.approx(2.2)
    assert data.lam == pytest.approx(1.88 + math.sqrt(1.88 ** 2 - 1.0), rel=1e-12)
    assert data.numeric['determinant'] == pytest.approx(1.0, abs=1e-10)


def test_disk_is_not_hyperbolic() -> None:
    with pytest.raises(NotHyperbolic):
        analyze_period_two(std_stadium(1.0, 0.0))


def test_parity_class() -> None:
    assert [parity_class(q) for q in (3, 5, 7, 9, 11)] == [1, 2, 1, 2, 1]


def test_fit_excess_sequence_exact_geometric() -> None:
    qs = [3, 7, 11, 15, 19]
    excess = [-0.5 + 2.0 * 1.5 ** -q for q in qs]
    est = fit_excess_sequence(qs, excess)
    assert est.parity == 1
    assert est.B == pytest.approx(0.5, rel=1e-10)
    assert est.rate == pytest.approx(1.5 ** -4, rel=1e-8)
    assert est.lam_half == pytest.approx(1.5, rel=1e-8)
    assert est.lam == pytest.approx(2.25, rel=1e-8)
    assert est.C == pytest.approx(2.0, rel=1e-6)
    assert est.D == pytest.approx(-4.0 / 3.0, rel=1e-6)
    assert est.L_infinity == pytest.approx(-0.5, rel=1e-10)
    assert est.diagnostics['B_tail_fit'] == pytest.approx(0.5, rel=1e-10)
    assert est.diagnostics['tail_rms'] < 1e-12


def test_fit_excess_sequence_uses_the_whole_tail() -> None:
    qs = [3, 7, 11, 15, 19]
    clean = [-0.5 + 2.0 * 1.5 ** -q for q in qs]
    noisy = list(clean)
    noisy[-4] += 1e-9
    est = fit_excess_sequence(qs, noisy)
    exact = fit_excess_sequence(qs, clean)
    assert est.diagnostics['tail_window'] == [7, 11, 15, 19]
    assert est.C != exact.C
    assert est.C == pytest.approx(exact.C, rel=1e-3)
    assert est.L_infinity == pytest.approx(exact.L_infinity, abs=1e-12)


def test_fit_excess_sequence_needs_three_spaced_values() -> None:
    with pytest.raises(ParityMismatch):
        fit_excess_sequence([3, 7], [0.1, 0.2])
    with pytest.raises(FitUnstable):
        fit_excess_sequence([3, 7, 13], [-0.4, -0.45, -0.47])


def test_symmetric_curvature_of_std() -> None:
    assert symmetric_curvature(STD_LAMBDA, 4.0) == pytest.approx(1.0, rel=1e-12)


def test_recover_curvatures_round_trip() -> None:
    estimates = synthesize_estimates(3.0, 1.0, 0.8)
    result = recover_curvatures(estimates, 3.0)
    assert any(abs(k1 - 1.0) < 1e-8 and abs(k2 - 0.8) < 1e-8 for k1, k2 in result.roots)
    assert abs(result.residuals[0]) < 1e-10
    assert abs(result.residuals[1]) < 1e-10
    lam = estimates[1].lam
    for k1, k2 in result.roots:
        assert relation_one(lam, 3.0, k1, k2) == pytest.approx(0.0, abs=1e-9)


def test_recover_curvatures_without_real_root() -> None:
    estimates = synthesize_estimates(3.0, 1.0, 0.8)
    estimates = {1: dataclasses.replace(estimates[1], C=1.0),
                 2: dataclasses.replace(estimates[2], C=0.0)}
    with pytest.raises(NoRealRoot):
        recover_curvatures(estimates, 3.0)


def test_recover_curvatures_needs_both_classes() -> None:
    estimates = synthesize_estimates(3.0, 1.0, 0.8)
    with pytest.raises(ParityMismatch):
        recover_curvatures({1: estimates[1]}, 3.0)


def test_synthesize_rejects_elliptic_period_two() -> None:
    with pytest.raises(NotHyperbolic):
        synthesize_estimates(1.5, 1.0, 1.0)


def test_homoclinic_window_too_short(std) -> None:
    with pytest.raises(InsufficientDecayWindow):
        fit_homoclinic_constants(std, 2, range(1, 6))


def test_homoclinic_constants_std(std) -> None:
    fit = fit_homoclinic_constants(std, 2, range(1, 14))
    assert fit.n == 13
    assert fit.window == [2, 3, 4, 5]
    assert fit.exponent == pytest.approx(math.log(STD_LAMBDA), rel=0.03)
    # the middle collision of a symmetric orbit sits on the axis
    assert fit.Theta_z == pytest.approx(-1.0, abs=0.05)


def test_homoclinic_constants_weak(weak) -> None:
    data = analyze_period_two(weak)
    fit = fit_homoclinic_constants(weak, 2, range(1, 22))
    assert fit.n == 21
    assert fit.exponent == pytest.approx(math.log(data.lam), rel=0.03)
    assert fit.C_phi / fit.C_s == pytest.approx(math.tan(data.theta_z), rel=0.02)
    assert fit.C_t / fit.C_s == pytest.approx(-(1.0 + 1.0 / data.lam) / (2.0 * data.a_w), rel=0.02)
    assert fit.Theta_z == pytest.approx(-1.0, abs=0.05)
    assert fit.Theta_z * fit.Theta_w == pytest.approx(1.0 / data.lam, rel=0.05)


def test_length_defects_decay_at_twice_the_rate(weak) -> None:
    lam = analyze_period_two(weak).lam
    series = length_defect_series(weak, 21)
    assert series.window == [3, 4, 5, 6, 7, 8]
    assert all(d > 0 for d in series.defects[:8])
    assert series.ratio * lam ** 2 == pytest.approx(1.0, rel=0.02)
    assert 0.0 < series.tail < series.defects[series.window[-1] - 1]


def test_spectral_invariants_weak(weak) -> None:
    report = extract_spectral_invariants(weak, [3, 7, 11, 15, 19, 23])
    assert report.tau_star == pytest.approx(2.2)
    assert set(report.estimates) == {1}
    assert any('Parity class 2' in w for w in report.warnings)
    assert report.estimates[1].B > 0
    assert report.lam_measured == pytest.approx(report.lam, rel=0.1)
    assert report.tau_star_measured == pytest.approx(2.2, rel=1e-3)
    assert [row['q'] for row in report.rows] == [3, 7, 11, 15, 19, 23]


def test_spectral_invariants_need_a_full_parity_class(weak) -> None:
    with pytest.raises(ParityMismatch):
        extract_spectral_invariants(weak, [3, 5, 7, 9])


def test_squash_from_curvatures_has_the_period_two_of_its_inputs() -> None:
    data = analyze_period_two(squash_from_curvatures(3.0, 1.0, 0.8))
    assert data.tau_star == pytest.approx(3.0)
    assert relation_one(data.lam, 3.0, 1.0, 0.8) == pytest.approx(0.0, abs=1e-9)


def test_match_squash_curvatures_from_computed_spectrum() -> None:
    table = squash_stadium(1.0, 1.25, 0.75)
    q_list = list(range(3, 18, 2))
    report = extract_spectral_invariants(table, q_list)
    assert set(report.estimates) == {1, 2}
    result = match_squash_curvatures(report, q_list)
    assert sorted((result.K1, result.K2)) == pytest.approx([0.8, 1.0], abs=1e-3)
    assert any(abs(k1 - 1.0) < 1e-3 and abs(k2 - 0.8) < 1e-3 for k1, k2 in result.roots)
    if not result.branch_ambiguous:
        assert result.K1 == pytest.approx(1.0, abs=1e-3)
        assert result.K2 == pytest.approx(0.8, abs=1e-3)
    assert abs(result.residuals[0]) < 1e-8
    assert abs(result.residuals[1]) < 1e-8
