from __future__ import annotations

import math

import numpy as np
import pytest

from billiards.dynamics import (
    PhasePoint,
    billiard_map,
    expansion_factor,
    free_path_jet,
    map_differential,
    phase_point,
    reflection_residual,
    trajectory,
)
from billiards.errors import BilliardError, GluingHit, InfeasibleChord, TangentialShot, ValidationError
from billiards.geometry import boundary_at

ARC2_APEX = math.pi + 2.0 + math.pi / 2


def regular_steps(table, count, seed=7):
    """Random collisions away from gluing points and grazing angles."""
    rng = np.random.default_rng(seed)
    steps = []
    while len(steps) < count:
        z = PhasePoint(float(rng.uniform(0.0, table.perimeter)), float(rng.uniform(-1.2, 1.2)))
        try:
            step = billiard_map(table, z)
        except BilliardError:
            continue
        if min(table.gluing_distance(z.r), table.gluing_distance(step.z1.r)) < 1e-3:
            continue
        if step.tau < 0.05 or abs(step.z1.phi) > 1.3:
            continue
        steps.append(step)
    return steps


def test_phase_point_rejects_large_angle() -> None:
    with pytest.raises(ValidationError):
        PhasePoint(0.0, 2.0)


def test_period_two_step(std) -> None:
    step = billiard_map(std, phase_point(std, math.pi / 2, 0.0))
    assert step.tau == pytest.approx(4.0)
    assert step.letter == 2
    assert step.z1.r == pytest.approx(ARC2_APEX)
    assert step.z1.phi == pytest.approx(0.0, abs=1e-14)


def test_map_differential_at_period_two_point(std) -> None:
    jacobian = map_differential(std, phase_point(std, math.pi / 2, 0.0))
    assert np.allclose(jacobian.matrix, [[3.0, -4.0], [-2.0, 3.0]])
    assert jacobian.determinant == pytest.approx(1.0)


def test_map_differential_matches_finite_differences(weak) -> None:
    z = phase_point(weak, 1.2, 0.35)
    jacobian = map_differential(weak, z)
    h = 1e-6
    numeric = np.zeros((2, 2))
    for col, (dr, dphi) in enumerate(((h, 0.0), (0.0, h))):
        plus = billiard_map(weak, PhasePoint(z.r + dr, z.phi + dphi)).z1
        minus = billiard_map(weak, PhasePoint(z.r - dr, z.phi - dphi)).z1
        numeric[:, col] = [(plus.r - minus.r) / (2 * h), (plus.phi - minus.phi) / (2 * h)]
    assert np.allclose(jacobian.matrix, numeric, rtol=1e-5, atol=1e-6)
    assert jacobian.determinant == pytest.approx(jacobian.expected_determinant, rel=1e-10)


def test_map_is_time_reversible(weak) -> None:
    z = phase_point(weak, 0.7, -0.4)
    step = billiard_map(weak, z)
    back = billiard_map(weak, PhasePoint(step.z1.r, -step.z1.phi))
    assert back.z1.r == pytest.approx(z.r, abs=1e-12)
    assert back.z1.phi == pytest.approx(-z.phi, abs=1e-12)
    assert back.tau == pytest.approx(step.tau, rel=1e-14)


def test_trajectory_reflects_exactly(std) -> None:
    path = trajectory(std, phase_point(std, 0.3, 0.2), 40)
    assert len(path) == 40
    assert all(step.tau > 0 for step in path)
    assert max(step.reflection_residual for step in path) < 1e-10


def test_shot_into_gluing_point(std) -> None:
    with pytest.raises(GluingHit):
        billiard_map(std, phase_point(std, math.pi / 2, math.atan(1.0 / 3.0)))


def test_tangential_shot(std) -> None:
    with pytest.raises(TangentialShot):
        billiard_map(std, phase_point(std, 1.0, math.pi / 2))


def test_expansion_factor(std, weak) -> None:
    assert expansion_factor(std, phase_point(std, math.pi / 2, 0.0)) == pytest.approx(7.0)
    assert expansion_factor(weak, phase_point(weak, math.pi / 2, 0.0)) == pytest.approx(3.4)
    with pytest.raises(ValidationError):
        expansion_factor(std, phase_point(std, math.pi + 1.0, 0.0))


def test_free_path_jet_between_apexes(std) -> None:
    jet = free_path_jet(std, math.pi / 2, ARC2_APEX)
    assert jet.tau == pytest.approx(4.0)
    assert jet.d_r == pytest.approx(0.0, abs=1e-14)
    assert jet.d_r1 == pytest.approx(0.0, abs=1e-14)
    assert jet.d_rr == pytest.approx(-0.75)
    assert jet.d_rr1 == pytest.approx(0.25)
    assert jet.d_r1r1 == pytest.approx(-0.75)


def test_free_path_jet_rejects_chord_along_flat(std) -> None:
    with pytest.raises(InfeasibleChord):
        free_path_jet(std, math.pi + 0.5, math.pi + 1.5)


@pytest.mark.parametrize('table_name', ['std', 'weak', 'squash'])
def test_map_differential_at_random_points(table_name, request) -> None:
    table = request.getfixturevalue(table_name)
    h = 1e-6
    for step in regular_steps(table, 6):
        z = step.z
        jacobian = map_differential(table, z)
        numeric = np.zeros((2, 2))
        for col, (dr, dphi) in enumerate(((h, 0.0), (0.0, h))):
            plus = billiard_map(table, PhasePoint(z.r + dr, z.phi + dphi)).z1
            minus = billiard_map(table, PhasePoint(z.r - dr, z.phi - dphi)).z1
            numeric[:, col] = [(plus.r - minus.r) / (2 * h), (plus.phi - minus.phi) / (2 * h)]
        assert np.allclose(jacobian.matrix, numeric, rtol=1e-5, atol=1e-6)
        assert jacobian.determinant == pytest.approx(jacobian.expected_determinant, rel=1e-9)


@pytest.mark.parametrize('table_name', ['std', 'weak', 'squash'])
def test_free_path_jet_at_random_chords(table_name, request) -> None:
    table = request.getfixturevalue(table_name)

    def tau(r, r1):
        return free_path_jet(table, r, r1).tau

    for step in regular_steps(table, 6, seed=11):
        r, r1 = step.z.r, step.z1.r
        jet = free_path_jet(table, r, r1)
        assert jet.tau == pytest.approx(step.tau, rel=1e-12)
        assert jet.phi == pytest.approx(step.z.phi, abs=1e-12)
        assert jet.phi1 == pytest.approx(step.z1.phi, abs=1e-12)
        assert jet.d_r == pytest.approx(-math.sin(step.z.phi), abs=1e-12)
        assert jet.d_r1 == pytest.approx(math.sin(step.z1.phi), abs=1e-12)

        h = 1e-6
        assert jet.d_r == pytest.approx((tau(r + h, r1) - tau(r - h, r1)) / (2 * h), abs=1e-7)
        assert jet.d_r1 == pytest.approx((tau(r, r1 + h) - tau(r, r1 - h)) / (2 * h), abs=1e-7)
        h = 1e-4
        base = tau(r, r1)
        d_rr = (tau(r + h, r1) - 2 * base + tau(r - h, r1)) / h ** 2
        d_r1r1 = (tau(r, r1 + h) - 2 * base + tau(r, r1 - h)) / h ** 2
        d_rr1 = (tau(r + h, r1 + h) - tau(r + h, r1 - h)
                 - tau(r - h, r1 + h) + tau(r - h, r1 - h)) / (4 * h ** 2)
        assert jet.d_rr == pytest.approx(d_rr, rel=1e-4, abs=1e-5)
        assert jet.d_r1r1 == pytest.approx(d_r1r1, rel=1e-4, abs=1e-5)
        assert jet.d_rr1 == pytest.approx(d_rr1, rel=1e-4, abs=1e-5)

        back = free_path_jet(table, r1, r)
        assert back.tau == pytest.approx(jet.tau, rel=1e-14)
        assert back.d_r == pytest.approx(jet.d_r1, abs=1e-12)
        assert back.d_rr == pytest.approx(jet.d_r1r1, rel=1e-10, abs=1e-12)
        assert back.d_rr1 == pytest.approx(jet.d_rr1, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize('table_name', ['std', 'weak', 'squash'])
def test_boundary_coordinate_is_arclength(table_name, request) -> None:
    table = request.getfixturevalue(table_name)
    h = 1e-6
    for letter, piece in table.components:
        for s in np.linspace(0.1, 0.9, 5) * piece.length:
            r = table.coordinate(letter, s)
            point = boundary_at(table, r)
            assert point.letter == letter
            assert point.local_s == pytest.approx(s, abs=1e-12)
            assert np.allclose(point.position, piece.position(s), atol=1e-12)
            speed = (boundary_at(table, r + h).position - boundary_at(table, r - h).position) / (2 * h)
            assert np.allclose(speed, point.tangent, atol=1e-8)


def test_reflection_residual_flags_a_wrong_sign(std) -> None:
    path = trajectory(std, phase_point(std, 0.3, 0.2), 12)
    for step in path:
        assert reflection_residual(std, step.incoming, step.z1) < 1e-10
        if abs(step.z1.phi) > 1e-2:
            flipped = PhasePoint(step.z1.r, -step.z1.phi)
            assert reflection_residual(std, step.incoming, flipped) > 1e-3
