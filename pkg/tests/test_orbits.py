from __future__ import annotations

import math
from fractions import Fraction

import pytest

from billiards.errors import NonConcave, ValidationError
from billiards.geometry import std_stadium
from billiards.orbits import (
    SymbolicCode,
    family_code,
    marked_length_max,
    marked_length_spectrum,
    multistart,
    orbit_distance,
    orbit_family,
    palindromic_code,
    palindromic_orbit,
    period_two,
    replay_orbit,
    rotation_orbit,
    shadowing_profile,
    solve_code,
    solve_named,
)

WEAK_LOG_LAMBDA = math.log(1.88 + math.sqrt(1.88 ** 2 - 1.0))


def test_parse_power_groups() -> None:
    code = SymbolicCode.parse('2(12)^4')
    assert code.word == (2, 1, 2, 1, 2, 1, 2, 1, 2)
    assert code.period == 9
    assert code.rotation == Fraction(4, 9)


def test_parse_palindromic_shape() -> None:
    code = SymbolicCode.parse('323(12)^2 1')
    assert code.word == (3, 2, 3, 1, 2, 1, 2, 1)


def test_parse_rejects_garbage() -> None:
    with pytest.raises(ValidationError):
        SymbolicCode.parse('2(15)')


@pytest.mark.parametrize('text', ['3312', '3434', '1'])
def test_validate_rejects_bad_codes(text: str) -> None:
    with pytest.raises(ValidationError):
        SymbolicCode.parse(text).validate()


def test_family_code_label_and_rotation() -> None:
    code = family_code(3, 4)
    assert code.word == (4, 1, 2, 1, 2, 1, 2)
    assert code.label == 'gamma_3^(4)'
    assert code.rotation == Fraction(3, 7)


def test_palindromic_code_variants() -> None:
    assert palindromic_code(2).word == (3, 2, 3, 1, 2, 1, 2, 1)
    assert palindromic_code(1, 'gamma_hat').word == (3, 1, 3, 2, 1, 2)
    with pytest.raises(ValidationError):
        palindromic_code(1, 'beta')


def test_period_two_is_the_diameter(std) -> None:
    orbit = period_two(std)
    assert orbit.chord_lengths == pytest.approx([4.0, 4.0])
    assert orbit.total_length == pytest.approx(8.0)
    assert orbit.diagnostics['diameter'] == pytest.approx(4.0)
    assert orbit.hessian_definite
    assert list(orbit.site_parameters) == pytest.approx([math.pi / 2, math.pi / 2])


def test_triangle_orbit_on_std(std) -> None:
    orbit = solve_code(std, '2(12)')
    assert orbit.period == 3
    assert orbit.grad_norm < 1e-10
    assert orbit.hessian_definite
    assert orbit.closure_residual < 1e-8
    assert orbit.total_length == pytest.approx(8.9775, abs=5e-3)
    assert sum(orbit.chord_lengths) == pytest.approx(orbit.total_length, rel=1e-14)
    replay = replay_orbit(std, orbit)
    assert replay['letter_mismatches'] == 0
    assert replay['r'] < 1e-8


def test_orbit_with_flat_bounce(std) -> None:
    orbit = solve_code(std, '3(12)')
    assert orbit.letters == [3, 1, 2]
    assert replay_orbit(std, orbit)['letter_mismatches'] == 0


def test_rotation_orbits(std, weak) -> None:
    asymmetric = rotation_orbit(weak, 1, 2)
    assert asymmetric.period == 3
    assert asymmetric.closure_residual < 1e-8
    assert set(asymmetric.letters) == {1, 2}
    assert asymmetric.letters.count(1) != asymmetric.letters.count(2)
    symmetric = rotation_orbit(std, 2, 3)
    assert symmetric.letters.count(1) == symmetric.letters.count(2) == 2
    assert replay_orbit(std, symmetric)['letter_mismatches'] == 0
    with pytest.raises(ValidationError):
        rotation_orbit(weak, 0, 2)


def test_seed_length_is_checked(std) -> None:
    with pytest.raises(ValidationError):
        solve_code(std, '2(12)', seed=[1.0])


def test_multistart_finds_one_maximum(std) -> None:
    orbits = multistart(std, '2(12)', starts=4, seed=1, workers=2)
    lengths = [orbit.total_length for orbit in orbits]
    assert max(lengths) - min(lengths) < 1e-9
    assert max(orbit_distance(std, orbits[0], orbit) for orbit in orbits) < 1e-8


def test_orbit_family_continuation(weak) -> None:
    family = orbit_family(weak, 2, 5)
    assert sorted(family) == [1, 2, 3, 4, 5]
    for n, orbit in family.items():
        assert orbit.period == 2 * n + 1
        assert orbit.code.label == f'gamma_{n}^(2)'


def test_degenerate_orbit_is_not_concave() -> None:
    disk = std_stadium(1.0, 0.0)
    seed = [math.pi / 2, math.pi / 2]
    orbit = solve_code(disk, '(12)', seed=seed)
    assert not orbit.hessian_definite
    with pytest.raises(NonConcave):
        solve_code(disk, '(12)', seed=seed, require_concave=True)


def test_family_starting_on_arc1_needs_expert(std) -> None:
    with pytest.raises(ValidationError):
        orbit_family(std, 1, 3)


def test_palindromic_orbit_labels_and_symmetry(std) -> None:
    orbit = palindromic_orbit(std, 2)
    assert orbit.period == 8
    assert orbit.labels['y0-'] == 0
    assert orbit.labels['x0'] == 1
    assert orbit.labels['y0'] == 2
    assert orbit.labels['x1'] == 3
    assert orbit.labels['y2'] == 6
    assert orbit.labels['x3'] == 7
    assert 'y3' not in orbit.labels
    assert orbit.diagnostics['symmetry_residual'] < 1e-8
    assert abs(orbit.label_point('x0').phi) < 1e-9


def test_solve_named_routes_palindromic_labels(std) -> None:
    orbit = solve_named(std, 'gamma_2')
    assert orbit.code.label == 'gamma_2'
    assert solve_named(std, '(12)').period == 2


def test_marked_length_candidates(std) -> None:
    entry = marked_length_max(std, 3)
    assert entry.q == 3
    assert entry.rotation == Fraction(1, 3)
    assert entry.candidates_examined == 3
    assert entry.max_length == pytest.approx(max(entry.lengths.values()))
    assert entry.argmax_code.label.startswith('gamma_1^(')


def test_marked_length_rejects_even_q(std) -> None:
    with pytest.raises(ValidationError):
        marked_length_spectrum(std, [3, 4])
    with pytest.raises(ValidationError):
        marked_length_spectrum(std, [1])


def test_marked_lengths_grow_with_q(weak) -> None:
    entries = marked_length_spectrum(weak, [3, 5, 7])
    lengths = [entry.max_length for entry in entries]
    assert lengths == sorted(lengths)
    assert [entry.q for entry in entries] == [3, 5, 7]


def test_shadowing_decays_at_the_period_two_rate(weak) -> None:
    profile = shadowing_profile(weak, [8, 10], m_values=(1,))
    for row in profile:
        assert 0.5 * WEAK_LOG_LAMBDA < row['slope'] < 1.5 * WEAK_LOG_LAMBDA


def test_arc_two_family_beats_flat_family(weak) -> None:
    arc_family = orbit_family(weak, 2, 6)
    flat_family = orbit_family(weak, 3, 6)
    for n in range(1, 7):
        assert arc_family[n].total_length > flat_family[n].total_length
    entries = marked_length_spectrum(weak, [2 * n + 1 for n in range(1, 7)])
    for n, entry in zip(range(1, 7), entries):
        assert entry.argmax_code.label == f'gamma_{n}^(2)'
        assert entry.max_length == pytest.approx(arc_family[n].total_length, rel=1e-12)
