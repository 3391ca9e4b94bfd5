from __future__ import annotations

import math

import numpy as np
import pytest

from billiards.errors import ConfigError, ValidationError
from billiards.geometry import (
    CircularArc,
    Isometry,
    PolynomialGraphArc,
    boundary_at,
    check_defocusing,
    double_cover,
    load_table,
    squash_from_curvatures,
    squash_stadium,
    squash_with_flat_angle,
    std_stadium,
    table_diameter,
    table_from_name,
)


def test_std_stadium_gluing_points_and_perimeter(std) -> None:
    points = std.gluing_points
    assert np.allclose(points['P14'], [-1.0, 1.0])
    assert np.allclose(points['P13'], [-1.0, -1.0])
    assert np.allclose(points['P23'], [1.0, -1.0])
    assert np.allclose(points['P24'], [1.0, 1.0])
    assert std.perimeter == pytest.approx(2 * math.pi + 4.0)
    assert std.gluing_offsets == pytest.approx([0.0, math.pi, math.pi + 2.0, 2 * math.pi + 2.0])


def test_boundary_at_arc1_apex(std) -> None:
    point = boundary_at(std, math.pi / 2)
    assert point.letter == 1
    assert np.allclose(point.position, [-2.0, 0.0])
    assert np.allclose(point.inward_normal, [1.0, 0.0])
    assert point.curvature == pytest.approx(-1.0)


def test_boundary_at_flat_has_zero_curvature(std) -> None:
    point = boundary_at(std, math.pi + 1.0)
    assert point.letter == 3
    assert np.allclose(point.position, [0.0, -1.0])
    assert np.allclose(point.inward_normal, [0.0, 1.0])
    assert point.curvature == 0.0


def test_boundary_coordinate_wraps(std) -> None:
    a = boundary_at(std, 0.25)
    b = boundary_at(std, 0.25 + std.perimeter)
    assert np.allclose(a.position, b.position)


def test_reflection_isometry() -> None:
    mirror = Isometry.reflection(np.array([0.0, -1.0]), np.array([1.0, 0.0]))
    assert mirror.is_reflection
    assert np.allclose(mirror.apply(np.array([0.5, 0.0])), [0.5, -2.0])
    assert np.allclose(mirror.compose(mirror).apply(np.array([0.3, 0.7])), [0.3, 0.7])


def test_circular_arc_intersection() -> None:
    arc = CircularArc((0.0, 0.0), 1.0, -math.pi / 2, math.pi / 2)
    hits = arc.intersect(np.array([-0.5, 0.0]), np.array([1.0, 0.0]))
    assert len(hits) == 1
    t, s = hits[0]
    assert t == pytest.approx(1.5)
    assert s == pytest.approx(math.pi / 2)


def test_polynomial_graph_arc_matches_parabola() -> None:
    arc = PolynomialGraphArc((0.0, 0.0, 0.5), -1.0, 1.0)
    expected = math.sqrt(2.0) + math.asinh(1.0)
    assert arc.length == pytest.approx(expected, rel=1e-10)
    middle = arc.parameter(arc.length / 2)
    assert middle == pytest.approx(0.0, abs=1e-10)
    assert arc.curvature(arc.length / 2) == pytest.approx(1.0, rel=1e-8)


def test_table_diameter(std, squash) -> None:
    diameter, info = table_diameter(std)
    assert diameter == pytest.approx(4.0, abs=1e-10)
    assert set(info['letters']) == {1, 2}
    wide, _ = table_diameter(squash_stadium(1.0, 0.5, 2.0))
    assert wide == pytest.approx(3.5, abs=1e-10)


def test_defocusing_holds_for_stadiums(std, weak) -> None:
    assert check_defocusing(std).holds
    assert check_defocusing(weak, grid=64).holds


def test_squash_defaults_to_doubly_defocusing(squash) -> None:
    report = check_defocusing(squash, grid=32)
    assert report.doubly
    assert report.grid == 32


def test_double_cover_reflects_across_flat(std) -> None:
    cover = double_cover(std, 3)
    assert np.allclose(cover.reflected_arc2.position(0.0), [1.0, -3.0])
    assert cover.reflected_arc2.length == pytest.approx(std.arc2.length)
    with pytest.raises(ValidationError):
        double_cover(std, 1)


def test_double_cover_is_an_involution(std, squash) -> None:
    for table in (std, squash):
        for across in (3, 4):
            cover = double_cover(table, across)
            assert np.allclose(cover.reflection.compose(cover.reflection).matrix(), np.eye(3), atol=1e-12)
            back = double_cover(cover.mirror, across).mirror
            for original, image in ((table.arc1, back.arc1), (table.arc2, back.arc2)):
                assert image.length == pytest.approx(original.length)
                for s in np.linspace(0.0, original.length, 7):
                    assert np.allclose(image.position(s), original.position(s), atol=1e-12)
            assert np.allclose(back.flat3.start_point, table.flat3.start_point, atol=1e-12)


def test_squash_with_five_degree_flats_is_doubly_defocusing() -> None:
    table = squash_with_flat_angle(5.0)
    turn = math.acos(float(np.dot(table.flat3.direction, -table.flat4.direction)))
    assert turn == pytest.approx(math.radians(5.0), abs=1e-9)
    report = check_defocusing(table, grid=48)
    assert report.doubly
    assert report.holds
    assert report.worst_margin > 0


def test_squash_from_curvatures_keeps_axis_chord() -> None:
    table = squash_from_curvatures(3.0, 1.0, 0.8)
    assert table.arc1.radius == pytest.approx(1.0)
    assert table.arc2.radius == pytest.approx(1.25)
    assert table_diameter(table)[0] == pytest.approx(3.0, abs=1e-9)
    with pytest.raises(ValidationError):
        squash_from_curvatures(3.0, 0.0, 1.0)


def test_table_from_name() -> None:
    table = table_from_name('std-stadium(R=2,L=1)')
    assert table.arc1.radius == 2.0
    assert table.flat3.length == pytest.approx(1.0)
    assert table_from_name('weak-stadium').flat3.length == pytest.approx(0.2)
    with pytest.raises(ConfigError):
        table_from_name('oval(1)')
    with pytest.raises(ConfigError):
        table_from_name('std-stadium(R=1,X=2)')


def test_load_table_from_dict_round_trip(std) -> None:
    table = load_table(std.to_dict())
    assert table.perimeter == pytest.approx(std.perimeter)


def test_load_table_rejects_open_boundary(std) -> None:
    data = std.to_dict()
    data['flat3']['end'] = [0.5, -1.0]
    with pytest.raises(ValidationError):
        load_table(data)


def test_load_table_rejects_unknown_keys(std) -> None:
    data = std.to_dict()
    data['colour'] = 'blue'
    with pytest.raises(ConfigError):
        load_table(data)


def test_builders_reject_bad_parameters() -> None:
    with pytest.raises(ValidationError):
        std_stadium(-1.0, 2.0)
    with pytest.raises(ValidationError):
        squash_stadium(1.0, 0.2, 0.5)


def test_disk_is_a_degenerate_stadium() -> None:
    disk = std_stadium(1.0, 0.0)
    assert disk.perimeter == pytest.approx(2 * math.pi)
    assert disk.flat3.length == 0.0
    assert disk.warnings == []
    report = check_defocusing(disk, grid=32)
    assert not report.holds
    assert report.worst_margin == pytest.approx(0.0, abs=1e-9)
