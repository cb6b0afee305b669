from __future__ import annotations

import math

import numpy as np
import pytest

from lib.errors import ConfigurationError, GeometryError
from lib.levelset import (
    SNAP_FACTOR,
    CircleLevelSet,
    LineLevelSet,
    StripLevelSet,
    check_geometry_assumptions,
    closest_point_circle,
    cut_topology,
    interpolate_levelset,
    surface_length,
    watertight_defect,
    write_segments_txt,
)
from lib.mesh import build_level, build_structured_mesh
from lib.studies import BASE_BOX


def test_circle_distance_projection_and_normal() -> None:
    ls = CircleLevelSet((0.5, 0.0), 2.0)
    x = np.array([[0.5, 3.0], [2.5, 0.0], [0.5, -1.0]])
    np.testing.assert_allclose(ls.rho(x), [1.0, 0.0, -1.0])
    np.testing.assert_allclose(ls.closest_point(x), [[0.5, 2.0], [2.5, 0.0], [0.5, -2.0]])
    np.testing.assert_allclose(ls.normal(x), [[0.0, 1.0], [1.0, 0.0], [0.0, -1.0]])


def test_closest_point_undefined_at_center() -> None:
    with pytest.raises(GeometryError):
        closest_point_circle(np.array([[0.0, 0.0]]))


def test_strip_levelset_sides_and_medial_line() -> None:
    ls = StripLevelSet(0.0, 0.6)
    x = np.array([[0.3, 0.2], [0.0, -0.9]])
    np.testing.assert_allclose(ls.rho(x), [-0.4, 0.3])
    np.testing.assert_allclose(ls.closest_point(x), [[0.3, 0.6], [0.0, -0.6]])
    with pytest.raises(GeometryError):
        ls.closest_point(np.array([[0.1, 0.0]]))


def test_vertices_on_the_circle_are_snapped_inside() -> None:
    mesh = build_structured_mesh((-1.0, -1.0, 1.0, 1.0), 2)
    dls = interpolate_levelset(CircleLevelSet(), mesh)
    eps = SNAP_FACTOR * mesh.h
    on_circle = np.isclose(np.linalg.norm(mesh.vertices, axis=1), 1.0)
    assert on_circle.sum() == 4
    np.testing.assert_allclose(dls.values[on_circle], -eps)
    assert not np.any((np.abs(dls.values) < eps))


def test_empty_bulk_is_a_configuration_error() -> None:
    mesh = build_structured_mesh((0.0, 0.0, 1.0, 1.0), 2)
    with pytest.raises(ConfigurationError):
        cut_topology(LineLevelSet((0.0, -5.0), (0.0, 1.0)), mesh)


def test_circle_topology_is_closed_and_counterclockwise() -> None:
    mesh = build_level(BASE_BOX, 8, 1)
    topo = cut_topology(CircleLevelSet(), mesh)
    seg = topo.segments
    assert watertight_defect(topo) == 0
    assert seg.element.size == topo.active_surface.size
    assert topo.surface_edges.point.shape[0] == seg.element.size
    # área encerrada con signo (fórmula del trapecio)
    area = 0.5 * np.sum(seg.p0[:, 0] * seg.p1[:, 1] - seg.p1[:, 0] * seg.p0[:, 1])
    assert area == pytest.approx(math.pi, rel=2e-2)
    mid = 0.5 * (seg.p0 + seg.p1)
    assert np.all(np.einsum("ij,ij->i", seg.normal, mid) > 0.0)
    assert surface_length(topo) == pytest.approx(2.0 * math.pi, rel=2e-2)


def test_conormals_are_tangent_and_opposite_on_straight_lines() -> None:
    mesh = build_level(BASE_BOX, 8, 0)
    topo = cut_topology(LineLevelSet((0.0, 0.3), (0.0, 1.0)), mesh)
    E = topo.surface_edges
    assert E.point.shape[0] > 0
    np.testing.assert_allclose(E.conormal_plus + E.conormal_minus, 0.0, atol=1e-14)
    np.testing.assert_allclose(np.abs(E.conormal_plus[:, 0]), 1.0)
    np.testing.assert_allclose(E.point[:, 1], 0.3)
    # curva abierta: dos extremos en el borde de la caja
    assert topo.boundary_points == 2
    assert watertight_defect(topo) == -2


def test_circle_conormals_point_away_from_their_segment() -> None:
    mesh = build_level(BASE_BOX, 8, 0)
    topo = cut_topology(CircleLevelSet(), mesh)
    seg, E = topo.segments, topo.surface_edges
    mid_plus = 0.5 * (seg.p0[E.seg_plus] + seg.p1[E.seg_plus])
    mid_minus = 0.5 * (seg.p0[E.seg_minus] + seg.p1[E.seg_minus])
    assert np.all(np.einsum("ij,ij->i", E.conormal_plus, E.point - mid_plus) > 0.0)
    assert np.all(np.einsum("ij,ij->i", E.conormal_minus, E.point - mid_minus) > 0.0)


def test_face_sets_are_nested() -> None:
    mesh = build_level(BASE_BOX, 8, 0)
    topo = cut_topology(CircleLevelSet(), mesh)
    assert set(topo.surface_band_faces) <= set(topo.bulk_faces)
    assert set(topo.surface_penalty_faces) <= set(topo.surface_band_faces)
    assert set(topo.active_surface) <= set(topo.active_bulk)


def test_straight_line_geometry_is_exact() -> None:
    ls = LineLevelSet((0.0, 0.3), (0.0, 1.0))
    for level in range(3):
        topo = cut_topology(ls, build_level(BASE_BOX, 8, level))
        chk = check_geometry_assumptions(ls, topo)
        assert chk.sup_dist <= 1e-12
        assert chk.sup_normal_dev <= 1e-12


def test_geometry_sample_outside_validity_radius() -> None:
    mesh = build_level(BASE_BOX, 8, 0)
    topo = cut_topology(CircleLevelSet(), mesh)
    with pytest.raises(GeometryError):
        check_geometry_assumptions(CircleLevelSet((5.0, 5.0), 0.5), topo)


def test_write_segments_txt(tmp_path) -> None:
    topo = cut_topology(CircleLevelSet(), build_level(BASE_BOX, 8, 0))
    path = tmp_path / "segments.txt"
    write_segments_txt(topo, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == topo.segments.element.size
    assert all(line.startswith("s ") for line in lines)
