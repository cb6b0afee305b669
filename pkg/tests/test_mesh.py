from __future__ import annotations

import math

import numpy as np
import pytest

from lib.errors import MeshError
from lib.mesh import (
    build_structured_mesh,
    element_areas,
    mesh_from_arrays,
    quality_ratio,
    refine_uniform,
    write_mesh_txt,
)


def _centroids(mesh):
    return mesh.vertices[mesh.elements].mean(axis=1)


def test_structured_mesh_counts_and_size() -> None:
    mesh = build_structured_mesh((0.0, 0.0, 1.0, 1.0), 2)
    assert mesh.n_vertices == 9
    assert mesh.n_elements == 8
    assert mesh.faces.interior.size == 8
    assert mesh.h == pytest.approx(math.hypot(0.5, 0.5))
    assert mesh.cell == pytest.approx((0.5, 0.5))


def test_interior_face_count_formula() -> None:
    for n in (1, 3, 5):
        mesh = build_structured_mesh((-1.0, -1.0, 1.0, 1.0), n)
        assert mesh.faces.interior.size == 2 * n * (n + 1) + n * n - 4 * n


def test_elements_are_counterclockwise_and_tile_the_box() -> None:
    mesh = build_structured_mesh((-1.1, -1.1, 1.1, 1.1), 6)
    areas = element_areas(mesh)
    assert np.all(areas > 0.0)
    assert areas.sum() == pytest.approx(2.2 * 2.2)


def test_face_normals_point_from_plus_to_minus() -> None:
    mesh = build_structured_mesh((0.0, 0.0, 2.0, 1.0), 4)
    fs = mesh.faces
    c = _centroids(mesh)
    assert np.all(fs.plus < fs.minus)
    np.testing.assert_allclose(np.linalg.norm(fs.normal, axis=1), 1.0)
    t = mesh.vertices[fs.vertices[:, 1]] - mesh.vertices[fs.vertices[:, 0]]
    np.testing.assert_allclose(np.einsum("ij,ij->i", fs.normal, t), 0.0, atol=1e-14)
    assert np.all(np.einsum("ij,ij->i", fs.normal, c[fs.minus] - c[fs.plus]) > 0.0)


def test_unit_square_diagonal_normal() -> None:
    mesh = build_structured_mesh((0.0, 0.0, 1.0, 1.0), 1)
    np.testing.assert_allclose(mesh.faces.normal[0], np.array([1.0, 1.0]) / math.sqrt(2.0))


def test_refine_uniform_halves_h_and_keeps_parent_vertices() -> None:
    coarse = build_structured_mesh((-1.0, -1.0, 1.0, 1.0), 3)
    fine = refine_uniform(coarse)
    assert fine.n_elements == 4 * coarse.n_elements
    assert fine.h == pytest.approx(0.5 * coarse.h)
    np.testing.assert_array_equal(fine.vertices[:coarse.n_vertices], coarse.vertices)
    assert element_areas(fine).sum() == pytest.approx(4.0)
    assert np.all(element_areas(fine) > 0.0)
    assert quality_ratio(fine) == pytest.approx(quality_ratio(coarse))


def test_refined_mesh_has_same_faces_as_structured_one() -> None:
    fine = refine_uniform(build_structured_mesh((0.0, 0.0, 1.0, 1.0), 2))
    direct = build_structured_mesh((0.0, 0.0, 1.0, 1.0), 4)
    assert fine.faces.interior.size == direct.faces.interior.size
    assert fine.h == pytest.approx(direct.h)


@pytest.mark.parametrize("n", [0, -2, 1.5])
def test_invalid_resolution_is_rejected(n) -> None:
    with pytest.raises(MeshError):
        build_structured_mesh((0.0, 0.0, 1.0, 1.0), n)


def test_inverted_box_is_rejected() -> None:
    with pytest.raises(MeshError):
        build_structured_mesh((1.0, 0.0, 0.0, 1.0), 2)


def test_mesh_from_arrays_rejects_clockwise_element() -> None:
    V = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    with pytest.raises(MeshError):
        mesh_from_arrays(V, [[0, 2, 1]])


def test_mesh_from_arrays_rejects_non_manifold_edge() -> None:
    V = [[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 2.0]]
    with pytest.raises(MeshError):
        mesh_from_arrays(V, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])


def test_mesh_from_arrays_defaults_h_to_longest_edge() -> None:
    mesh = mesh_from_arrays([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])
    assert mesh.h == pytest.approx(math.sqrt(5.0))
    assert mesh.faces.interior.size == 0


def test_write_mesh_txt(tmp_path) -> None:
    mesh = build_structured_mesh((0.0, 0.0, 1.0, 1.0), 1)
    path = tmp_path / "mesh.txt"
    write_mesh_txt(mesh, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert sum(1 for line in lines if line.startswith("v ")) == 4
    assert sum(1 for line in lines if line.startswith("e ")) == 2
