from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp

from lib import forms
from lib.errors import ConfigurationError, GeometryError
from lib.forms import (
    StabilizationParams,
    assemble_bulk_form,
    assemble_coupling_form,
    assemble_ghost_bulk,
    assemble_ghost_surface,
    assemble_matrix,
    assemble_rhs,
    assemble_surface_form,
    energy_gram,
    ghost_weights,
    surface_mean_functional,
    write_coo_txt,
)
from lib.levelset import CircleLevelSet, LineLevelSet, cut_topology, surface_length
from lib.mesh import build_level, build_structured_mesh, mesh_from_arrays
from lib.quadrature import batch_clip_rules, bulk_area
from lib.solver import is_symmetric
from lib.spaces import combined_dof_map, interpolate_pair
from lib.studies import BASE_BOX

PARAMS = StabilizationParams()


def _quad(A, v) -> float:
    return float(v @ (A @ v))


def _broken(mesh, dofmap, f_bulk, g_bulk, f_surf, g_surf) -> np.ndarray:
    """Función rota por elemento: f(vértice) + g(baricentro)."""
    out = np.zeros(dofmap.n)
    for space, f, g in ((dofmap.bulk, f_bulk, g_bulk), (dofmap.surface, f_surf, g_surf)):
        if space.elements.size == 0:
            continue
        X = mesh.vertices[mesh.elements[space.elements]]
        c = X.mean(axis=1)
        vals = f(X.reshape(-1, 2)).reshape(-1, 3) + g(c)[:, None]
        out[space.dofs.ravel()] = vals.ravel()
    return out


# ------------------------------------------------------------------
# Propiedades algebraicas
# ------------------------------------------------------------------
def test_forms_are_symmetric(circle_level0) -> None:
    topo, dofmap = circle_level0
    for assemble in (assemble_bulk_form, assemble_surface_form, assemble_coupling_form,
                     assemble_ghost_bulk, assemble_ghost_surface):
        A = assemble(topo, dofmap, PARAMS)
        assert abs(A - A.T).max() <= 1e-12 * max(1.0, abs(A).max())


def test_bulk_form_on_constants_and_linears(circle_level0) -> None:
    topo, dofmap = circle_level0
    A = assemble_bulk_form(topo, dofmap, PARAMS)
    one = interpolate_pair(topo.mesh, dofmap, lambda x: np.ones(len(x)), None)
    assert _quad(A, one) == pytest.approx(bulk_area(topo), rel=1e-12)

    vx = interpolate_pair(topo.mesh, dofmap, lambda x: x[:, 0], None)
    rules = batch_clip_rules(topo.mesh, topo.active_bulk, topo.levelset, 2)
    expected = np.sum(rules.weights * (1.0 + rules.points[:, 0] ** 2))
    assert _quad(A, vx) == pytest.approx(expected, rel=1e-11)


def test_surface_form_on_constants(circle_level0) -> None:
    topo, dofmap = circle_level0
    A = assemble_surface_form(topo, dofmap, PARAMS)
    one = interpolate_pair(topo.mesh, dofmap, None, lambda x: np.ones(len(x)))
    assert _quad(A, one) == pytest.approx(surface_length(topo), rel=1e-12)


def test_surface_form_on_a_straight_line() -> None:
    mesh = build_structured_mesh((0.0, 0.0, 1.0, 1.0), 4)
    topo = cut_topology(LineLevelSet((0.0, 0.3), (0.0, 1.0)), mesh)
    dofmap = combined_dof_map(topo)
    A = assemble_surface_form(topo, dofmap, PARAMS)
    vx = interpolate_pair(mesh, dofmap, None, lambda x: x[:, 0])
    # ∫_0^1 (1 + x²) dx
    assert _quad(A, vx) == pytest.approx(4.0 / 3.0, rel=1e-12)


def test_coupling_form_values(circle_level0) -> None:
    topo, dofmap = circle_level0
    length = surface_length(topo)
    params = PARAMS._replace(c_bulk=2.0, c_surf=3.0)
    A = assemble_coupling_form(topo, dofmap, params)
    ones = lambda x: np.ones(len(x))  # noqa: E731
    assert _quad(A, interpolate_pair(topo.mesh, dofmap, ones, None)) == pytest.approx(4.0 * length, rel=1e-12)
    assert _quad(A, interpolate_pair(topo.mesh, dofmap, None, ones)) == pytest.approx(9.0 * length, rel=1e-12)
    assert _quad(A, interpolate_pair(topo.mesh, dofmap, ones, ones)) == pytest.approx(length, rel=1e-11)
    B = assemble_coupling_form(topo, dofmap, PARAMS)
    assert _quad(B, interpolate_pair(topo.mesh, dofmap, ones, ones)) == pytest.approx(0.0, abs=1e-12)


def test_ghost_penalties_vanish_on_linear_functions(circle_level0) -> None:
    topo, dofmap = circle_level0
    v = interpolate_pair(topo.mesh, dofmap, lambda x: 1.0 + 2.0 * x[:, 0] - x[:, 1],
                         lambda x: -0.5 + x[:, 1])
    assert abs(_quad(assemble_ghost_bulk(topo, dofmap, PARAMS), v)) <= 1e-9
    assert abs(_quad(assemble_ghost_surface(topo, dofmap, PARAMS), v)) <= 1e-9


def test_ghost_penalty_of_a_single_element_indicator(circle_level0) -> None:
    topo, dofmap = circle_level0
    fs = topo.mesh.faces
    h = topo.mesh.h
    T = int(topo.active_surface[len(topo.active_surface) // 2])

    v = np.zeros(dofmap.n)
    v[dofmap.bulk.dofs[dofmap.bulk.position[T]]] = 1.0
    band = topo.surface_band_faces
    own = band[(fs.plus[band] == T) | (fs.minus[band] == T)]
    expected = PARAMS.mu_bulk / h * fs.length[own].sum()
    assert _quad(assemble_ghost_bulk(topo, dofmap, PARAMS), v) == pytest.approx(expected, rel=1e-12)

    w = np.zeros(dofmap.n)
    w[dofmap.surface.dofs[dofmap.surface.position[T]]] = 1.0
    pen = topo.surface_penalty_faces
    own = pen[(fs.plus[pen] == T) | (fs.minus[pen] == T)]
    expected = PARAMS.mu_surf / h ** 2 * fs.length[own].sum()
    assert _quad(assemble_ghost_surface(topo, dofmap, PARAMS), w) == pytest.approx(expected, rel=1e-12)


def test_ghost_weights_scale_with_h() -> None:
    coarse = ghost_weights(PARAMS, 0.2)
    fine = ghost_weights(PARAMS, 0.1)
    assert fine["bulk_value"] == pytest.approx(2.0 * coarse["bulk_value"])
    assert fine["bulk_gradient"] == pytest.approx(0.5 * coarse["bulk_gradient"])
    assert fine["surf_value"] == pytest.approx(4.0 * coarse["surf_value"])
    assert fine["surf_gradient"] == pytest.approx(coarse["surf_gradient"])


# ------------------------------------------------------------------
# Oráculo a mano: cuadrado unidad con dos triángulos, sin superficie
# ------------------------------------------------------------------
def test_interior_penalty_matrix_by_hand() -> None:
    mesh = build_structured_mesh((0.0, 0.0, 1.0, 1.0), 1)
    topo = cut_topology(LineLevelSet((0.0, 10.0), (0.0, 1.0)), mesh)
    dofmap = combined_dof_map(topo)
    assert dofmap.n == 6 and dofmap.n_surface == 0
    assert mesh.h == pytest.approx(math.sqrt(2.0))

    stiff_lower = 0.5 * np.array([[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    stiff_upper = 0.5 * np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    mass = (np.ones((3, 3)) + np.eye(3)) / 24.0
    expected = np.zeros((6, 6))
    expected[:3, :3] = stiff_lower + mass
    expected[3:, 3:] = stiff_upper + mass

    # en la diagonal x(s) = (1 - s, s): abajo (0, 1-s, s), arriba (1-s, 0, s)
    # ∫ [φ_i][φ_j] ds con |F| = √2 y γ/h = 50/√2
    # [v] = (1-s) e_a + s e_b
    e_a = np.array([0.0, 1.0, 0.0, -1.0, 0.0, 0.0])
    e_b = np.array([0.0, 0.0, 1.0, 0.0, 0.0, -1.0])
    J = (np.outer(e_a, e_a) + np.outer(e_b, e_b)) / 3.0 + (np.outer(e_a, e_b) + np.outer(e_b, e_a)) / 6.0
    expected += 50.0 * J

    # -({n·∇v}, [w]) - ({n·∇w}, [v]) con n = (1,1)/√2
    flux = np.array([-1.0, 0.5, 0.5, -0.5, 1.0, -0.5])
    mean_jump = np.array([0.0, 1.0, 1.0, -1.0, 0.0, -1.0])
    expected -= 0.5 * (np.outer(flux, mean_jump) + np.outer(mean_jump, flux))

    A = assemble_bulk_form(topo, dofmap, PARAMS).toarray()
    np.testing.assert_allclose(A, expected, atol=1e-13)


def test_forms_do_not_depend_on_element_numbering() -> None:
    mesh = build_level(BASE_BOX, 8, 0)
    rng = np.random.default_rng(3)
    perm = rng.permutation(mesh.n_elements)
    shifts = rng.integers(0, 3, size=mesh.n_elements)
    relabeled = np.array([np.roll(row, s) for row, s in zip(mesh.elements[perm], shifts)])
    other = mesh_from_arrays(mesh.vertices, relabeled, box=mesh.box, h=mesh.h, cell=mesh.cell)

    f_b = lambda x: np.sin(x[:, 0]) + x[:, 1] ** 2  # noqa: E731
    g_b = lambda c: np.cos(3.0 * c[:, 0] * c[:, 1])  # noqa: E731
    f_s = lambda x: x[:, 0] * x[:, 1]  # noqa: E731
    g_s = lambda c: c[:, 0] - 2.0 * c[:, 1]  # noqa: E731

    values = []
    for m in (mesh, other):
        topo = cut_topology(CircleLevelSet(), m)
        dofmap = combined_dof_map(topo)
        v = _broken(m, dofmap, f_b, g_b, f_s, g_s)
        values.append(_quad(assemble_matrix(topo, dofmap, PARAMS), v))
    assert values[1] == pytest.approx(values[0], rel=1e-10)


# ------------------------------------------------------------------
# Sistema completo y normas
# ------------------------------------------------------------------
def test_system_matrix_is_positive_definite(circle_level0) -> None:
    topo, dofmap = circle_level0
    A = assemble_matrix(topo, dofmap, PARAMS)
    assert is_symmetric(A)
    assert np.linalg.eigvalsh(A.toarray()).min() > 0.0


def test_system_matrix_is_the_plain_sum_of_the_forms(circle_level0) -> None:
    topo, dofmap = circle_level0
    p = StabilizationParams(c_bulk=2.0, c_surf=0.5)
    expected = (p.c_bulk * (assemble_bulk_form(topo, dofmap, p) + assemble_ghost_bulk(topo, dofmap, p))
                + p.c_surf * (assemble_surface_form(topo, dofmap, p) + assemble_ghost_surface(topo, dofmap, p))
                + assemble_coupling_form(topo, dofmap, p))
    assert abs(assemble_matrix(topo, dofmap, p) - expected).max() == 0.0


def test_asymmetric_contribution_is_not_hidden(circle_level0, monkeypatch) -> None:
    topo, dofmap = circle_level0
    coupling = forms.assemble_coupling_form

    def skewed(*args, **kwargs):
        C = coupling(*args, **kwargs).tolil()
        C[0, dofmap.n - 1] += 1.0
        return C.tocsr()

    monkeypatch.setattr(forms, "assemble_coupling_form", skewed)
    assert not is_symmetric(forms.assemble_matrix(topo, dofmap, PARAMS))


def test_energy_gram(circle_level0) -> None:
    topo, dofmap = circle_level0
    G = energy_gram(topo, dofmap, PARAMS, "total")
    lam = np.linalg.eigvalsh(G.toarray())
    assert lam.min() >= -1e-10 * lam.max()

    ones = lambda x: np.ones(len(x))  # noqa: E731
    one_bulk = interpolate_pair(topo.mesh, dofmap, ones, None)
    assert _quad(energy_gram(topo, dofmap, PARAMS, "bulk"), one_bulk) == pytest.approx(bulk_area(topo), rel=1e-12)
    pair = interpolate_pair(topo.mesh, dofmap, ones, ones)
    assert _quad(G, pair) == pytest.approx(bulk_area(topo) + surface_length(topo), rel=1e-11)
    with pytest.raises(ConfigurationError):
        energy_gram(topo, dofmap, PARAMS, "interface")


def test_rhs_of_unit_data(circle_level0) -> None:
    topo, dofmap = circle_level0
    problem = SimpleNamespace(
        f_bulk=lambda x: np.ones(len(x)),
        f_surf=lambda x: np.ones(len(x)),
        geometry=CircleLevelSet(),
    )
    params = PARAMS._replace(c_bulk=2.0, c_surf=0.5)
    b = assemble_rhs(topo, dofmap, problem, params)
    assert b[:dofmap.n_bulk].sum() == pytest.approx(2.0 * bulk_area(topo), rel=1e-12)
    assert b[dofmap.n_bulk:].sum() == pytest.approx(0.5 * surface_length(topo), rel=1e-12)
    np.testing.assert_allclose(b[dofmap.n_bulk:], 0.5 * surface_mean_functional(topo, dofmap)[dofmap.n_bulk:],
                               rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(assemble_rhs(topo, dofmap, None, params), np.zeros(dofmap.n))


def test_rhs_outside_validity_radius(circle_level0) -> None:
    topo, dofmap = circle_level0
    problem = SimpleNamespace(
        f_bulk=lambda x: np.ones(len(x)),
        f_surf=lambda x: np.ones(len(x)),
        geometry=CircleLevelSet((5.0, 5.0), 0.5),
    )
    with pytest.raises(GeometryError):
        assemble_rhs(topo, dofmap, problem, PARAMS)


def test_ablation_removes_exactly_the_ghost_parts(circle_level0) -> None:
    topo, dofmap = circle_level0
    full = assemble_matrix(topo, dofmap, PARAMS)
    ablated = assemble_matrix(topo, dofmap, PARAMS.ablated())
    removed = (PARAMS.c_bulk * assemble_ghost_bulk(topo, dofmap, PARAMS._replace(mu_bulk=0.0))
               + PARAMS.c_surf * assemble_ghost_surface(topo, dofmap, PARAMS))
    assert abs(full - ablated - removed).max() <= 1e-10 * abs(full).max()

    none = assemble_matrix(topo, dofmap, PARAMS.for_config("none"))
    removed = assemble_ghost_bulk(topo, dofmap, PARAMS) + assemble_ghost_surface(topo, dofmap, PARAMS)
    assert abs(full - none - removed).max() <= 1e-10 * abs(full).max()


def test_stabilization_parameters_are_validated(circle_level0) -> None:
    topo, dofmap = circle_level0
    with pytest.raises(ConfigurationError):
        assemble_matrix(topo, dofmap, PARAMS._replace(c_bulk=0.0))
    with pytest.raises(ConfigurationError):
        assemble_matrix(topo, dofmap, PARAMS._replace(gamma_surf=-1.0))
    with pytest.raises(ConfigurationError):
        PARAMS.for_config("solo-volumen")
    assert PARAMS.for_config("no-bulk").mu_bulk == 0.0
    assert PARAMS.ablated().mu_bulk == PARAMS.mu_bulk


def test_write_coo_txt(circle_level0, tmp_path) -> None:
    topo, dofmap = circle_level0
    A = assemble_coupling_form(topo, dofmap, PARAMS)
    path = tmp_path / "A.txt"
    write_coo_txt(A, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == sp.coo_matrix(A).nnz
    i, j, _ = lines[0].split()
    assert 0 <= int(i) < dofmap.n and 0 <= int(j) < dofmap.n
