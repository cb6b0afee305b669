# lib/forms.py
# -*- coding: utf-8 -*-
"""
Formas discretas del método cutDG estabilizado para el problema acoplado volumen-superficie.

    A^h = c_Ω (a_Ω + j_Ω) + c_Γ (a_Γ + j_Γ) + a_ΩΓ

Todas las contribuciones se escriben como Σ_q w_q L_q(v) M_q(w), con L_q, M_q funcionales
lineales locales (valores o gradientes de la base en el punto q), y se acumulan en COO.
Convenios: [v] = v+ - v-, {σ} = (σ+ + σ-)/2, n_F de '+' a '-'.
"""
from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from lib.errors import AssemblyError, ConfigurationError, GeometryError
from lib.levelset import CutTopology
from lib.mesh import element_gradients
from lib.quadrature import (
    QuadratureBatch,
    batch_clip_rules,
    batch_face_rules,
    batch_full_element_rules,
    batch_segment_rules,
)
from lib.spaces import BrokenSpace, CombinedDofMap, basis_values

GHOST_CONFIGS = ("full", "no-surface", "no-bulk", "none")


# ============================================================
# Parámetros de estabilización
# ============================================================
class StabilizationParams(NamedTuple):
    c_bulk: float = 1.0
    c_surf: float = 1.0
    gamma_bulk: float = 50.0
    gamma_surf: float = 50.0
    mu_bulk: float = 50.0
    mu_surf: float = 50.0
    tau_bulk: float = 0.01
    tau_surf: float = 0.01

    def validated(self) -> "StabilizationParams":
        if not (self.c_bulk > 0.0 and self.c_surf > 0.0):
            raise ConfigurationError(f"c_bulk y c_surf deben ser > 0 (c_bulk={self.c_bulk}, c_surf={self.c_surf})")
        for name in ("gamma_bulk", "gamma_surf", "mu_bulk", "mu_surf", "tau_bulk", "tau_surf"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ConfigurationError(f"{name} debe ser >= 0 (recibido {v})")
        return self

    def ablated(self) -> "StabilizationParams":
        """Variante sin estabilizar de la tabla de convergencia: μ_Γ = τ_Ω = τ_Γ = 0."""
        return self._replace(mu_surf=0.0, tau_bulk=0.0, tau_surf=0.0)

    def for_config(self, name: str) -> "StabilizationParams":
        """full | no-surface | no-bulk | none (penalizaciones fantasma activas)."""
        if name == "full":
            return self
        if name == "no-surface":
            return self._replace(mu_surf=0.0, tau_surf=0.0)
        if name == "no-bulk":
            return self._replace(mu_bulk=0.0, tau_bulk=0.0)
        if name == "none":
            return self._replace(mu_bulk=0.0, tau_bulk=0.0, mu_surf=0.0, tau_surf=0.0)
        raise ConfigurationError(f"Configuración de estabilización desconocida: {name!r}")


class AssembledSystem(NamedTuple):
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: CombinedDofMap
    params: StabilizationParams
    h: float
    topo: Optional[CutTopology] = None


# ============================================================
# Utilidades de ensamblado
# ============================================================
class _Ctx(NamedTuple):
    topo: CutTopology
    dofmap: CombinedDofMap
    grads: np.ndarray
    n: int


def _context(topo: CutTopology, dofmap: CombinedDofMap) -> _Ctx:
    return _Ctx(topo, dofmap, element_gradients(topo.mesh), dofmap.n)


def _outer(n: int, rows, rvals, cols, cvals, weights) -> sp.csr_matrix:
    """Σ_q w_q rvals[q,i] cvals[q,j] en (rows[q,i], cols[q,j])."""
    data = weights[:, None, None] * rvals[:, :, None] * cvals[:, None, :]
    I = np.broadcast_to(rows[:, :, None], data.shape)
    J = np.broadcast_to(cols[:, None, :], data.shape)
    return sp.coo_matrix((data.ravel(), (I.ravel(), J.ravel())), shape=(n, n)).tocsr()


def _sym_outer(n: int, rows, a, b, weights) -> sp.csr_matrix:
    return _outer(n, rows, a, rows, b, weights) + _outer(n, rows, b, rows, a, weights)


def _zero(n: int) -> sp.csr_matrix:
    return sp.csr_matrix((n, n))


def _positions(space: BrokenSpace, elements) -> np.ndarray:
    pos = space.position[elements]
    if np.any(pos < 0):
        raise AssemblyError("Entidad activa sin elemento en el espacio")
    return pos


def _volume_terms(ctx: _Ctx, space: BrokenSpace, rules: QuadratureBatch,
                  mass: bool = True, stiffness: bool = True) -> sp.csr_matrix:
    elems = space.elements[rules.owner]
    rows = space.dofs[rules.owner]
    A = _zero(ctx.n)
    if mass:
        lam = basis_values(ctx.topo.mesh, elems, rules.points, ctx.grads)
        A = A + _outer(ctx.n, rows, lam, rows, lam, rules.weights)
    if stiffness:
        G = ctx.grads[elems]
        for d in range(2):
            A = A + _outer(ctx.n, rows, G[:, :, d], rows, G[:, :, d], rules.weights)
    return A


def _face_functionals(ctx: _Ctx, space: BrokenSpace, faces: np.ndarray, rules: QuadratureBatch):
    """Filas (M,6) y valores de [v], {n_F·∇v} y n_F·[∇v] en cada punto de cara."""
    fs = ctx.topo.mesh.faces
    f = faces[rules.owner]
    plus, minus = fs.plus[f], fs.minus[f]
    rows = np.hstack([space.dofs[_positions(space, plus)], space.dofs[_positions(space, minus)]])
    lp = basis_values(ctx.topo.mesh, plus, rules.points, ctx.grads)
    lm = basis_values(ctx.topo.mesh, minus, rules.points, ctx.grads)
    nrm = fs.normal[f]
    gp = np.einsum("mid,md->mi", ctx.grads[plus], nrm)
    gm = np.einsum("mid,md->mi", ctx.grads[minus], nrm)
    jump = np.hstack([lp, -lm])
    flux = 0.5 * np.hstack([gp, gm])
    grad_jump = np.hstack([gp, -gm])
    return rows, jump, flux, grad_jump


def _edge_functionals(ctx: _Ctx):
    """Filas (k,6) y valores de [v] y {n_E·∇v} en los puntos-arista E de Γ^h."""
    topo = ctx.topo
    seg, E = topo.segments, topo.surface_edges
    space = ctx.dofmap.surface
    ep, em = seg.element[E.seg_plus], seg.element[E.seg_minus]
    rows = np.hstack([space.dofs[_positions(space, ep)], space.dofs[_positions(space, em)]])
    lp = basis_values(topo.mesh, ep, E.point, ctx.grads)
    lm = basis_values(topo.mesh, em, E.point, ctx.grads)
    fp = np.einsum("mid,md->mi", ctx.grads[ep], E.conormal_plus)
    fm = np.einsum("mid,md->mi", ctx.grads[em], E.conormal_minus)
    jump = np.hstack([lp, -lm])
    flux = 0.5 * np.hstack([fp, -fm])
    return rows, jump, flux, np.ones(E.point.shape[0])


# ============================================================
# Bloques de volumen, superficie y acoplamiento
# ============================================================
def _bulk_volume(ctx: _Ctx, degree: int, region: str = "cut",
                 mass: bool = True, stiffness: bool = True) -> sp.csr_matrix:
    space = ctx.dofmap.bulk
    if region == "cut":
        rules = batch_clip_rules(ctx.topo.mesh, space.elements, ctx.topo.levelset, degree)
    else:
        rules = batch_full_element_rules(ctx.topo.mesh, space.elements, degree)
    return _volume_terms(ctx, space, rules, mass, stiffness)


def _bulk_face_jumps(ctx: _Ctx, degree: int) -> sp.csr_matrix:
    faces = ctx.topo.bulk_faces
    rules = batch_face_rules(ctx.topo.mesh, faces, None, degree)
    rows, jump, _, _ = _face_functionals(ctx, ctx.dofmap.bulk, faces, rules)
    return _outer(ctx.n, rows, jump, rows, jump, rules.weights)


def _bulk_consistency(ctx: _Ctx, degree: int) -> sp.csr_matrix:
    faces = ctx.topo.bulk_faces
    rules = batch_face_rules(ctx.topo.mesh, faces, ctx.topo.levelset, degree)
    rows, jump, flux, _ = _face_functionals(ctx, ctx.dofmap.bulk, faces, rules)
    return -_sym_outer(ctx.n, rows, flux, jump, rules.weights)


def _surface_volume(ctx: _Ctx, degree: int, mass: bool = True, stiffness: bool = True) -> sp.csr_matrix:
    topo, space = ctx.topo, ctx.dofmap.surface
    seg = topo.segments
    rules = batch_segment_rules(topo, degree)
    elems = seg.element[rules.owner]
    rows = space.dofs[_positions(space, elems)]
    A = _zero(ctx.n)
    if mass:
        lam = basis_values(topo.mesh, elems, rules.points, ctx.grads)
        A = A + _outer(ctx.n, rows, lam, rows, lam, rules.weights)
    if stiffness:
        # en 2D, (P^h∇v)·(P^h∇w) = (t·∇v)(t·∇w)
        tg = np.einsum("mid,md->mi", ctx.grads[elems], seg.tangent[rules.owner])
        A = A + _outer(ctx.n, rows, tg, rows, tg, rules.weights)
    return A


def _ghost(ctx: _Ctx, space: BrokenSpace, faces: np.ndarray, value_weight: float,
           grad_weight: float, degree: int) -> sp.csr_matrix:
    A = _zero(ctx.n)
    if faces.size == 0 or (value_weight == 0.0 and grad_weight == 0.0):
        return A
    rules = batch_face_rules(ctx.topo.mesh, faces, None, degree)
    rows, jump, _, grad_jump = _face_functionals(ctx, space, faces, rules)
    if value_weight:
        A = A + value_weight * _outer(ctx.n, rows, jump, rows, jump, rules.weights)
    if grad_weight:
        A = A + grad_weight * _outer(ctx.n, rows, grad_jump, rows, grad_jump, rules.weights)
    return A


def assemble_bulk_form(topo: CutTopology, dofmap: CombinedDofMap, params: StabilizationParams,
                       degree: int = 2) -> sp.csr_matrix:
    """a_Ω^h: (∇v,∇w)+(v,w) en T∩Ω^h, γ_Ω h⁻¹([v],[w]) en caras completas, términos de consistencia en F∩Ω^h."""
    ctx = _context(topo, dofmap)
    A = _bulk_volume(ctx, degree) + _bulk_consistency(ctx, degree)
    if params.gamma_bulk:
        A = A + (params.gamma_bulk / topo.mesh.h) * _bulk_face_jumps(ctx, degree)
    return A


def assemble_surface_form(topo: CutTopology, dofmap: CombinedDofMap, params: StabilizationParams,
                          degree: int = 2) -> sp.csr_matrix:
    """a_Γ^h: gradiente tangencial y masa sobre Γ^h, penalización y co-normales en los puntos E."""
    ctx = _context(topo, dofmap)
    A = _surface_volume(ctx, degree)
    if topo.surface_edges.point.shape[0]:
        rows, jump, flux, w = _edge_functionals(ctx)
        A = A - _sym_outer(ctx.n, rows, flux, jump, w)
        if params.gamma_surf:
            A = A + (params.gamma_surf / topo.mesh.h) * _outer(ctx.n, rows, jump, rows, jump, w)
    return A


def assemble_coupling_form(topo: CutTopology, dofmap: CombinedDofMap, params: StabilizationParams,
                           degree: int = 2) -> sp.csr_matrix:
    """a_ΩΓ^h = (c_Ω v_Ω - c_Γ v_Γ, c_Ω w_Ω - c_Γ w_Γ) sobre Γ^h."""
    ctx = _context(topo, dofmap)
    seg = topo.segments
    rules = batch_segment_rules(topo, degree)
    elems = seg.element[rules.owner]
    bulk, surf = dofmap.bulk, dofmap.surface
    rows = np.hstack([bulk.dofs[_positions(bulk, elems)], surf.dofs[_positions(surf, elems)]])
    lam = basis_values(topo.mesh, elems, rules.points, ctx.grads)
    vals = np.hstack([params.c_bulk * lam, -params.c_surf * lam])
    return _outer(ctx.n, rows, vals, rows, vals, rules.weights)


def assemble_ghost_bulk(topo: CutTopology, dofmap: CombinedDofMap, params: StabilizationParams,
                        degree: int = 2) -> sp.csr_matrix:
    """j_Ω^h: μ_Ω h⁻¹([v],[w]) + τ_Ω h (n_F·[∇v], n_F·[∇w]) sobre F_Ω^g (caras completas)."""
    ctx = _context(topo, dofmap)
    h = topo.mesh.h
    return _ghost(ctx, dofmap.bulk, topo.surface_band_faces, params.mu_bulk / h, params.tau_bulk * h, degree)


def assemble_ghost_surface(topo: CutTopology, dofmap: CombinedDofMap, params: StabilizationParams,
                           degree: int = 2) -> sp.csr_matrix:
    """j_Γ^h: μ_Γ h⁻²([v],[w]) + τ_Γ (n_F·[∇v], n_F·[∇w]) sobre F_Γ."""
    ctx = _context(topo, dofmap)
    h = topo.mesh.h
    return _ghost(ctx, dofmap.surface, topo.surface_penalty_faces, params.mu_surf / h ** 2, params.tau_surf, degree)


def ghost_weights(params: StabilizationParams, h: float) -> dict:
    """Pesos efectivos de las penalizaciones fantasma para un tamaño de malla h."""
    return {
        "bulk_value": params.mu_bulk / h,
        "bulk_gradient": params.tau_bulk * h,
        "surf_value": params.mu_surf / h ** 2,
        "surf_gradient": params.tau_surf,
    }


# ============================================================
# Segundo miembro y sistema completo
# ============================================================
def assemble_rhs(topo: CutTopology, dofmap: CombinedDofMap, problem, params: StabilizationParams,
                 degree: int = 4) -> np.ndarray:
    """l^h: c_Ω (f_Ω, v)_{Ω^h} + c_Γ (f_Γ∘p, v)_{Γ^h}."""
    n = dofmap.n
    b = np.zeros(n)
    if problem is None:
        return b
    mesh = topo.mesh
    G = element_gradients(mesh)

    bulk = dofmap.bulk
    rules = batch_clip_rules(mesh, bulk.elements, topo.levelset, degree)
    if rules.weights.size:
        elems = bulk.elements[rules.owner]
        lam = basis_values(mesh, elems, rules.points, G)
        fx = np.asarray(problem.f_bulk(rules.points), dtype=float)
        contrib = params.c_bulk * (rules.weights * fx)[:, None] * lam
        b += np.bincount(bulk.dofs[rules.owner].ravel(), weights=contrib.ravel(), minlength=n)

    surf = dofmap.surface
    rules = batch_segment_rules(topo, degree)
    if rules.weights.size:
        geometry = problem.geometry
        if np.any(np.abs(geometry.rho(rules.points)) >= geometry.validity_radius):
            raise GeometryError("Extensión de f_Γ evaluada fuera del radio de validez")
        elems = topo.segments.element[rules.owner]
        lam = basis_values(mesh, elems, rules.points, G)
        fy = np.asarray(problem.f_surf(geometry.closest_point(rules.points)), dtype=float)
        contrib = params.c_surf * (rules.weights * fy)[:, None] * lam
        b += np.bincount(surf.dofs[_positions(surf, elems)].ravel(), weights=contrib.ravel(), minlength=n)
    return b


def assemble_matrix(topo: CutTopology, dofmap: CombinedDofMap, params: StabilizationParams,
                    degree: int = 2) -> sp.csr_matrix:
    p = params.validated()
    A = (p.c_bulk * (assemble_bulk_form(topo, dofmap, p, degree) + assemble_ghost_bulk(topo, dofmap, p, degree))
         + p.c_surf * (assemble_surface_form(topo, dofmap, p, degree) + assemble_ghost_surface(topo, dofmap, p, degree))
         + assemble_coupling_form(topo, dofmap, p, degree))
    return A.tocsr()


def assemble_system(topo: CutTopology, dofmap: CombinedDofMap, problem, params: StabilizationParams,
                    degree: int = 2, rhs_degree: int = 4) -> AssembledSystem:
    """A^h = c_Ω(a_Ω + j_Ω) + c_Γ(a_Γ + j_Γ) + a_ΩΓ y l^h."""
    A = assemble_matrix(topo, dofmap, params, degree)
    b = assemble_rhs(topo, dofmap, problem, params, rhs_degree)
    return AssembledSystem(A, b, dofmap, params, float(topo.mesh.h), topo)


# ============================================================
# Normas de energía y matrices de Gram auxiliares
# ============================================================
def energy_gram(topo: CutTopology, dofmap: CombinedDofMap, params: StabilizationParams,
                variant: str = "total", degree: int = 2) -> sp.csr_matrix:
    """
    Gram de |||·|||_h:
      - bulk: ‖∇v‖² + ‖v‖² en Ω^h + ‖h^{-1/2}[v]‖² en F_Ω + j_Ω
      - surface: ‖∇_Γ v‖² + ‖v‖² en Γ^h + ‖h^{-1/2}[v]‖² en E + j_Γ
      - total: c_Ω bulk + c_Γ surface + ‖c_Ω v_Ω - c_Γ v_Γ‖² en Γ^h
    """
    if variant not in ("bulk", "surface", "total"):
        raise ConfigurationError(f"Variante de norma desconocida: {variant!r}")
    ctx = _context(topo, dofmap)
    h = topo.mesh.h
    G = _zero(ctx.n)
    if variant in ("bulk", "total"):
        Gb = _bulk_volume(ctx, degree) + (1.0 / h) * _bulk_face_jumps(ctx, degree)
        Gb = Gb + assemble_ghost_bulk(topo, dofmap, params, degree)
        G = G + (params.c_bulk * Gb if variant == "total" else Gb)
    if variant in ("surface", "total"):
        Gs = _surface_volume(ctx, degree) + assemble_ghost_surface(topo, dofmap, params, degree)
        if topo.surface_edges.point.shape[0]:
            rows, jump, _, w = _edge_functionals(ctx)
            Gs = Gs + (1.0 / h) * _outer(ctx.n, rows, jump, rows, jump, w)
        G = G + (params.c_surf * Gs if variant == "total" else Gs)
    if variant == "total":
        G = G + assemble_coupling_form(topo, dofmap, params, degree)
    return (0.5 * (G + G.T)).tocsr()


def bulk_gradient_gram(topo: CutTopology, dofmap: CombinedDofMap, region: str = "cut",
                       degree: int = 2) -> sp.csr_matrix:
    """‖∇v‖² sobre T∩Ω^h ('cut') o sobre los elementos completos de T_Ω ('active')."""
    return _bulk_volume(_context(topo, dofmap), degree, region, mass=False, stiffness=True)


def bulk_face_jump_gram(topo: CutTopology, dofmap: CombinedDofMap, degree: int = 2) -> sp.csr_matrix:
    """‖[v]‖² sobre las caras interiores completas de T_Ω (sin peso h⁻¹)."""
    return _bulk_face_jumps(_context(topo, dofmap), degree)


def bulk_mass_gram(topo: CutTopology, dofmap: CombinedDofMap, region: str = "active",
                   degree: int = 2) -> sp.csr_matrix:
    return _bulk_volume(_context(topo, dofmap), degree, region, mass=True, stiffness=False)


def surface_mass_gram(topo: CutTopology, dofmap: CombinedDofMap, region: str = "cut",
                      degree: int = 2) -> sp.csr_matrix:
    """‖v‖² sobre Γ^h ('cut') o sobre los elementos completos de T_Γ ('active')."""
    ctx = _context(topo, dofmap)
    if region == "cut":
        return _surface_volume(ctx, degree, mass=True, stiffness=False)
    space = dofmap.surface
    rules = batch_full_element_rules(topo.mesh, space.elements, degree)
    return _volume_terms(ctx, space, rules, mass=True, stiffness=False)


def surface_tangential_gram(topo: CutTopology, dofmap: CombinedDofMap, degree: int = 2) -> sp.csr_matrix:
    return _surface_volume(_context(topo, dofmap), degree, mass=False, stiffness=True)


def surface_mean_functional(topo: CutTopology, dofmap: CombinedDofMap, degree: int = 2) -> np.ndarray:
    """m_i = ∫_{Γ^h} φ_{Γ,i}; v tiene media nula en Γ^h si m·v = 0."""
    ctx = _context(topo, dofmap)
    rules = batch_segment_rules(topo, degree)
    m = np.zeros(dofmap.n)
    if rules.weights.size == 0:
        return m
    elems = topo.segments.element[rules.owner]
    lam = basis_values(topo.mesh, elems, rules.points, ctx.grads)
    rows = dofmap.surface.dofs[_positions(dofmap.surface, elems)]
    return m + np.bincount(rows.ravel(), weights=(rules.weights[:, None] * lam).ravel(), minlength=dofmap.n)


# ============================================================
# Volcado
# ============================================================
def write_coo_txt(matrix, path: str) -> None:
    """Líneas 'i j value' (formato coordenado)."""
    M = sp.coo_matrix(matrix)
    with open(path, "w", encoding="utf-8") as f:
        for i, j, v in zip(M.row, M.col, M.data):
            f.write(f"{i} {j} {v:.17g}\n")


def write_vector_txt(vector, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, v in enumerate(np.asarray(vector, dtype=float)):
            f.write(f"{i} {v:.17g}\n")
