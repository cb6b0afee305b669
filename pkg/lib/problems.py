# lib/problems.py
# -*- coding: utf-8 -*-
"""
Problemas manufacturados del sistema acoplado:
    -Δu_Ω + u_Ω = f_Ω                 en Ω
    ∂_n u_Ω = c_Γ u_Γ - c_Ω u_Ω        en Γ
    -Δ_Γ u_Γ + u_Γ + ∂_n u_Ω = f_Γ     en Γ
y normas de error sobre Ω^h y Γ^h.
"""
from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np

from lib.errors import ConfigurationError, EOCError
from lib.levelset import CircleLevelSet, CutTopology, LevelSet, StripLevelSet
from lib.mesh import element_gradients
from lib.quadrature import batch_clip_rules, batch_segment_rules
from lib.spaces import CombinedDofMap, basis_values, interpolate_pair

Field = Callable[[np.ndarray], np.ndarray]


class ManufacturedProblem(NamedTuple):
    name: str
    u_bulk: Field
    grad_bulk: Field
    u_surf: Field
    f_bulk: Field
    f_surf: Field
    u_surf_ext: Field
    grad_surf_ext: Field
    geometry: LevelSet
    c_bulk: float
    c_surf: float


class ErrorReport(NamedTuple):
    l2_bulk: float
    h1_bulk: float
    l2_surf: float
    h1_surf: float


def _check_coefficients(c_bulk: float, c_surf: float) -> None:
    if not (c_bulk > 0.0 and c_surf > 0.0):
        raise ConfigurationError(f"c_bulk y c_surf deben ser > 0 (c_bulk={c_bulk}, c_surf={c_surf})")


# ============================================================
# u_Ω = c_Γ exp(-x(x-1) y(y-1)) sobre un círculo
# ============================================================
def _exponent_derivatives(x: np.ndarray):
    """g = -(x²-x)(y²-y) y sus derivadas hasta orden 3 (formas cerradas)."""
    X, Y = x[:, 0], x[:, 1]
    a, b = X * X - X, Y * Y - Y
    ap, bp = 2.0 * X - 1.0, 2.0 * Y - 1.0
    m = X.size
    g = -a * b
    g1 = np.stack([-ap * b, -a * bp], axis=1)
    g2 = np.empty((m, 2, 2))
    g2[:, 0, 0] = -2.0 * b
    g2[:, 1, 1] = -2.0 * a
    g2[:, 0, 1] = g2[:, 1, 0] = -ap * bp
    g3 = np.zeros((m, 2, 2, 2))
    # g_xxy y g_xyy con sus permutaciones; g_xxx = g_yyy = 0
    for idx in ((0, 0, 1), (0, 1, 0), (1, 0, 0)):
        g3[(slice(None),) + idx] = -2.0 * bp
    for idx in ((0, 1, 1), (1, 0, 1), (1, 1, 0)):
        g3[(slice(None),) + idx] = -2.0 * ap
    return g, g1, g2, g3


def _bulk_derivatives(x: np.ndarray, scale: float):
    """u, ∇u, ∇²u, ∇³u para u = scale·exp(g)."""
    g, g1, g2, g3 = _exponent_derivatives(x)
    u = scale * np.exp(g)
    d1 = u[:, None] * g1
    gg = g1[:, :, None] * g1[:, None, :]
    d2 = u[:, None, None] * (gg + g2)
    d3 = u[:, None, None, None] * (
        gg[:, :, :, None] * g1[:, None, None, :]
        + g2[:, :, :, None] * g1[:, None, None, :]
        + g2[:, :, None, :] * g1[:, None, :, None]
        + g2[:, None, :, :] * g1[:, :, None, None]
        + g3
    )
    return u, d1, d2, d3


def build_circle_problem(c_bulk: float = 1.0, c_surf: float = 1.0, center=(0.0, 0.0),
                         radius: float = 1.0) -> ManufacturedProblem:
    """
    u_Γ se deduce de la condición de acoplamiento: u_Γ = (∂_n u_Ω + c_Ω u_Ω)/c_Γ.
    Con m = (x - c)/R, H(x) = (∇u·m + c_Ω u)/c_Γ coincide con u_Γ sobre Γ y
    Δ_Γ u_Γ = τᵀ∇²H τ - (∇H·n)/R.
    """
    _check_coefficients(c_bulk, c_surf)
    geometry = CircleLevelSet(center, radius)
    c = geometry.center
    R = geometry.radius

    def _pts(x):
        return np.asarray(x, dtype=float).reshape(-1, 2)

    def u_bulk(x):
        return _bulk_derivatives(_pts(x), c_surf)[0]

    def grad_bulk(x):
        return _bulk_derivatives(_pts(x), c_surf)[1]

    def f_bulk(x):
        g, g1, g2, _ = _exponent_derivatives(_pts(x))
        u = c_surf * np.exp(g)
        return u * (1.0 - np.einsum("md,md->m", g1, g1) - (g2[:, 0, 0] + g2[:, 1, 1]))

    def _h_derivatives(x):
        """H, ∇H, ∇²H y S = ∇u·m."""
        u, d1, d2, d3 = _bulk_derivatives(x, c_surf)
        m = (x - c) / R
        S = np.einsum("mi,mi->m", d1, m)
        dS = np.einsum("mik,mi->mk", d2, m) + d1 / R
        ddS = np.einsum("mikl,mi->mkl", d3, m) + 2.0 * d2 / R
        H = (S + c_bulk * u) / c_surf
        dH = (dS + c_bulk * d1) / c_surf
        ddH = (ddS + c_bulk * d2) / c_surf
        return H, dH, ddH, S

    def u_surf(y):
        y = geometry.closest_point(_pts(y))
        return _h_derivatives(y)[0]

    def f_surf(y):
        y = geometry.closest_point(_pts(y))
        H, dH, ddH, S = _h_derivatives(y)
        n = (y - c) / R
        t = np.column_stack([-n[:, 1], n[:, 0]])
        lap_gamma = np.einsum("mk,mkl,ml->m", t, ddH, t) - np.einsum("mk,mk->m", dH, n) / R
        return -lap_gamma + H + S

    def grad_surf_ext(x):
        """∇(u_Γ∘p)(x) = (R/|x-c|)(I - m̂m̂ᵀ)∇H(p(x))."""
        x = _pts(x)
        y = geometry.closest_point(x)
        dH = _h_derivatives(y)[1]
        d = x - c
        r = np.linalg.norm(d, axis=1)
        mh = d / r[:, None]
        tangential = dH - np.einsum("mk,mk->m", dH, mh)[:, None] * mh
        return (R / r)[:, None] * tangential

    return ManufacturedProblem("circle", u_bulk, grad_bulk, u_surf, f_bulk, f_surf,
                               u_surf, grad_surf_ext, geometry, float(c_bulk), float(c_surf))


# ============================================================
# Datos afines en una banda (reproducibles exactamente por P1)
# ============================================================
def build_strip_problem(c_bulk: float = 1.0, c_surf: float = 1.0, alpha: float = 1.0, beta: float = 0.5,
                        center_y: float = 0.0, half_width: float = 0.6) -> ManufacturedProblem:
    """u_Ω = α + βy en |y - c| < w; u_Γ y f_Γ constantes en cada interfaz recta."""
    _check_coefficients(c_bulk, c_surf)
    geometry = StripLevelSet(center_y, half_width)

    def _pts(x):
        return np.asarray(x, dtype=float).reshape(-1, 2)

    def u_bulk(x):
        return alpha + beta * _pts(x)[:, 1]

    def grad_bulk(x):
        x = _pts(x)
        return np.column_stack([np.zeros(x.shape[0]), np.full(x.shape[0], beta)])

    def _interface_data(x):
        side = geometry.normal(x)[:, 1]
        y = geometry.closest_point(x)
        dn = beta * side
        ug = (dn + c_bulk * (alpha + beta * y[:, 1])) / c_surf
        return ug, dn

    def u_surf(x):
        return _interface_data(_pts(x))[0]

    def f_surf(x):
        ug, dn = _interface_data(_pts(x))
        return ug + dn

    def grad_surf_ext(x):
        return np.zeros((_pts(x).shape[0], 2))

    return ManufacturedProblem("strip", u_bulk, grad_bulk, u_surf, u_bulk, f_surf,
                               u_surf, grad_surf_ext, geometry, float(c_bulk), float(c_surf))


# ============================================================
# Errores
# ============================================================
def interpolant(problem: ManufacturedProblem, topo: CutTopology, dofmap: CombinedDofMap) -> np.ndarray:
    """Interpolante nodal de (u_Ω, u_Γ∘p) en V^h."""
    return interpolate_pair(topo.mesh, dofmap, problem.u_bulk, problem.u_surf_ext)


def compute_errors(coefficients, problem: ManufacturedProblem, topo: CutTopology,
                   dofmap: CombinedDofMap, degree: int = 4) -> ErrorReport:
    """
    ‖e‖_{L²(Ω^h)}, ‖e‖_{H¹(Ω^h)} (rotas), ‖e‖_{L²(Γ^h)} y ‖e‖_{H¹(Γ^h)} tangencial,
    con la solución exacta de superficie extendida por u_Γ∘p.
    """
    mesh = topo.mesh
    G = element_gradients(mesh)
    coeffs = np.asarray(coefficients, dtype=float)

    bulk = dofmap.bulk
    cb = coeffs[:dofmap.n_bulk].reshape(-1, 3)
    rules = batch_clip_rules(mesh, bulk.elements, topo.levelset, degree)
    l2b = h1b = 0.0
    if rules.weights.size:
        elems = bulk.elements[rules.owner]
        c = cb[rules.owner]
        lam = basis_values(mesh, elems, rules.points, G)
        e = np.einsum("mi,mi->m", lam, c) - problem.u_bulk(rules.points)
        ge = np.einsum("mid,mi->md", G[elems], c) - problem.grad_bulk(rules.points)
        l2b = float(np.sum(rules.weights * e * e))
        h1b = l2b + float(np.sum(rules.weights * np.einsum("md,md->m", ge, ge)))

    surf = dofmap.surface
    cs = coeffs[dofmap.n_bulk:].reshape(-1, 3)
    rules = batch_segment_rules(topo, degree)
    l2s = h1s = 0.0
    if rules.weights.size:
        elems = topo.segments.element[rules.owner]
        c = cs[surf.position[elems]]
        lam = basis_values(mesh, elems, rules.points, G)
        e = np.einsum("mi,mi->m", lam, c) - problem.u_surf_ext(rules.points)
        grad = np.einsum("mid,mi->md", G[elems], c) - problem.grad_surf_ext(rules.points)
        ge = np.einsum("md,md->m", grad, topo.segments.tangent[rules.owner])
        l2s = float(np.sum(rules.weights * e * e))
        h1s = l2s + float(np.sum(rules.weights * ge * ge))

    return ErrorReport(np.sqrt(l2b), np.sqrt(h1b), np.sqrt(l2s), np.sqrt(h1s))


# ============================================================
# Órdenes de convergencia
# ============================================================
def eoc(errors: Sequence[float]) -> np.ndarray:
    """EOC(k) = log(E_{k-1}/E_k)/log 2; longitud len(errors) - 1."""
    E = np.asarray(errors, dtype=float)
    if E.size < 2:
        raise EOCError("Se necesitan al menos dos niveles para calcular el EOC")
    if not np.all(np.isfinite(E)) or np.any(E <= 0.0):
        raise EOCError(f"EOC no definido para errores no positivos: {E.tolist()}")
    return np.log(E[:-1] / E[1:]) / np.log(2.0)


def fit_slope(h: Sequence[float], values: Sequence[float]) -> float:
    """Pendiente de mínimos cuadrados de log(values) frente a log(h)."""
    h = np.asarray(h, dtype=float)
    v = np.asarray(values, dtype=float)
    if h.size < 2 or h.size != v.size:
        raise EOCError("Se necesitan al menos dos pares (h, valor)")
    if np.any(h <= 0.0) or np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        raise EOCError("Pendiente no definida para valores no positivos")
    return float(np.polyfit(np.log(h), np.log(v), 1)[0])
