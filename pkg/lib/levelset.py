# lib/levelset.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import math
from typing import NamedTuple, Optional, Tuple

import numpy as np

from lib.errors import ConfigurationError, GeometryError
from lib.mesh import BackgroundMesh, element_gradients

SNAP_FACTOR = 1e-10
DEGENERATE_FACTOR = 1e-14


# ============================================================
# Conjuntos de nivel exactos
# ============================================================
class LevelSet:
    """Distancia con signo a Γ (negativa dentro de Ω) y proyección al punto más cercano."""

    validity_radius: float = math.inf

    def rho(self, x) -> np.ndarray:
        raise NotImplementedError

    def closest_point(self, x) -> np.ndarray:
        raise NotImplementedError

    def normal(self, x) -> np.ndarray:
        """Normal exterior exacta n(p(x))."""
        raise NotImplementedError


def closest_point_circle(x, center=(0.0, 0.0), radius: float = 1.0) -> np.ndarray:
    """p(x) = c + R (x - c)/|x - c|; no definido en el centro."""
    x = np.asarray(x, dtype=float)
    d = x - np.asarray(center, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0.0):
        raise GeometryError("Punto más cercano no definido en el centro del círculo")
    return np.asarray(center, dtype=float) + radius * d / np.expand_dims(r, -1)


class CircleLevelSet(LevelSet):
    def __init__(self, center=(0.0, 0.0), radius: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        # p está definido salvo en el centro: |rho| < R
        self.validity_radius = self.radius

    def rho(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) - self.radius

    def closest_point(self, x) -> np.ndarray:
        return closest_point_circle(x, self.center, self.radius)

    def normal(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x - self.center
        r = np.linalg.norm(d, axis=-1)
        if np.any(r == 0.0):
            raise GeometryError("Normal no definida en el centro del círculo")
        return d / np.expand_dims(r, -1)

    def __repr__(self) -> str:
        return f"CircleLevelSet(center={tuple(self.center)}, radius={self.radius})"


class LineLevelSet(LevelSet):
    """Recta {(x - p)·n = 0}; Ω es el lado con (x - p)·n < 0."""

    def __init__(self, point=(0.0, 0.0), normal=(0.0, 1.0)):
        self.point = np.asarray(point, dtype=float)
        nrm = np.asarray(normal, dtype=float)
        self.unit_normal = nrm / np.linalg.norm(nrm)
        self.validity_radius = math.inf

    def rho(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.point) @ self.unit_normal

    def closest_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x - np.expand_dims(self.rho(x), -1) * self.unit_normal

    def normal(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.unit_normal, x.shape).copy()


class StripLevelSet(LevelSet):
    """Banda horizontal |y - c| < w: dos interfaces rectas y = c ± w."""

    def __init__(self, center_y: float = 0.0, half_width: float = 0.6):
        self.center_y = float(center_y)
        self.half_width = float(half_width)
        # la línea media es el eje medial
        self.validity_radius = self.half_width

    def _side(self, x) -> np.ndarray:
        s = np.sign(np.asarray(x, dtype=float)[..., 1] - self.center_y)
        if np.any(s == 0.0):
            raise GeometryError("Punto sobre el eje medial de la banda")
        return s

    def rho(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.abs(x[..., 1] - self.center_y) - self.half_width

    def closest_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = x.copy()
        p[..., 1] = self.center_y + self._side(x) * self.half_width
        return p

    def normal(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = np.zeros_like(x)
        n[..., 1] = self._side(x)
        return n


# ============================================================
# Conjunto de nivel discreto
# ============================================================
class DiscreteLevelSet(NamedTuple):
    values: np.ndarray
    eps_snap: float


def interpolate_levelset(ls: LevelSet, mesh: BackgroundMesh) -> DiscreteLevelSet:
    """
    Interpolante P1 continuo de rho en los vértices.
    Regla de ajuste: |rho^h(v)| < 1e-10·h se sustituye por -1e-10·h (vértice dentro).
    """
    values = np.asarray(ls.rho(mesh.vertices), dtype=float).copy()
    if not np.all(np.isfinite(values)):
        raise GeometryError("rho no finito en algún vértice")
    eps = SNAP_FACTOR * mesh.h
    values[np.abs(values) < eps] = -eps
    return DiscreteLevelSet(values, eps)


# ============================================================
# Topología de corte
# ============================================================
class SurfaceSegments(NamedTuple):
    """Segmentos K = Γ^h ∩ T, recorridos en sentido antihorario alrededor de Ω^h."""
    element: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    length: np.ndarray
    edge0: np.ndarray
    edge1: np.ndarray


class SurfaceEdges(NamedTuple):
    """Puntos E = K+ ∩ K- con sus co-normales (salientes de cada segmento)."""
    point: np.ndarray
    mesh_edge: np.ndarray
    seg_plus: np.ndarray
    seg_minus: np.ndarray
    conormal_plus: np.ndarray
    conormal_minus: np.ndarray


class CutTopology(NamedTuple):
    mesh: BackgroundMesh
    levelset: DiscreteLevelSet
    active_bulk: np.ndarray
    active_surface: np.ndarray
    bulk_faces: np.ndarray
    surface_band_faces: np.ndarray
    surface_penalty_faces: np.ndarray
    segments: SurfaceSegments
    surface_edges: SurfaceEdges
    boundary_points: int


def _edge_zeros(mesh: BackgroundMesh, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Ceros del interpolante en cada arista con cambio de signo, una vez por arista global."""
    E = mesh.faces.edges
    va = values[E[:, 0]]
    vb = values[E[:, 1]]
    cut = (va < 0.0) != (vb < 0.0)
    zeros = np.full((E.shape[0], 2), np.nan)
    t = va[cut] / (va[cut] - vb[cut])
    xa = mesh.vertices[E[cut, 0]]
    xb = mesh.vertices[E[cut, 1]]
    zeros[cut] = xa + t[:, None] * (xb - xa)
    return cut, zeros


def _empty_segments() -> SurfaceSegments:
    z2 = np.zeros((0, 2))
    zi = np.zeros(0, dtype=np.int64)
    return SurfaceSegments(zi, z2, z2.copy(), z2.copy(), z2.copy(), np.zeros(0), zi.copy(), zi.copy())


def extract_surface_segments(mesh: BackgroundMesh, dls: DiscreteLevelSet,
                             active_surface: Optional[np.ndarray] = None):
    """
    Segmentos de Γ^h y puntos-arista E con co-normales.
    - extremos = ceros lineales en las dos aristas cortadas (compartidos por arista global)
    - n^h = ∇ρ^h/|∇ρ^h|, hacia ρ^h > 0
    - p0 -> p1 en sentido antihorario: n^h = (t_y, -t_x)
    Devuelve (segments, surface_edges, n_boundary_points).
    """
    values = dls.values
    if active_surface is None:
        vals = values[mesh.elements]
        active_surface = np.nonzero((vals.min(axis=1) < 0.0) & (vals.max(axis=1) > 0.0))[0]
    surf = np.asarray(active_surface, dtype=np.int64)
    if surf.size == 0:
        z2 = np.zeros((0, 2))
        zi = np.zeros(0, dtype=np.int64)
        return _empty_segments(), SurfaceEdges(z2, zi, zi.copy(), zi.copy(), z2.copy(), z2.copy()), 0

    cut, zeros = _edge_zeros(mesh, values)
    el_edges = mesh.faces.element_edges[surf]
    mask = cut[el_edges]
    n_cut = mask.sum(axis=1)
    if np.any(n_cut != 2):
        bad = surf[np.nonzero(n_cut != 2)[0][0]]
        raise GeometryError(f"El elemento {int(bad)} no tiene exactamente dos aristas cortadas")
    ids = el_edges[mask].reshape(-1, 2)

    grads = element_gradients(mesh)[surf]
    g = np.einsum("eij,ei->ej", grads, values[mesh.elements[surf]])
    normal = g / np.linalg.norm(g, axis=1)[:, None]
    tangent = np.column_stack([-normal[:, 1], normal[:, 0]])

    q0 = zeros[ids[:, 0]]
    q1 = zeros[ids[:, 1]]
    swap = np.einsum("ij,ij->i", q1 - q0, tangent) < 0.0
    ids[swap] = ids[swap][:, ::-1]
    p0 = zeros[ids[:, 0]]
    p1 = zeros[ids[:, 1]]
    length = np.linalg.norm(p1 - p0, axis=1)
    tiny = length < DEGENERATE_FACTOR * mesh.h
    if np.any(tiny):
        bad = surf[np.nonzero(tiny)[0][0]]
        raise GeometryError(f"Segmento degenerado en el elemento {int(bad)}")

    segments = SurfaceSegments(surf, p0, p1, normal, tangent, length, ids[:, 0].copy(), ids[:, 1].copy())

    # puntos-arista: cada arista cortada interior la comparten dos segmentos
    occ_edge = np.concatenate([ids[:, 0], ids[:, 1]])
    occ_seg = np.concatenate([np.arange(surf.size), np.arange(surf.size)])
    occ_sign = np.concatenate([-np.ones(surf.size), np.ones(surf.size)])  # p0: -t, p1: +t
    order = np.lexsort((occ_seg, occ_edge))
    occ_edge, occ_seg, occ_sign = occ_edge[order], occ_seg[order], occ_sign[order]
    uniq, start, count = np.unique(occ_edge, return_index=True, return_counts=True)
    if np.any(count > 2):
        raise GeometryError("Punto de superficie compartido por más de dos segmentos")
    pair = count == 2
    s_plus = occ_seg[start[pair]]
    s_minus = occ_seg[start[pair] + 1]
    c_plus = occ_sign[start[pair]][:, None] * tangent[s_plus]
    c_minus = occ_sign[start[pair] + 1][:, None] * tangent[s_minus]
    edges = SurfaceEdges(
        point=zeros[uniq[pair]],
        mesh_edge=uniq[pair],
        seg_plus=s_plus,
        seg_minus=s_minus,
        conormal_plus=c_plus,
        conormal_minus=c_minus,
    )
    return segments, edges, int(np.sum(~pair))


def classify_elements(mesh: BackgroundMesh, dls: DiscreteLevelSet) -> CutTopology:
    """
    Mallas activas y conjuntos de caras:
      - T en T_Ω si min ρ^h < 0; T en T_Γ si además cambia de signo
      - F_Ω: caras interiores entre elementos de T_Ω
      - F_Ω^g: caras de F_Ω con algún vecino en T_Γ
      - F_Γ: caras interiores entre elementos de T_Γ
    """
    vals = dls.values[mesh.elements]
    in_bulk = vals.min(axis=1) < 0.0
    in_surf = in_bulk & (vals.max(axis=1) > 0.0)
    active_bulk = np.nonzero(in_bulk)[0]
    active_surface = np.nonzero(in_surf)[0]
    if active_bulk.size == 0:
        raise ConfigurationError("Malla activa del volumen vacía: la superficie no corta la caja")

    faces = mesh.faces
    plus_b, minus_b = in_bulk[faces.plus], in_bulk[faces.minus]
    plus_s, minus_s = in_surf[faces.plus], in_surf[faces.minus]
    bulk_faces = np.nonzero(plus_b & minus_b)[0]
    band = np.nonzero(plus_b & minus_b & (plus_s | minus_s))[0]
    penalty = np.nonzero(plus_s & minus_s)[0]

    segments, edges, n_open = extract_surface_segments(mesh, dls, active_surface)
    return CutTopology(mesh, dls, active_bulk, active_surface, bulk_faces, band, penalty,
                       segments, edges, n_open)


def cut_topology(ls: LevelSet, mesh: BackgroundMesh) -> CutTopology:
    return classify_elements(mesh, interpolate_levelset(ls, mesh))


# ============================================================
# Comprobaciones geométricas
# ============================================================
class GeometryCheck(NamedTuple):
    sup_dist: float
    sup_normal_dev: float


def check_geometry_assumptions(ls: LevelSet, topo: CutTopology, samples_per_segment: int = 8) -> GeometryCheck:
    """Sup de |ρ| y de |n(p(x)) - n^h| sobre puntos muestreados de Γ^h."""
    seg = topo.segments
    if seg.length.size == 0:
        return GeometryCheck(0.0, 0.0)
    s = np.linspace(0.0, 1.0, max(2, int(samples_per_segment)))
    x = seg.p0[:, None, :] + s[None, :, None] * (seg.p1 - seg.p0)[:, None, :]
    x = x.reshape(-1, 2)
    r = np.asarray(ls.rho(x))
    if np.any(np.abs(r) >= ls.validity_radius):
        raise GeometryError("Muestra de Γ^h fuera del radio de validez del punto más cercano")
    nh = np.repeat(seg.normal, s.size, axis=0)
    dev = np.linalg.norm(ls.normal(x) - nh, axis=1)
    return GeometryCheck(float(np.max(np.abs(r))), float(np.max(dev)))


def surface_length(topo: CutTopology) -> float:
    return float(np.sum(topo.segments.length))


def watertight_defect(topo: CutTopology) -> int:
    """Σ_E (nº de segmentos incidentes - 2); 0 para una curva cerrada."""
    return -int(topo.boundary_points)


# ============================================================
# Volcado de texto
# ============================================================
def write_segments_txt(topo: CutTopology, path: str) -> None:
    seg = topo.segments
    with open(path, "w", encoding="utf-8") as f:
        for (x0, y0), (x1, y1) in zip(seg.p0, seg.p1):
            f.write(f"s {x0:.17g} {y0:.17g} {x1:.17g} {y1:.17g}\n")
