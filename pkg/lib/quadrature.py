# lib/quadrature.py
# -*- coding: utf-8 -*-
from __future__ import annotations

from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from lib.errors import GeometryError, QuadratureError
from lib.levelset import CutTopology, DiscreteLevelSet
from lib.mesh import BackgroundMesh, element_areas

DOMAIN_TAGS = ("bulkCut", "surfaceSegment", "faceCut", "fullElement", "fullFace", "surfacePoint")


class QuadratureRule(NamedTuple):
    points: np.ndarray
    weights: np.ndarray
    domain_tag: str
    degree: int

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))

    def integrate(self, f) -> float:
        if self.weights.size == 0:
            return 0.0
        return float(np.sum(self.weights * np.asarray(f(self.points), dtype=float)))


class QuadratureBatch(NamedTuple):
    """Reglas de varias entidades aplanadas: owner[q] = posición de la entidad del punto q."""
    owner: np.ndarray
    points: np.ndarray
    weights: np.ndarray


# ============================================================
# Reglas de referencia (triángulo en baricéntricas, pesos con suma 1)
# ============================================================
def _sym3(a: float, w: float):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)], [w, w, w]


def _build_triangle_rules():
    rules = {1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]))}
    p, w = _sym3(1.0 / 6.0, 1.0 / 3.0)
    rules[2] = (np.array(p), np.array(w))
    # Dunavant, grado 4, 6 puntos
    p1, w1 = _sym3(0.445948490915965, 0.223381589678011)
    p2, w2 = _sym3(0.091576213509771, 0.109951743655322)
    rules[4] = (np.array(p1 + p2), np.array(w1 + w2))
    # Dunavant, grado 5, 7 puntos
    p1, w1 = _sym3(0.470142064105115, 0.132394152788506)
    p2, w2 = _sym3(0.101286507323456, 0.125939180544827)
    rules[5] = (np.array([(1 / 3, 1 / 3, 1 / 3)] + p1 + p2), np.array([0.225] + w1 + w2))
    return rules


_TRIANGLE_RULES = _build_triangle_rules()


def triangle_reference_rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Regla simétrica de pesos positivos exacta hasta 'degree' (<= 5)."""
    if degree < 0 or degree > 5:
        raise QuadratureError(f"Grado de cuadratura no soportado en triángulos: {degree}")
    key = 1 if degree <= 1 else 2 if degree == 2 else 4 if degree <= 4 else 5
    bary, w = _TRIANGLE_RULES[key]
    return bary, w / w.sum()


def gauss_reference_rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre en [0,1] exacta hasta 'degree'."""
    if degree < 0:
        raise QuadratureError(f"Grado negativo: {degree}")
    s, w = leggauss(degree // 2 + 1)
    return 0.5 * (s + 1.0), 0.5 * w


# ============================================================
# Reglas por entidad
# ============================================================
def _triangle_rule(tri: np.ndarray, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    bary, w = triangle_reference_rule(degree)
    d1 = tri[1] - tri[0]
    d2 = tri[2] - tri[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    return bary @ tri, w * area


def _segment_rule(a: np.ndarray, b: np.ndarray, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    s, w = gauss_reference_rule(degree)
    L = float(np.linalg.norm(b - a))
    return a + s[:, None] * (b - a), w * L


def full_entity_rule(vertices, degree: int = 2) -> QuadratureRule:
    """Regla estándar sobre un triángulo (3 vértices) o una cara (2 vértices)."""
    X = np.asarray(vertices, dtype=float)
    if X.shape == (3, 2):
        pts, w = _triangle_rule(X, degree)
        return QuadratureRule(pts, w, "fullElement", degree)
    if X.shape == (2, 2):
        pts, w = _segment_rule(X[0], X[1], degree)
        return QuadratureRule(pts, w, "fullFace", degree)
    raise QuadratureError(f"Entidad no reconocida con forma {X.shape}")


def surface_segment_rule(p0, p1, degree: int = 2) -> QuadratureRule:
    a = np.asarray(p0, dtype=float)
    b = np.asarray(p1, dtype=float)
    scale = max(1.0, float(np.abs(a).max()), float(np.abs(b).max()))
    if not np.linalg.norm(b - a) > 1e-14 * scale:
        raise GeometryError("Segmento de superficie degenerado")
    pts, w = _segment_rule(a, b, degree)
    return QuadratureRule(pts, w, "surfaceSegment", degree)


def surface_point_rule(x) -> QuadratureRule:
    return QuadratureRule(np.asarray(x, dtype=float).reshape(1, 2), np.ones(1), "surfacePoint", 0)


def _values_of(dls: Union[DiscreteLevelSet, np.ndarray]) -> np.ndarray:
    return dls.values if isinstance(dls, DiscreteLevelSet) else np.asarray(dls, dtype=float)


def _edge_zero(xa, xb, va: float, vb: float):
    return xa + (va / (va - vb)) * (xb - xa)


def clip_polygon(X: np.ndarray, v: np.ndarray, gidx: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Polígono T ∩ {ρ^h < 0} (Sutherland-Hodgman con un único semiplano lineal).
    El cero de cada arista se calcula desde el vértice de menor índice global.
    """
    if gidx is None:
        gidx = np.arange(3)
    poly = []
    for k in range(3):
        i, j = k, (k + 1) % 3
        if v[i] < 0.0:
            poly.append(X[i])
        if (v[i] < 0.0) != (v[j] < 0.0):
            a, b = (i, j) if gidx[i] < gidx[j] else (j, i)
            poly.append(_edge_zero(X[a], X[b], v[a], v[b]))
    return np.array(poly).reshape(-1, 2)


def _polygon_rule(poly: np.ndarray, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    if poly.shape[0] < 3:
        return np.zeros((0, 2)), np.zeros(0)
    pts, ws = [], []
    for k in range(1, poly.shape[0] - 1):
        p, w = _triangle_rule(np.array([poly[0], poly[k], poly[k + 1]]), degree)
        pts.append(p)
        ws.append(w)
    return np.vstack(pts), np.concatenate(ws)


def clip_element_rule(mesh: BackgroundMesh, element: int, dls, degree: int = 2) -> QuadratureRule:
    """Regla sobre T ∩ {ρ^h < 0}: el subpolígono se parte en a lo sumo 2 triángulos."""
    gidx = mesh.elements[int(element)]
    X = mesh.vertices[gidx]
    v = _values_of(dls)[gidx]
    pts, w = _polygon_rule(clip_polygon(X, v, gidx), degree)
    return QuadratureRule(pts, w, "bulkCut", degree)


def cut_face_rule(mesh: BackgroundMesh, face: int, dls, degree: int = 2) -> QuadratureRule:
    """Regla sobre F ∩ Ω^h; vacía (cero puntos) si la cara queda fuera."""
    a_idx, b_idx = mesh.faces.vertices[int(face)]
    values = _values_of(dls)
    va, vb = values[a_idx], values[b_idx]
    xa, xb = mesh.vertices[a_idx], mesh.vertices[b_idx]
    if va >= 0.0 and vb >= 0.0:
        return QuadratureRule(np.zeros((0, 2)), np.zeros(0), "faceCut", degree)
    start = xa if va < 0.0 else _edge_zero(xa, xb, va, vb)
    end = xb if vb < 0.0 else _edge_zero(xa, xb, va, vb)
    pts, w = _segment_rule(start, end, degree)
    return QuadratureRule(pts, w, "faceCut", degree)


# ============================================================
# Reglas por lotes (ensamblado vectorizado)
# ============================================================
def _empty_batch() -> QuadratureBatch:
    return QuadratureBatch(np.zeros(0, dtype=np.int64), np.zeros((0, 2)), np.zeros(0))


def batch_full_element_rules(mesh: BackgroundMesh, elements, degree: int = 2) -> QuadratureBatch:
    elements = np.asarray(elements, dtype=np.int64)
    if elements.size == 0:
        return _empty_batch()
    bary, w = triangle_reference_rule(degree)
    X = mesh.vertices[mesh.elements[elements]]
    pts = np.einsum("mk,ekd->emd", bary, X)
    area = element_areas(mesh)[elements]
    weights = w[None, :] * area[:, None]
    owner = np.repeat(np.arange(elements.size), bary.shape[0])
    return QuadratureBatch(owner, pts.reshape(-1, 2), weights.ravel())


def batch_clip_rules(mesh: BackgroundMesh, elements, dls, degree: int = 2) -> QuadratureBatch:
    """Reglas de T ∩ Ω^h para una lista de elementos (los no cortados, vectorizados)."""
    elements = np.asarray(elements, dtype=np.int64)
    if elements.size == 0:
        return _empty_batch()
    values = _values_of(dls)
    vals = values[mesh.elements[elements]]
    inside = np.all(vals < 0.0, axis=1)

    full_pos = np.nonzero(inside)[0]
    full = batch_full_element_rules(mesh, elements[full_pos], degree)
    owners = [full_pos[full.owner]]
    points = [full.points]
    weights = [full.weights]
    for pos in np.nonzero(~inside)[0]:
        rule = clip_element_rule(mesh, elements[pos], values, degree)
        owners.append(np.full(rule.weights.size, pos, dtype=np.int64))
        points.append(rule.points)
        weights.append(rule.weights)
    owner = np.concatenate(owners)
    order = np.argsort(owner, kind="stable")
    return QuadratureBatch(owner[order], np.vstack(points)[order], np.concatenate(weights)[order])


def batch_face_rules(mesh: BackgroundMesh, faces, dls=None, degree: int = 2) -> QuadratureBatch:
    """Caras completas (dls=None) o partes F ∩ Ω^h; las caras vacías no aportan puntos."""
    faces = np.asarray(faces, dtype=np.int64)
    if faces.size == 0:
        return _empty_batch()
    fv = mesh.faces.vertices[faces]
    a = mesh.vertices[fv[:, 0]]
    b = mesh.vertices[fv[:, 1]]
    keep = np.arange(faces.size)
    if dls is not None:
        values = _values_of(dls)
        va, vb = values[fv[:, 0]], values[fv[:, 1]]
        neg_a, neg_b = va < 0.0, vb < 0.0
        mixed = neg_a != neg_b
        t = np.zeros_like(va)
        t[mixed] = va[mixed] / (va[mixed] - vb[mixed])
        zero = a + t[:, None] * (b - a)
        start = np.where(neg_a[:, None], a, zero)
        end = np.where(neg_b[:, None], b, zero)
        keep = np.nonzero(neg_a | neg_b)[0]
        a, b = start[keep], end[keep]
    s, w = gauss_reference_rule(degree)
    L = np.linalg.norm(b - a, axis=1)
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    weights = w[None, :] * L[:, None]
    owner = np.repeat(keep, s.size)
    return QuadratureBatch(owner, pts.reshape(-1, 2), weights.ravel())


def batch_segment_rules(topo: CutTopology, degree: int = 2) -> QuadratureBatch:
    """Gauss sobre cada segmento de Γ^h; owner = índice de segmento."""
    seg = topo.segments
    if seg.length.size == 0:
        return _empty_batch()
    s, w = gauss_reference_rule(degree)
    d = seg.p1 - seg.p0
    pts = seg.p0[:, None, :] + s[None, :, None] * d[:, None, :]
    weights = w[None, :] * seg.length[:, None]
    owner = np.repeat(np.arange(seg.length.size), s.size)
    return QuadratureBatch(owner, pts.reshape(-1, 2), weights.ravel())


def bulk_area(topo: CutTopology, degree: int = 1) -> float:
    """Área de Ω^h."""
    rules = batch_clip_rules(topo.mesh, topo.active_bulk, topo.levelset, degree)
    return float(np.sum(rules.weights))
