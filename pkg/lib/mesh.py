# lib/mesh.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import math
from typing import NamedTuple, Optional, Tuple

import numpy as np

from lib.errors import MeshError


# ============================================================
# Tipos
# ============================================================
class FaceSet(NamedTuple):
    """Conectividad de aristas/caras de la malla.

    - edges: (nE,2) pares de vértices ordenados (menor índice primero)
    - edge_elements: (nE,2) elementos incidentes; -1 si es arista de borde
    - element_edges: (ne,3) arista global de la arista local k = (v_k, v_{k+1})
    - interior: (nF,) índice de arista de cada cara interior
    - plus/minus: elemento '+' (índice menor) y '-' de cada cara interior
    - normal: (nF,2) normal unitaria n_F, de '+' hacia '-'
    """
    edges: np.ndarray
    edge_elements: np.ndarray
    element_edges: np.ndarray
    interior: np.ndarray
    vertices: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    normal: np.ndarray
    length: np.ndarray
    edge_to_face: np.ndarray


class BackgroundMesh(NamedTuple):
    vertices: np.ndarray
    elements: np.ndarray
    box: Tuple[float, float, float, float]
    h: float
    cell: Tuple[float, float]
    faces: Optional[FaceSet] = None

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @property
    def interior_faces(self) -> FaceSet:
        return self.faces


# ============================================================
# Geometría elemental
# ============================================================
def element_areas(mesh: BackgroundMesh) -> np.ndarray:
    """Área con signo de cada triángulo (positiva si está orientado CCW)."""
    X = mesh.vertices[mesh.elements]
    d1 = X[:, 1] - X[:, 0]
    d2 = X[:, 2] - X[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def element_gradients(mesh: BackgroundMesh) -> np.ndarray:
    """Gradientes (constantes) de las coordenadas baricéntricas, forma (ne,3,2)."""
    X = mesh.vertices[mesh.elements]
    x0, x1, x2 = X[:, 0], X[:, 1], X[:, 2]
    two_area = 2.0 * element_areas(mesh)
    G = np.empty((mesh.n_elements, 3, 2))
    G[:, 0, 0] = x1[:, 1] - x2[:, 1]
    G[:, 0, 1] = x2[:, 0] - x1[:, 0]
    G[:, 1, 0] = x2[:, 1] - x0[:, 1]
    G[:, 1, 1] = x0[:, 0] - x2[:, 0]
    G[:, 2, 0] = x0[:, 1] - x1[:, 1]
    G[:, 2, 1] = x1[:, 0] - x0[:, 0]
    return G / two_area[:, None, None]


def edge_lengths(mesh: BackgroundMesh) -> np.ndarray:
    E = mesh.faces.edges
    return np.linalg.norm(mesh.vertices[E[:, 1]] - mesh.vertices[E[:, 0]], axis=1)


# ============================================================
# Conectividad de caras
# ============================================================
_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


def face_connectivity(mesh: BackgroundMesh) -> FaceSet:
    """
    Calcula aristas, caras interiores y normales.
    Reglas:
      - cara interior = arista compartida por exactamente 2 elementos
      - '+' es el elemento de índice menor (orientación determinista)
      - n_F apunta de '+' hacia '-'
    """
    elements = np.asarray(mesh.elements)
    V = np.asarray(mesh.vertices, dtype=float)
    ne = elements.shape[0]

    pairs = np.sort(elements[:, _LOCAL_EDGES], axis=2).reshape(-1, 2)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    inverse = np.asarray(inverse).reshape(-1)
    if counts.max(initial=0) > 2:
        bad = edges[np.argmax(counts)]
        raise MeshError(f"Cara no-manifold: arista {tuple(int(v) for v in bad)} con {int(counts.max())} elementos")

    n_edges = edges.shape[0]
    occ_elem = np.repeat(np.arange(ne), 3)
    occ_local = np.tile(np.arange(3), ne)
    order = np.argsort(inverse, kind="stable")
    starts = np.searchsorted(inverse[order], np.arange(n_edges))

    edge_elements = np.full((n_edges, 2), -1, dtype=np.int64)
    edge_elements[:, 0] = occ_elem[order[starts]]
    two = counts == 2
    edge_elements[two, 1] = occ_elem[order[starts[two] + 1]]

    interior = np.nonzero(two)[0]
    plus = edge_elements[interior, 0]
    minus = edge_elements[interior, 1]
    fverts = edges[interior]

    a = V[fverts[:, 0]]
    b = V[fverts[:, 1]]
    t = b - a
    length = np.linalg.norm(t, axis=1)
    normal = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]

    # vértice opuesto en el elemento '+'
    k_plus = occ_local[order[starts[interior]]]
    opposite = elements[plus, (k_plus + 2) % 3]
    flip = np.einsum("ij,ij->i", normal, V[opposite] - a) > 0.0
    normal[flip] *= -1.0

    edge_to_face = np.full(n_edges, -1, dtype=np.int64)
    edge_to_face[interior] = np.arange(interior.size)

    return FaceSet(
        edges=edges,
        edge_elements=edge_elements,
        element_edges=inverse.reshape(ne, 3),
        interior=interior,
        vertices=fverts,
        plus=plus,
        minus=minus,
        normal=normal,
        length=length,
        edge_to_face=edge_to_face,
    )


# ============================================================
# Construcción y refinamiento
# ============================================================
def mesh_from_arrays(vertices, elements, box=None, h: Optional[float] = None,
                     cell: Optional[Tuple[float, float]] = None) -> BackgroundMesh:
    """Malla a partir de arrays crudos; valida orientación y conformidad."""
    V = np.asarray(vertices, dtype=float)
    E = np.asarray(elements, dtype=np.int64)
    if V.ndim != 2 or V.shape[1] != 2 or E.ndim != 2 or E.shape[1] != 3:
        raise MeshError("Se esperan vertices (n,2) y elements (m,3)")
    if E.size and (E.min() < 0 or E.max() >= V.shape[0]):
        raise MeshError("Índice de vértice fuera de rango")
    if box is None:
        box = (float(V[:, 0].min()), float(V[:, 1].min()), float(V[:, 0].max()), float(V[:, 1].max()))
    mesh = BackgroundMesh(V, E, tuple(float(b) for b in box), 0.0, cell or (0.0, 0.0))
    areas = element_areas(mesh)
    if np.any(areas <= 0.0):
        raise MeshError(f"{int(np.sum(areas <= 0.0))} elementos con área no positiva")
    mesh = mesh._replace(faces=face_connectivity(mesh))
    if h is None:
        h = float(edge_lengths(mesh).max())
    return mesh._replace(h=float(h))


def build_structured_mesh(box, n: int) -> BackgroundMesh:
    """
    Malla estructurada n×n de la caja (xmin, ymin, xmax, ymax).
    Cada celda se parte en dos triángulos por la misma diagonal (de (1,0) a (0,1)).
    h = diagonal de una celda.
    """
    try:
        xmin, ymin, xmax, ymax = (float(v) for v in box)
    except Exception as e:
        raise MeshError(f"Caja no válida: {box!r}") from e
    if int(n) != n or n < 1:
        raise MeshError(f"Se necesita n >= 1 (recibido {n})")
    n = int(n)
    if not (xmax > xmin and ymax > ymin):
        raise MeshError(f"Caja degenerada o invertida: {box!r}")

    xs = np.linspace(xmin, xmax, n + 1)
    ys = np.linspace(ymin, ymax, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    I, J = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (J * (n + 1) + I).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    elements[0::2] = np.column_stack([v00, v10, v01])
    elements[1::2] = np.column_stack([v10, v11, v01])

    dx = (xmax - xmin) / n
    dy = (ymax - ymin) / n
    mesh = BackgroundMesh(vertices, elements, (xmin, ymin, xmax, ymax), math.hypot(dx, dy), (dx, dy))
    return mesh._replace(faces=face_connectivity(mesh))


def refine_uniform(mesh: BackgroundMesh) -> BackgroundMesh:
    """Refinamiento rojo: cada triángulo en 4 hijos semejantes; los vértices padre se conservan."""
    V = mesh.vertices
    faces = mesh.faces if mesh.faces is not None else face_connectivity(mesh)
    nv = V.shape[0]
    E = faces.edges
    mids = 0.5 * (V[E[:, 0]] + V[E[:, 1]])
    new_vertices = np.vstack([V, mids])

    m = faces.element_edges + nv
    v0, v1, v2 = mesh.elements[:, 0], mesh.elements[:, 1], mesh.elements[:, 2]
    m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack([
        np.column_stack([v0, m01, m20]),
        np.column_stack([m01, v1, m12]),
        np.column_stack([m20, m12, v2]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)

    child = BackgroundMesh(new_vertices, children, mesh.box, 0.5 * mesh.h,
                           (0.5 * mesh.cell[0], 0.5 * mesh.cell[1]))
    return child._replace(faces=face_connectivity(child))


def build_level(box, n0: int, level: int) -> BackgroundMesh:
    """Malla estructurada de partida refinada 'level' veces."""
    mesh = build_structured_mesh(box, n0)
    for _ in range(int(level)):
        mesh = refine_uniform(mesh)
    return mesh


def quality_ratio(mesh: BackgroundMesh) -> float:
    """Cociente arista más larga / más corta (cuasi-uniformidad)."""
    L = edge_lengths(mesh)
    return float(L.max() / L.min())


# ============================================================
# Volcado de texto
# ============================================================
def write_mesh_txt(mesh: BackgroundMesh, path: str) -> None:
    """Líneas 'v x y' y 'e i j k'."""
    with open(path, "w", encoding="utf-8") as f:
        for x, y in mesh.vertices:
            f.write(f"v {x:.17g} {y:.17g}\n")
        for i, j, k in mesh.elements:
            f.write(f"e {i} {j} {k}\n")
