# lib/spaces.py
# -*- coding: utf-8 -*-
from __future__ import annotations

from typing import NamedTuple, Tuple

import numpy as np

from lib.levelset import CutTopology
from lib.mesh import BackgroundMesh, element_gradients


# ============================================================
# Espacios P1 rotos
# ============================================================
class BrokenSpace(NamedTuple):
    """P1 discontinuo sobre una lista de elementos activos.

    dofs[r] son los 3 índices globales del elemento elements[r] (offset + 3r + i);
    position[T] = r, o -1 si T no es activo.
    """
    elements: np.ndarray
    offset: int
    dofs: np.ndarray
    position: np.ndarray

    @property
    def dimension(self) -> int:
        return 3 * int(self.elements.size)


class CombinedDofMap(NamedTuple):
    bulk: BrokenSpace
    surface: BrokenSpace
    n_bulk: int
    n_surface: int

    @property
    def n(self) -> int:
        return self.n_bulk + self.n_surface


def broken_space(mesh: BackgroundMesh, elements, offset: int = 0) -> BrokenSpace:
    elements = np.asarray(elements, dtype=np.int64)
    dofs = offset + 3 * np.arange(elements.size)[:, None] + np.arange(3)[None, :]
    position = np.full(mesh.n_elements, -1, dtype=np.int64)
    position[elements] = np.arange(elements.size)
    return BrokenSpace(elements, int(offset), dofs, position)


def combined_dof_map(topo: CutTopology) -> CombinedDofMap:
    """V^h = V_Ω^h × V_Γ^h; el bloque de superficie sigue al de volumen."""
    bulk = broken_space(topo.mesh, topo.active_bulk, 0)
    surface = broken_space(topo.mesh, topo.active_surface, bulk.dimension)
    return CombinedDofMap(bulk, surface, bulk.dimension, surface.dimension)


# ============================================================
# Evaluación de la base
# ============================================================
def basis_values(mesh: BackgroundMesh, elements, points, gradients=None) -> np.ndarray:
    """Coordenadas baricéntricas λ_i(x) de cada punto en su elemento, forma (M,3)."""
    elements = np.asarray(elements, dtype=np.int64)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if gradients is None:
        gradients = element_gradients(mesh)
    G = gradients[elements]
    x0 = mesh.vertices[mesh.elements[elements, 0]]
    lam = np.einsum("mid,md->mi", G, points - x0)
    lam[:, 0] += 1.0
    return lam


def evaluate_basis(mesh: BackgroundMesh, element: int, point) -> Tuple[np.ndarray, np.ndarray]:
    """Valores (3,) y gradientes constantes (3,2) de las funciones sombrero del elemento."""
    X = mesh.vertices[mesh.elements[int(element)]]
    d1 = X[1] - X[0]
    d2 = X[2] - X[0]
    det = d1[0] * d2[1] - d1[1] * d2[0]
    grads = np.array([
        [X[1, 1] - X[2, 1], X[2, 0] - X[1, 0]],
        [X[2, 1] - X[0, 1], X[0, 0] - X[2, 0]],
        [X[0, 1] - X[1, 1], X[1, 0] - X[0, 0]],
    ]) / det
    values = grads @ (np.asarray(point, dtype=float) - X[0])
    values[0] += 1.0
    return values, grads


# ============================================================
# Interpolación nodal
# ============================================================
def interpolate_nodal(mesh: BackgroundMesh, space: BrokenSpace, f) -> np.ndarray:
    """Coeficientes del bloque (longitud 3k): f en los vértices de cada elemento."""
    if space.elements.size == 0:
        return np.zeros(0)
    X = mesh.vertices[mesh.elements[space.elements]].reshape(-1, 2)
    return np.asarray(f(X), dtype=float).reshape(-1).copy()


def interpolate_pair(mesh: BackgroundMesh, dofmap: CombinedDofMap, f_bulk, f_surf) -> np.ndarray:
    """Vector global de longitud N con ambos bloques interpolados."""
    out = np.zeros(dofmap.n)
    if f_bulk is not None:
        out[:dofmap.n_bulk] = interpolate_nodal(mesh, dofmap.bulk, f_bulk)
    if f_surf is not None:
        out[dofmap.n_bulk:] = interpolate_nodal(mesh, dofmap.surface, f_surf)
    return out


def write_coefficients_txt(coeffs, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for v in np.asarray(coeffs, dtype=float):
            f.write(f"{v:.17g}\n")
