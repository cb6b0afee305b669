# lib/errors.py
# -*- coding: utf-8 -*-
from __future__ import annotations


class CutDGError(RuntimeError):
    """Error base de la librería."""


class MeshError(CutDGError):
    """Malla de fondo inválida (n < 1, caja invertida, cara no-manifold...)."""


class GeometryError(CutDGError):
    """Geometría de corte degenerada o fuera del entorno tubular."""


class ConfigurationError(CutDGError):
    """Parámetros o configuración no válidos (incluye malla activa vacía)."""


class AssemblyError(CutDGError):
    pass


class QuadratureError(CutDGError, ValueError):
    pass


class SolverError(CutDGError):
    """El solver no converge o devuelve valores no finitos."""


class DegenerateMatrixError(SolverError):
    """Todos los autovalores por debajo del umbral de cero."""


class EOCError(CutDGError, ValueError):
    pass
