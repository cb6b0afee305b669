# lib/solver.py
# -*- coding: utf-8 -*-
"""
Álgebra lineal del sistema cutDG:
  - gradiente conjugado con precondicionador de Jacobi (y respaldo LU disperso)
  - reescalado 𝒜 = D A D del bloque de superficie
  - número de condición κ(𝒜) = |λ|max / |λ|min (autovalores no nulos)
"""
from __future__ import annotations

import warnings
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from lib.errors import ConfigurationError, DegenerateMatrixError, SolverError

REL_TOL = 1e-10
ZERO_THRESHOLD = 1e-12
DENSE_LIMIT = 6000
DIRECT_LIMIT = 20000
LANCZOS_STEPS = 300
KAPPA_SENTINEL = 1e300
MAX_RESTARTS = 20
SCALING_MODES = ("symmetric", "one-sided")


class SolveResult(NamedTuple):
    coefficients: np.ndarray
    iterations: int
    relative_residual: float
    method: str


class ConditionEstimate(NamedTuple):
    kappa: float
    lambda_min: float
    lambda_max: float
    method: str


# ============================================================
# Gradiente conjugado precondicionado
# ============================================================
def _safe_inverse(vec: np.ndarray) -> np.ndarray:
    nonzero = vec != 0
    result = vec.copy()
    result[nonzero] = 1.0 / vec[nonzero]
    return result


def preconditioned_cg(matrix, rhs, rel_tol: float = REL_TOL, max_iter: Optional[int] = None,
                      x0: Optional[np.ndarray] = None, max_restarts: int = MAX_RESTARTS) -> SolveResult:
    """
    CG con Jacobi; converge cuando el residuo verdadero ‖b - Ax‖/‖b‖ <= rel_tol.
    Si el residuo actualizado cumple la tolerancia pero el verdadero no, se reinicia
    desde r = b - Ax (a lo sumo max_restarts veces). Máximo 20N iteraciones por defecto.
    """
    A = sp.csr_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = 20 * n
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return SolveResult(np.zeros(n), 0, 0.0, "cg")

    d_inv = _safe_inverse(A.diagonal().astype(float))
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    r = b - A @ x
    z = d_inv * r
    p = z.copy()
    rz = float(r @ z)
    k = 0
    restarts = 0
    target = rel_tol * bnorm
    while k < max_iter:
        if np.linalg.norm(r) <= target:
            r = b - A @ x
            if np.linalg.norm(r) <= target or restarts >= max_restarts:
                break
            restarts += 1
            z = d_inv * r
            p = z.copy()
            rz = float(r @ z)
        Ap = A @ p
        pAp = float(p @ Ap)
        if not pAp > 0.0:
            raise SolverError(f"CG interrumpido en la iteración {k}: p'Ap = {pAp:.3e} (matriz no definida positiva)")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = d_inv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        k += 1

    rel = float(np.linalg.norm(b - A @ x) / bnorm)
    if not np.all(np.isfinite(x)):
        raise SolverError("CG produjo valores no finitos")
    if rel > rel_tol:
        raise SolverError(f"CG no converge en {k} iteraciones y {restarts} reinicios "
                          f"(residuo relativo {rel:.3e} > {rel_tol:.1e})")
    return SolveResult(x, k, rel, "cg")


def direct_solve(matrix, rhs) -> SolveResult:
    """Factorización LU dispersa."""
    A = sp.csc_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = np.atleast_1d(spla.spsolve(A, b))
        except (spla.MatrixRankWarning, RuntimeError) as e:
            raise SolverError(f"Factorización directa fallida: {e}") from e
    if not np.all(np.isfinite(x)):
        raise SolverError("La factorización directa produjo valores no finitos")
    bnorm = float(np.linalg.norm(b))
    rel = float(np.linalg.norm(b - A @ x) / bnorm) if bnorm > 0.0 else 0.0
    return SolveResult(x, 0, rel, "direct")


def solve_linear(matrix, rhs, rel_tol: float = REL_TOL, method: str = "auto",
                 direct_limit: int = DIRECT_LIMIT, max_iter: Optional[int] = None) -> SolveResult:
    """
    method:
      - 'cg': sólo CG (SolverError si no converge)
      - 'direct': LU disperso
      - 'auto': CG y, si falla, LU cuando N <= direct_limit
    """
    if method == "cg":
        return preconditioned_cg(matrix, rhs, rel_tol, max_iter)
    if method == "direct":
        return direct_solve(matrix, rhs)
    if method != "auto":
        raise ConfigurationError(f"Método de resolución desconocido: {method!r}")
    try:
        return preconditioned_cg(matrix, rhs, rel_tol, max_iter)
    except SolverError:
        if np.asarray(rhs).size > direct_limit:
            raise
        return direct_solve(matrix, rhs)


def solve(system, rel_tol: float = REL_TOL, method: str = "auto",
          direct_limit: int = DIRECT_LIMIT, max_iter: Optional[int] = None) -> SolveResult:
    """Resuelve A^h u^h = l^h de un AssembledSystem."""
    return solve_linear(system.matrix, system.rhs, rel_tol, method, direct_limit, max_iter)


# ============================================================
# Reescalado
# ============================================================
def scaling_diagonal(n: int, n_bulk: int, h: float, power: float = 0.25) -> np.ndarray:
    d = np.ones(int(n))
    d[int(n_bulk):] = float(h) ** power
    return d


def rescale(matrix, n_bulk: int, h: float, mode: str = "symmetric") -> sp.csr_matrix:
    """
    - symmetric: D A D, D = 1 (volumen) y h^{1/4} (superficie)
    - one-sided: filas de superficie escaladas por h^{1/2} (no simétrica)
    """
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    if mode == "symmetric":
        D = sp.diags(scaling_diagonal(n, n_bulk, h, 0.25))
        return (D @ A @ D).tocsr()
    if mode == "one-sided":
        return (sp.diags(scaling_diagonal(n, n_bulk, h, 0.5)) @ A).tocsr()
    raise ConfigurationError(f"Modo de reescalado desconocido: {mode!r}")


def rescaled_matrix(system, mode: str = "symmetric") -> sp.csr_matrix:
    return rescale(system.matrix, system.dofmap.n_bulk, system.h, mode)


def is_symmetric(matrix, rtol: float = 1e-12) -> bool:
    A = sp.csr_matrix(matrix)
    if A.nnz == 0:
        return True
    return float(abs(A - A.T).max()) <= rtol * float(abs(A).max())


# ============================================================
# Autovalores extremos y número de condición
# ============================================================
def lanczos_extremal(operator: Callable[[np.ndarray], np.ndarray], n: int, steps: int = LANCZOS_STEPS,
                     seed: int = 0, tol: float = 1e-12) -> Tuple[float, float]:
    """
    Valores de Ritz extremos (min, max) tras 'steps' pasos de Lanczos
    con reortogonalización completa. Semilla fija: resultados reproducibles.
    """
    steps = max(1, min(int(steps), int(n)))
    rng = np.random.default_rng(seed)
    Q = np.zeros((n, steps))
    q = rng.standard_normal(n)
    Q[:, 0] = q / np.linalg.norm(q)
    alphas, betas = [], []
    for i in range(steps):
        u = np.asarray(operator(Q[:, i]), dtype=float)
        alpha = float(Q[:, i] @ u)
        alphas.append(alpha)
        r = u - alpha * Q[:, i]
        if i > 0:
            r -= betas[-1] * Q[:, i - 1]
        # reortogonalización completa
        r -= Q[:, :i + 1] @ (Q[:, :i + 1].T @ r)
        beta = float(np.linalg.norm(r))
        if i == steps - 1 or beta <= tol * max(1.0, float(np.linalg.norm(u))):
            break
        betas.append(beta)
        Q[:, i + 1] = r / beta
    T = np.diag(alphas) + np.diag(betas, k=1) + np.diag(betas, k=-1)
    theta = np.linalg.eigvalsh(T)
    return float(theta[0]), float(theta[-1])


def _from_moduli(moduli: np.ndarray, zero_threshold: float, method: str) -> ConditionEstimate:
    lmax = float(moduli.max(initial=0.0))
    if not lmax > 0.0:
        raise DegenerateMatrixError("Todos los autovalores son nulos")
    nonzero = moduli[moduli > zero_threshold * lmax]
    lmin = float(nonzero.min())
    return ConditionEstimate(lmax / lmin, lmin, lmax, method)


def _arnoldi_extremal(A: sp.csr_matrix) -> Tuple[float, float]:
    """|λ|min y |λ|max de una matriz no simétrica con ARPACK (shift-invert en 0 para el mínimo)."""
    try:
        hi = spla.eigs(A, k=1, which="LM", return_eigenvectors=False)
        lo = spla.eigs(A.tocsc(), k=1, sigma=0.0, which="LM", return_eigenvectors=False)
    except (RuntimeError, spla.ArpackNoConvergence) as e:
        raise DegenerateMatrixError(f"ARPACK no converge: {e}") from e
    return float(np.abs(lo).min()), float(np.abs(hi).max())


def condition_number(matrix, zero_threshold: float = ZERO_THRESHOLD, dense_limit: int = DENSE_LIMIT,
                     method: str = "auto", steps: int = LANCZOS_STEPS) -> ConditionEstimate:
    """
    κ = |λ|max / |λ|min, excluyendo |λ| <= zero_threshold·|λ|max.
      - dense: eigvalsh (o eigvals si la matriz no es simétrica)
      - iterative: Lanczos sobre A (λmax) y sobre A⁻¹ vía LU (λmin);
        ARPACK si la matriz no es simétrica
    """
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    if n == 0:
        raise DegenerateMatrixError("Matriz vacía")
    if method == "auto":
        method = "dense" if n <= dense_limit else "iterative"

    if method == "dense":
        M = A.toarray()
        if is_symmetric(A):
            lam = sla.eigvalsh(M)
        else:
            lam = sla.eigvals(M)
        return _from_moduli(np.abs(lam), zero_threshold, "dense")

    if method != "iterative":
        raise ConfigurationError(f"Método de condición desconocido: {method!r}")
    if not is_symmetric(A):
        lmin, lmax = _arnoldi_extremal(A)
        if not lmax > 0.0 or lmin <= zero_threshold * lmax:
            raise DegenerateMatrixError(f"λmin = {lmin:.3e} por debajo del umbral de nulidad")
        return ConditionEstimate(lmax / lmin, lmin, lmax, "iterative")
    lo, hi = lanczos_extremal(lambda x: A @ x, n, steps)
    lmax = max(abs(lo), abs(hi))
    if not lmax > 0.0:
        raise DegenerateMatrixError("Todos los autovalores son nulos")
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as e:
        raise DegenerateMatrixError(f"Factorización singular: {e}") from e
    ilo, ihi = lanczos_extremal(lu.solve, n, steps)
    inv_max = max(abs(ilo), abs(ihi))
    if not np.isfinite(inv_max) or inv_max == 0.0:
        raise DegenerateMatrixError("Estimación de λmin no finita")
    lmin = 1.0 / inv_max
    if lmin <= zero_threshold * lmax:
        raise DegenerateMatrixError(f"λmin = {lmin:.3e} por debajo del umbral de nulidad")
    return ConditionEstimate(lmax / lmin, lmin, lmax, "iterative")
