"""
sparse_linalg.py — Sparse/dense linear algebra shared by every solver layer.

Matrices are canonical scipy CSR (sorted, deduplicated columns, finite values).
SPD systems are solved either by Cholesky (dense for small systems, sparse LU
otherwise) or by Jacobi-preconditioned conjugate gradients.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
SYMMETRY_TOL = 1e-12


# ─── Errors ─────────────────────────────────────────────────────────────

class SolverError(Exception):
    """Base class for linear algebra failures."""


class DimensionError(SolverError):
    """Operand shapes do not match."""


class NotSPDError(SolverError):
    """Matrix is not symmetric positive definite."""


class ConvergenceError(SolverError):
    """Iterative solver stopped before reaching the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


# ─── Storage ────────────────────────────────────────────────────────────

def as_csr(matrix) -> sp.csr_matrix:
    """
    Convert anything matrix-like into canonical CSR.

    Duplicates are summed, column indices sorted within each row and explicit
    zeros kept (so sparsity patterns stay stable across assemblies).

    Raises:
        SolverError: if a stored value is not finite.
    """
    if sp.issparse(matrix):
        A = sp.csr_matrix(matrix, dtype=float, copy=True)
    else:
        A = sp.csr_matrix(np.atleast_2d(np.asarray(matrix, dtype=float)))
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise SolverError("Matrix has non-finite entries")
    return A


def identity(n: int) -> sp.csr_matrix:
    return as_csr(sp.identity(n, format="csr"))


def transpose(A) -> sp.csr_matrix:
    return as_csr(sp.csr_matrix(A).T)


def spmv(A, x) -> np.ndarray:
    """Row-wise product y = A x."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise DimensionError(f"Cannot multiply {A.shape} matrix with vector of shape {x.shape}")
    return np.asarray(A @ x, dtype=float)


def symmetry_defect(A) -> float:
    """max|A - Aᵀ| relative to max|A|."""
    A = sp.csr_matrix(A)
    scale = abs(A).max() if A.nnz else 0.0
    if scale == 0.0:
        return 0.0
    return abs(A - A.T).max() / scale


# ─── SPD solves ─────────────────────────────────────────────────────────

@dataclass
class CgResult:
    """Outcome of a conjugate gradient run."""
    x: np.ndarray
    iterations: int
    residual: float          # relative, ‖b - Ax‖ / ‖b‖
    converged: bool


def conjugate_gradient(
    A,
    b,
    tol: float = 1e-12,
    max_iter: int | None = None,
    preconditioner: str = "jacobi",
    strict: bool = True,
    x0=None,
) -> CgResult:
    """
    Preconditioned conjugate gradients for an SPD matrix.

    Args:
        A: SPD matrix (sparse or dense)
        b: right hand side
        tol: relative residual target ‖b - Ax‖ ≤ tol·‖b‖
        max_iter: iteration cap, default 10·n
        preconditioner: "jacobi" or "none"
        strict: raise ConvergenceError instead of returning an unconverged result
        x0: initial guess, default zero

    Returns:
        CgResult with the final iterate

    Raises:
        NotSPDError: on non-positive diagonal or curvature
        ConvergenceError: when strict and the tolerance is not reached
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"System matrix {A.shape} does not match rhs of length {n}")
    max_iter = max_iter if max_iter is not None else 10 * max(n, 1)

    if preconditioner == "jacobi":
        diag = np.asarray(A.diagonal(), dtype=float)
        if np.any(diag <= 0.0):
            raise NotSPDError("Non-positive diagonal entry; matrix is not SPD")
        inv_diag = 1.0 / diag
    elif preconditioner == "none":
        inv_diag = np.ones(n)
    else:
        raise ValueError(f"Unknown preconditioner: {preconditioner}")

    b_norm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if b_norm == 0.0:
        return CgResult(x=np.zeros(n), iterations=0, residual=0.0, converged=True)

    r = b - A @ x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    residual = np.linalg.norm(r) / b_norm
    iterations = 0

    while residual > tol and iterations < max_iter:
        Ap = A @ p
        curvature = p @ Ap
        if curvature <= 0.0:
            raise NotSPDError(f"Non-positive curvature {curvature:.3e} at iteration {iterations}")
        step = rz / curvature
        x += step * p
        r -= step * Ap
        z = inv_diag * r
        rz_next = r @ z
        p = z + (rz_next / rz) * p
        rz = rz_next
        iterations += 1
        residual = np.linalg.norm(r) / b_norm

    converged = residual <= tol
    logger.debug(f"CG ({preconditioner}) n={n}: {iterations} iterations, residual {residual:.3e}")
    if not converged:
        message = f"CG did not reach tol={tol:.1e} in {iterations} iterations (residual {residual:.3e})"
        if strict:
            raise ConvergenceError(message, residual=residual, iterations=iterations)
        logger.warning(message)
    return CgResult(x=x, iterations=iterations, residual=residual, converged=converged)


class SpdFactor:
    """
    Reusable factorization of an SPD matrix.

    Dense Cholesky up to DENSE_LIMIT unknowns, sparse LU beyond that.
    """

    def __init__(self, A, check_symmetry: bool = True):
        A = as_csr(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"Cannot factor non-square matrix {A.shape}")
        if check_symmetry:
            defect = symmetry_defect(A)
            if defect > SYMMETRY_TOL:
                raise NotSPDError(f"Matrix asymmetry {defect:.3e} exceeds {SYMMETRY_TOL:.0e}")
        self.n = n
        self.dense = n <= DENSE_LIMIT
        if n == 0:
            self._factor = None
        elif self.dense:
            try:
                self._factor = scipy.linalg.cho_factor(A.toarray(), lower=True)
            except np.linalg.LinAlgError as e:
                raise NotSPDError(f"Cholesky factorization failed: {e}") from e
        else:
            diag = A.diagonal()
            if np.any(diag <= 0.0):
                raise NotSPDError("Non-positive diagonal entry; matrix is not SPD")
            try:
                self._factor = spla.splu(A.tocsc())
            except RuntimeError as e:
                raise NotSPDError(f"Sparse factorization failed: {e}") from e

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise DimensionError(f"Right hand side of length {b.shape[0]} for {self.n} unknowns")
        if self.n == 0:
            return np.zeros_like(b)
        if self.dense:
            return scipy.linalg.cho_solve(self._factor, b)
        return self._factor.solve(b)


def solve_spd(
    A,
    b,
    tol: float = 1e-12,
    max_iter: int | None = None,
    method: str = "direct",
) -> np.ndarray:
    """
    Solve the SPD system A x = b.

    Args:
        A: SPD matrix
        b: right hand side
        tol: relative residual target for the CG path
        max_iter: CG iteration cap
        method: "direct" (Cholesky / sparse LU) or "cg" (Jacobi PCG)

    Returns:
        Solution vector
    """
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise DimensionError(f"System matrix {A.shape} does not match rhs of length {b.shape[0]}")
    if method == "direct":
        x = SpdFactor(A).solve(b)
        logger.debug(f"Direct SPD solve n={A.shape[0]}")
        return x
    if method == "cg":
        defect = symmetry_defect(A)
        if defect > SYMMETRY_TOL:
            raise NotSPDError(f"Matrix asymmetry {defect:.3e} exceeds {SYMMETRY_TOL:.0e}")
        return conjugate_gradient(A, b, tol=tol, max_iter=max_iter).x
    raise ValueError(f"Unknown solver method: {method}")


# ─── Weighted norms ─────────────────────────────────────────────────────

def weighted_norm_sq(W, v) -> float:
    """vᵀ W v."""
    v = np.asarray(v, dtype=float)
    return float(v @ spmv(W, v))


def weighted_inv_norm_sq(W, v, tol: float = 1e-12, factor: SpdFactor | None = None) -> float:
    """vᵀ W⁻¹ v, using an existing factorization when given."""
    v = np.asarray(v, dtype=float)
    w = factor.solve(v) if factor is not None else solve_spd(W, v, tol=tol)
    return max(float(v @ w), 0.0)
