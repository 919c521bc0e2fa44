"""Sparse storage and solvers for the non-symmetric dG system."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

METHODS = ("direct_lu", "gmres")


class SolverError(RuntimeError):
    """Raised on singular factorizations, non-convergence or a failed residual check."""


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def matvec(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape}, vector {x.shape}")
    return np.asarray(A @ x)


def relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(matvec(A, x) - b)
    return float(r / nb) if nb > 0 else float(r)


def solve(A, b, method: str = "direct_lu", tol: float = 1e-10, restart: int = 200, maxiter: int = 10):
    """Solve ``A x = b`` and check ``||Ax - b|| / ||b|| <= tol``.

    ``direct_lu`` is a sparse LU with partial pivoting; ``gmres`` uses a
    Jacobi preconditioner and at most ``maxiter`` restarts of length ``restart``.
    """
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if A.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape}, vector {b.shape}")
    if not np.any(b):
        return np.zeros_like(b)
    if method == "direct_lu":
        try:
            lu = spla.splu(A.tocsc(), permc_spec="COLAMD", diag_pivot_thresh=1.0)
        except RuntimeError as exc:
            raise SolverError(f"singular factorization: {exc}") from exc
        x = lu.solve(b)
    elif method == "gmres":
        diag = A.diagonal()
        if np.any(diag == 0):
            raise SolverError("zero diagonal entry, Jacobi preconditioner undefined")
        M = sp.diags(1.0 / diag)
        # iterate a bit below the target so the true residual check passes
        x, info = spla.gmres(A, b, M=M, rtol=0.1 * tol, atol=0.0, restart=restart, maxiter=maxiter)
        if info != 0 and relative_residual(A, x, b) > tol:
            raise SolverError(f"gmres did not converge after {maxiter} restarts")
    else:
        raise ValueError(f"unknown solver method {method!r}; expected one of {METHODS}")
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution")
    res = relative_residual(A, x, b)
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds tolerance {tol:.1e}")
    return x
