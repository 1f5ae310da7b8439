"""Small shared linear-algebra helpers."""
from __future__ import annotations

from contextlib import nullcontext

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import FactorizationError

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

MAX_JITTER_RETRIES = 6


def serial_blas():
    """Pin BLAS to one thread; parallel kernels lose badly on the small
    factorizations that dominate these fits."""
    if threadpool_limits is None:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=1)


def chol_jitter(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, retrying with bounded diagonal jitter.

    On failure adds ``1e-8 * mean(diag(A))`` to the diagonal and retries,
    doubling the jitter up to 6 times before raising.
    """
    try:
        return cholesky(A, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-8 * float(np.mean(np.diag(A)))
    if jitter <= 0.0:
        jitter = 1e-8
    for _ in range(MAX_JITTER_RETRIES):
        try:
            L = cholesky(A + jitter * np.eye(A.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise FactorizationError(
        f"Cholesky failed after {MAX_JITTER_RETRIES} jitter retries (last jitter {jitter:.3e})"
    )


def chol_solve_vec(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` given the lower Cholesky factor of ``A``."""
    return cho_solve((L, True), b)


def chol_logdet(L: np.ndarray) -> float:
    """log-determinant of ``A`` from its lower Cholesky factor."""
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def chol_inverse(L: np.ndarray) -> np.ndarray:
    """Explicit inverse of ``A`` from its lower Cholesky factor."""
    Linv = solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return Linv.T @ Linv


def quad_diag(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Diagonal of ``B^T A^{-1} B`` given the lower Cholesky factor of ``A``."""
    t = solve_triangular(L, B, lower=True)
    return np.sum(t * t, axis=0)
