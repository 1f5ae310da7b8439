"""Stationary correlation families and their lengthscale derivatives.

Conventions (anisotropic, one lengthscale per input dimension):

* squared exponential: ``c(x, x') = exp(-sum_k (x_k - x'_k)^2 / theta_k)``,
  i.e. the lengthscale divides the squared distance;
* Matern 5/2: product over dimensions of ``(1 + sqrt(5) r + 5 r^2 / 3)
  exp(-sqrt(5) r)`` with ``r = |x_k - x'_k| / theta_k``.

Both families return correlations in (0, 1] with unit diagonal. Everything
here is a pure function of its arguments.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ValidationError

SQRT5 = np.sqrt(5.0)


class Family(str, Enum):
    SQUARED_EXPONENTIAL = "sqexp"
    MATERN52 = "matern52"


@dataclass(frozen=True)
class KernelSpec:
    """Correlation family plus one positive lengthscale per input dimension."""

    family: Family
    lengthscales: np.ndarray = field()

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1:
            raise ValidationError("lengthscales must be a 1-d vector")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0.0):
            raise ValidationError("lengthscales must be finite and strictly positive")
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "lengthscales", ls)

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]


def _check_inputs(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.dim:
        raise ValidationError(
            f"input dimension {X.shape[1]} does not match lengthscale vector of length {spec.dim}"
        )
    return X


def _matern52_term(r: np.ndarray) -> np.ndarray:
    return (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)


def corr_matrix(spec: KernelSpec, X1: np.ndarray, X2: np.ndarray | None = None) -> np.ndarray:
    """Cross-correlation matrix with entries ``c(X1_i, X2_j)``.

    With ``X2`` omitted the matrix is the symmetric unit-diagonal
    correlation of ``X1`` against itself.
    """
    X1 = _check_inputs(spec, X1)
    X2 = X1 if X2 is None else _check_inputs(spec, X2)
    theta = spec.lengthscales
    if spec.family is Family.SQUARED_EXPONENTIAL:
        d2 = np.zeros((X1.shape[0], X2.shape[0]))
        for k in range(spec.dim):
            diff = X1[:, k, None] - X2[None, :, k]
            d2 += diff * diff / theta[k]
        return np.exp(-d2)
    out = np.ones((X1.shape[0], X2.shape[0]))
    for k in range(spec.dim):
        r = np.abs(X1[:, k, None] - X2[None, :, k]) / theta[k]
        out *= _matern52_term(r)
    return out


def corr(spec: KernelSpec, x: np.ndarray, xp: np.ndarray) -> float:
    """Correlation between two points; equals 1 when ``x == xp``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != (spec.dim,) or xp.shape != (spec.dim,):
        raise ValidationError("point dimension does not match kernel spec")
    return float(corr_matrix(spec, x[None, :], xp[None, :])[0, 0])


def corr_matrix_dtheta(spec: KernelSpec, X: np.ndarray, k: int) -> np.ndarray:
    """Elementwise derivative of ``corr_matrix(X, X)`` w.r.t. lengthscale ``k``.

    Closed forms: squared exponential ``c * (x_k - x'_k)^2 / theta_k^2``;
    Matern 5/2 uses the product rule over dimensions. Diagonal entries are
    zero since the correlation is pinned at 1 there.
    """
    X = _check_inputs(spec, X)
    if not 0 <= k < spec.dim:
        raise ValidationError(f"dimension index {k} out of range for d={spec.dim}")
    theta = spec.lengthscales
    if spec.family is Family.SQUARED_EXPONENTIAL:
        diff = X[:, k, None] - X[None, :, k]
        return corr_matrix(spec, X) * diff * diff / theta[k] ** 2
    # product over j != k of the per-dimension terms, times d/dtheta_k of term k
    out = np.ones((X.shape[0], X.shape[0]))
    for j in range(spec.dim):
        r = np.abs(X[:, j, None] - X[None, :, j]) / theta[j]
        if j == k:
            out *= (5.0 / 3.0) * (r * r / theta[j]) * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)
        else:
            out *= _matern52_term(r)
    return out
