"""Scoring rules for predictive evaluation.

``score`` is the Gaussian proper scoring rule ``-(y - m)^2 / v - log v``
(higher is better); ``nlpd`` the negative log predictive density (lower is
better). The two are affinely related: ``nlpd = -score/2 + log(2 pi)/2``.
``nmse`` normalizes the squared error by the population variance of the
held-out responses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class EvalSet:
    """Held-out responses with predictive means and total variances."""

    y: np.ndarray
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        mean = np.asarray(self.mean, dtype=float).ravel()
        var = np.asarray(self.var, dtype=float).ravel()
        if not (y.shape == mean.shape == var.shape):
            raise ValidationError("y, mean and var must have equal lengths")
        if y.size == 0:
            raise ValidationError("empty evaluation set")
        if np.any(var <= 0):
            raise ValidationError("predictive variances must be strictly positive")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)


def score(e: EvalSet) -> float:
    """Mean proper score; higher is better."""
    return float(np.mean(-((e.y - e.mean) ** 2) / e.var - np.log(e.var)))


def nmse(e: EvalSet) -> float:
    """Mean squared error over the population variance of ``y``."""
    vy = float(np.mean((e.y - e.y.mean()) ** 2))
    if vy == 0.0:
        raise ValidationError("nmse undefined for constant held-out responses")
    return float(np.mean((e.y - e.mean) ** 2)) / vy


def nlpd(e: EvalSet) -> float:
    """Mean negative log predictive density; lower is better."""
    return float(np.mean(0.5 * np.log(2.0 * np.pi * e.var) + (e.y - e.mean) ** 2 / (2.0 * e.var)))


def score_vs_moments(ref_mean, ref_var, mean, var) -> float:
    """Expected proper score against a reference distribution known only
    through its per-location mean and variance:
    ``E[-(Y - m)^2 / v - log v] = -((mu - m)^2 + sigma^2)/v - log v``."""
    ref_mean = np.asarray(ref_mean, dtype=float).ravel()
    ref_var = np.asarray(ref_var, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    var = np.asarray(var, dtype=float).ravel()
    if not (ref_mean.shape == ref_var.shape == mean.shape == var.shape):
        raise ValidationError("mismatched lengths")
    if np.any(var <= 0):
        raise ValidationError("predictive variances must be strictly positive")
    if np.any(ref_var < 0):
        raise ValidationError("reference variances must be nonnegative")
    return float(np.mean(-((ref_mean - mean) ** 2 + ref_var) / var - np.log(var)))
