"""Bound-constrained limited-memory quasi-Newton minimizer.

A thin, contract-stable front end over scipy's L-BFGS-B (memory depth 5).
Iterates respect the box exactly, accepted objective values are
non-increasing, and termination is governed by a relative-decrease
threshold, a projected-gradient threshold, or the iteration cap. The
routine is deterministic: restarts, if wanted, are the caller's policy.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace as _replace
from enum import Enum
from typing import Callable

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import ValidationError

MEMORY_DEPTH = 5


class OptStatus(Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    LINE_SEARCH_FAIL = "LineSearchFail"


@dataclass
class OptProblem:
    dimension: int
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    max_iter: int = 100
    tol_f: float = 1e-8
    tol_g: float = 1e-5

    def __post_init__(self):
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.dimension,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.dimension,)).copy()
        if np.any(self.lower >= self.upper):
            raise ValidationError("lower bounds must be strictly below upper bounds")
        if self.tol_f <= 0 or self.tol_g <= 0:
            raise ValidationError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be positive")


@dataclass
class OptResult:
    x_opt: np.ndarray
    f_opt: float
    iterations: int
    status: OptStatus
    grad_norm: float
    message: str = field(default="")


def projected_gradient(x, g, lower, upper):
    """Gradient of the box-projected descent direction, ``x - P(x - g)``."""
    return x - np.clip(x - g, lower, upper)


def minimize_with_restarts(problem: OptProblem, x0: np.ndarray) -> OptResult:
    """Deterministic continuation: re-enter ``minimize`` at the stopping
    point until the iteration budget is spent or a restart cannot improve.

    Resetting the quasi-Newton memory rescues runs that stall in a line
    search long before the budget (common when parameter blocks live on
    very different curvature scales). Total iterations never exceed
    ``problem.max_iter``, so a truncated fit stays truncated.
    """
    budget = problem.max_iter
    x = np.asarray(x0, dtype=float)
    last_f = np.inf
    total_iter = 0
    res = None
    while budget > 0:
        seg = _replace(problem, max_iter=budget)
        res = minimize(seg, x)
        total_iter += max(res.iterations, 1)
        budget = problem.max_iter - total_iter
        x = res.x_opt
        improved = last_f - res.f_opt > 1e-9 * max(1.0, abs(res.f_opt))
        last_f = res.f_opt
        if not improved:
            break
        if res.status is OptStatus.CONVERGED and res.grad_norm <= problem.tol_g:
            break
    res.iterations = total_iter
    return res


def minimize(problem: OptProblem, x0: np.ndarray) -> OptResult:
    """Minimize within the box from ``x0`` (projected into the box if needed)."""
    x0 = np.clip(np.asarray(x0, dtype=float).ravel(), problem.lower, problem.upper)
    if x0.shape != (problem.dimension,):
        raise ValidationError(f"x0 has length {x0.shape[0]}, expected {problem.dimension}")
    f0 = problem.objective(x0)
    g0 = np.asarray(problem.gradient(x0), dtype=float)
    if not np.isfinite(f0) or not np.all(np.isfinite(g0)):
        raise ValidationError("objective or gradient is non-finite at the starting point")

    res = _scipy_minimize(
        problem.objective,
        x0,
        jac=problem.gradient,
        method="L-BFGS-B",
        bounds=list(zip(problem.lower, problem.upper)),
        options=dict(
            maxiter=problem.max_iter,
            maxcor=MEMORY_DEPTH,
            ftol=problem.tol_f,  # relative decrease threshold
            gtol=problem.tol_g,
            maxls=40,
        ),
    )
    x = np.clip(np.asarray(res.x, dtype=float), problem.lower, problem.upper)
    pg = projected_gradient(x, np.asarray(problem.gradient(x), dtype=float), problem.lower, problem.upper)
    grad_norm = float(np.max(np.abs(pg))) if pg.size else 0.0

    message = res.message if isinstance(res.message, str) else str(res.message)
    if res.status == 0:
        status = OptStatus.CONVERGED
    elif res.status == 1:
        status = OptStatus.MAX_ITER
    else:
        status = OptStatus.LINE_SEARCH_FAIL
    # scipy can report ABNORMAL line-search exits even when the projected
    # gradient test already holds; classify those as converged
    if status is OptStatus.LINE_SEARCH_FAIL and grad_norm <= problem.tol_g:
        status = OptStatus.CONVERGED
    return OptResult(
        x_opt=x,
        f_opt=float(res.fun),
        iterations=int(res.nit),
        status=status,
        grad_norm=grad_norm,
        message=message,
    )
