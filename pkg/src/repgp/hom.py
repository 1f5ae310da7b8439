"""Homoskedastic GP on the unique-n representation, with dense oracles.

The covariance of the N raw observations is parameterized as
``nu * (C_N + Lambda_N)`` with correlation ``C`` and scaled noise
``lambda = tau^2 / nu``. Collapsing replicates, all likelihood quantities
reduce to the n x n matrix ``Upsilon_n = C_n + diag(lambda_i / a_i)`` plus
O(N) sums, and the scale has the plug-in MLE

    nu_hat_N = (1/N) * (sum_i a_i s_i^2 / lambda_i + Zbar' Upsilon_n^{-1} Zbar).

The negative log likelihood carries the explicit constant
``N/2 * (1 + log 2 pi)`` so values are directly comparable across the
unique-n functions and the dense full-N oracles in this module.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import optim
from .design import ReplicatedDesign
from .errors import ConvergenceError, FactorizationError, ValidationError
from .kernels import Family, KernelSpec, corr_matrix, corr_matrix_dtheta
from .linalg import chol_inverse, chol_jitter, chol_logdet, chol_solve_vec, quad_diag, serial_blas

SQRT_EPS = float(np.sqrt(np.finfo(float).eps))
LOG_2PI = float(np.log(2.0 * np.pi))
_TINY = 1e-300

SERIALIZATION_VERSION = 1


@dataclass(frozen=True)
class Prediction:
    """Per-location predictive summaries, stored as aligned vectors.

    ``mean`` is the predictive mean of the latent function, ``sd2`` its
    epistemic variance, and ``nugs`` the predicted noise variance; the
    total predictive variance of an observation is ``sd2 + nugs``.
    """

    mean: np.ndarray
    sd2: np.ndarray
    nugs: np.ndarray

    def __len__(self) -> int:
        return self.mean.shape[0]


# ---------------------------------------------------------------------------
# unique-n likelihood core (shared with the heteroskedastic module)
# ---------------------------------------------------------------------------


def _upsilon_chol(spec: KernelSpec, design: ReplicatedDesign, lam: np.ndarray):
    ups = corr_matrix(spec, design.X0)
    ups[np.diag_indices_from(ups)] += lam / design.mult
    return chol_jitter(ups)


def nll_core(spec: KernelSpec, lam: np.ndarray, design: ReplicatedDesign):
    """Negative log likelihood for per-site scaled noise ``lam``; returns
    ``(value, aux)`` where aux carries the factorization for reuse."""
    lam = np.asarray(lam, dtype=float)
    L, _ = _upsilon_chol(spec, design, lam)
    alpha = chol_solve_vec(L, design.Z0)
    quad = float(design.Z0 @ alpha)
    svar = float(np.sum(design.mult * design.S2 / lam))
    Nnu = max(svar + quad, _TINY)
    nu_hat = Nnu / design.N
    value = (
        0.5 * design.N * np.log(nu_hat)
        + 0.5 * float(np.sum((design.mult - 1) * np.log(lam) + np.log(design.mult)))
        + 0.5 * chol_logdet(L)
        + 0.5 * design.N * (1.0 + LOG_2PI)
    )
    aux = {"L": L, "alpha": alpha, "nu_hat": nu_hat, "lam": lam}
    return float(value), aux


def nll_core_grad_pieces(spec: KernelSpec, design: ReplicatedDesign, aux):
    """Quantities shared by all gradient components: ``Q = Upsilon^{-1}``
    and the per-site sensitivity of the log likelihood to each lambda_i."""
    L, alpha, nu_hat, lam = aux["L"], aux["alpha"], aux["nu_hat"], aux["lam"]
    Q = chol_inverse(L)
    a = design.mult
    # d logL / d lambda_i (log-likelihood orientation)
    dll_dlam = (
        0.5 * (a * design.S2 / lam**2 + alpha**2 / a) / nu_hat
        - (a - 1) / (2.0 * lam)
        - np.diag(Q) / (2.0 * a)
    )
    return Q, dll_dlam


def _theta_grad(spec: KernelSpec, design: ReplicatedDesign, aux, Q) -> np.ndarray:
    """d(-logL)/d theta_k via the correlation derivative."""
    alpha, nu_hat = aux["alpha"], aux["nu_hat"]
    out = np.empty(spec.dim)
    for k in range(spec.dim):
        dC = corr_matrix_dtheta(spec, design.X0, k)
        out[k] = -(
            0.5 * float(alpha @ dC @ alpha) / nu_hat - 0.5 * float(np.sum(Q * dC))
        )
    return out


# ---------------------------------------------------------------------------
# homoskedastic interface
# ---------------------------------------------------------------------------


def hom_nll(theta, g: float, design: ReplicatedDesign, family: Family = Family.SQUARED_EXPONENTIAL) -> float:
    """Negative log likelihood with a constant scaled nugget ``g``."""
    if g <= 0:
        raise ValidationError("nugget g must be strictly positive")
    spec = KernelSpec(family, theta)
    lam = np.full(design.n, float(g))
    value, _ = nll_core(spec, lam, design)
    return value


def hom_nll_grad(theta, g: float, design: ReplicatedDesign, family: Family = Family.SQUARED_EXPONENTIAL) -> np.ndarray:
    """Analytic gradient of ``hom_nll`` w.r.t. ``(theta, g)``."""
    if g <= 0:
        raise ValidationError("nugget g must be strictly positive")
    spec = KernelSpec(family, theta)
    lam = np.full(design.n, float(g))
    _, aux = nll_core(spec, lam, design)
    Q, dll_dlam = nll_core_grad_pieces(spec, design, aux)
    grad = np.empty(spec.dim + 1)
    grad[: spec.dim] = _theta_grad(spec, design, aux, Q)
    grad[spec.dim] = -float(np.sum(dll_dlam))  # d lambda_i / d g = 1 for all i
    return grad


def default_theta_bounds(X0: np.ndarray, family: Family) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension lengthscale box scaled to the input ranges.

    Squared exponential lengthscales divide squared distances, so the box
    scales with the squared range; Matern 5/2 scales with the range itself.
    """
    X0 = np.atleast_2d(X0)
    rng = X0.max(axis=0) - X0.min(axis=0)
    base = np.where(rng > 0, rng, 1.0)
    if Family(family) is Family.SQUARED_EXPONENTIAL:
        base = base**2
    return 1e-2 * base, 2.0 * base


def default_theta_init(X0: np.ndarray, family: Family) -> np.ndarray:
    # 10% of the range scale per dimension; the upper bound is twice that scale
    _, upper = default_theta_bounds(X0, family)
    return 0.1 * (upper / 2.0)


def default_g_bounds(design: ReplicatedDesign) -> tuple[float, float]:
    # g is a noise-to-signal ratio; var(Z0) alone under-brackets it when the
    # responses have small spread, so keep a ratio-scale floor on the upper
    vz = float(np.var(design.Z0, ddof=1)) if design.n > 1 else 0.0
    return SQRT_EPS, max(vz, 1e2)


def default_g_init(design: ReplicatedDesign) -> float:
    lo, hi = default_g_bounds(design)
    vz = float(np.var(design.Z0, ddof=1)) if design.n > 1 else 0.0
    if np.any(design.mult > 1) and vz > 0:
        g0 = float(np.mean(design.S2)) / vz
    else:
        g0 = 0.1 * vz
    return float(np.clip(g0, lo, hi))


@dataclass
class HomModel:
    """Fitted homoskedastic GP: kernel, scaled nugget, plug-in scale, caches."""

    kernel: KernelSpec
    g: float
    nu_hat: float
    design: ReplicatedDesign
    nll: float
    cache: dict
    fit_status: str = "direct"
    iterations: int = 0

    def to_json(self) -> str:
        doc = {
            "version": SERIALIZATION_VERSION,
            "model": "hom",
            "family": self.kernel.family.value,
            "theta": self.kernel.lengthscales.tolist(),
            "g": self.g,
            "nu_hat": self.nu_hat,
            "nll": self.nll,
            "design": self.design.to_dict(),
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "HomModel":
        doc = json.loads(text)
        if doc.get("version") != SERIALIZATION_VERSION or doc.get("model") != "hom":
            raise ValidationError("unrecognized homoskedastic model document")
        design = ReplicatedDesign.from_dict(doc["design"])
        return build_hom_model(np.asarray(doc["theta"]), doc["g"], design, Family(doc["family"]))


def build_hom_model(theta, g: float, design: ReplicatedDesign, family: Family,
                    fit_status: str = "direct", iterations: int = 0) -> HomModel:
    """Assemble a model (factorization, plug-in scale) at fixed parameters."""
    spec = KernelSpec(family, theta)
    lam = np.full(design.n, float(g))
    value, aux = nll_core(spec, lam, design)
    return HomModel(
        kernel=spec,
        g=float(g),
        nu_hat=aux["nu_hat"],
        design=design,
        nll=value,
        cache={"L": aux["L"], "alpha": aux["alpha"]},
        fit_status=fit_status,
        iterations=iterations,
    )


def hom_fit(
    design: ReplicatedDesign,
    lower=None,
    upper=None,
    init=None,
    family: Family = Family.SQUARED_EXPONENTIAL,
    g_bounds: tuple[float, float] | None = None,
    g_init: float | None = None,
    max_iter: int = 100,
    tol_f: float = 1e-10,
    tol_g: float = 1e-5,
) -> HomModel:
    """Maximum-likelihood fit of ``(theta, g)`` with analytic gradients.

    ``lower``/``upper`` bound the lengthscales(default: scaled to the input
    ranges); the nugget has its own box, defaulting to
    ``[sqrt(machine eps), var(Z0)]``. Deterministic given the starting point.
    """
    d = design.dim
    lo_t, hi_t = default_theta_bounds(design.X0, family)
    if lower is not None:
        lo_t = np.broadcast_to(np.asarray(lower, dtype=float), (d,)).copy()
    if upper is not None:
        hi_t = np.broadcast_to(np.asarray(upper, dtype=float), (d,)).copy()
    if np.any(lo_t >= hi_t):
        raise ValidationError("theta bounds must satisfy lower < upper")
    if g_bounds is None:
        g_bounds = default_g_bounds(design)
    if not g_bounds[0] < g_bounds[1]:
        raise ValidationError("g bounds must satisfy lower < upper")
    theta0 = np.clip(
        np.broadcast_to(np.asarray(init, dtype=float), (d,)).copy() if init is not None
        else default_theta_init(design.X0, family),
        lo_t,
        hi_t,
    )
    g0 = float(np.clip(g_init if g_init is not None else default_g_init(design), *g_bounds))

    # the search runs on log(theta, g): the raw scales differ by orders of
    # magnitude, which stalls quasi-Newton steps
    memo: dict[bytes, tuple[float, np.ndarray]] = {}

    def value_and_grad(u: np.ndarray) -> tuple[float, np.ndarray]:
        key = u.tobytes()
        hit = memo.get(key)
        if hit is not None:
            return hit
        x = np.exp(u)
        theta, g = x[:d], x[d]
        try:
            f = hom_nll(theta, g, design, family)
            gr = hom_nll_grad(theta, g, design, family) * x
        except FactorizationError:
            # poison value forces the line search to back off
            f, gr = 1e12, np.zeros(d + 1)
        memo.clear()
        memo[key] = (f, gr)
        return f, gr

    problem = optim.OptProblem(
        dimension=d + 1,
        objective=lambda u: value_and_grad(u)[0],
        gradient=lambda u: value_and_grad(u)[1],
        lower=np.log(np.append(lo_t, g_bounds[0])),
        upper=np.log(np.append(hi_t, g_bounds[1])),
        max_iter=max_iter,
        tol_f=tol_f,
        tol_g=tol_g,
    )
    with serial_blas():
        res = optim.minimize_with_restarts(problem, np.log(np.append(theta0, g0)))
    if not np.isfinite(res.f_opt) or not np.all(np.isfinite(res.x_opt)):
        raise ConvergenceError(
            "homoskedastic fit failed to produce a finite optimum",
            best_x=res.x_opt,
            best_f=res.f_opt,
        )
    x_opt = np.exp(res.x_opt)
    return build_hom_model(
        x_opt[:d], x_opt[d], design, family,
        fit_status=res.status.value, iterations=res.iterations,
    )


def hom_predict(model: HomModel, Xnew: np.ndarray) -> Prediction:
    """Predictive mean, epistemic variance and (constant) noise variance."""
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
    if Xnew.shape[1] != model.design.dim:
        raise ValidationError("prediction inputs do not match the design dimension")
    c = corr_matrix(model.kernel, model.design.X0, Xnew)
    mean = c.T @ model.cache["alpha"]
    sd2 = model.nu_hat * np.clip(1.0 - quad_diag(model.cache["L"], c), 0.0, None)
    nugs = np.full(Xnew.shape[0], model.nu_hat * model.g)
    return Prediction(mean=mean, sd2=sd2, nugs=nugs)


# ---------------------------------------------------------------------------
# dense full-N oracles (small N only; used for equivalence testing)
# ---------------------------------------------------------------------------


def _dense_chol(X, theta, lam, family):
    spec = KernelSpec(family, theta)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (X.shape[0],))
    M = corr_matrix(spec, X)
    M[np.diag_indices_from(M)] += lam
    L, _ = chol_jitter(M)
    return X, spec, lam, L


def dense_nll(X, Y, theta, lam, family: Family = Family.SQUARED_EXPONENTIAL) -> float:
    """Full-N negative log likelihood, built explicitly.

    ``lam`` is either the constant scaled nugget or one value per raw
    observation. Same constant convention as ``hom_nll``.
    """
    Y = np.asarray(Y, dtype=float).ravel()
    X, spec, lam, L = _dense_chol(X, theta, lam, family)
    N = Y.shape[0]
    alpha = chol_solve_vec(L, Y)
    nu_hat = max(float(Y @ alpha), _TINY) / N
    return float(
        0.5 * N * np.log(nu_hat) + 0.5 * chol_logdet(L) + 0.5 * N * (1.0 + LOG_2PI)
    )


def dense_predict(X, Y, theta, lam, Xnew, family: Family = Family.SQUARED_EXPONENTIAL):
    """Full-N predictive mean and plug-in epistemic variance (oracle)."""
    Y = np.asarray(Y, dtype=float).ravel()
    X, spec, lam, L = _dense_chol(X, theta, lam, family)
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
    alpha = chol_solve_vec(L, Y)
    nu_hat = float(Y @ alpha) / Y.shape[0]
    c = corr_matrix(spec, X, Xnew)
    mean = c.T @ alpha
    sd2 = nu_hat * (1.0 - quad_diag(L, c))
    return mean, sd2
