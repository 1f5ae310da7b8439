"""Heteroskedastic GP with smoothed latent log-variances, plus an
empirical-variance kriging baseline.

Per-site noise enters the mean-field likelihood through scaled variances
``lambda_i`` that are never free parameters directly: latent values
``delta`` are smoothed through a noise GP,

    log Lambda_n = C_(g) (C_(g) + g A_n^{-1})^{-1} delta,

so any point the optimizer visits yields positive, spatially coherent
variances. The optimized objective is the concentrated joint negative log
likelihood: the mean-field term of the homoskedastic module evaluated at
``lambda`` plus the latent-process term
``n/2 log(nu_g_hat) + 1/2 log|Upsilon_(g)| + n/2 (1 + log 2 pi)`` with
``nu_g_hat = delta' Upsilon_(g)^{-1} delta / n``. Its gradient is analytic
in all of (theta, phi, g, delta).

The baseline (``sk_fit``/``sk_predict``) plugs bias-adjusted empirical
replicate variances into the kriging equations and smooths them with a
separate interpolating GP; it requires at least two replicates everywhere.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import optim
from .design import ReplicatedDesign
from .errors import ConvergenceError, FactorizationError, ValidationError
from .hom import (
    LOG_2PI,
    SQRT_EPS,
    SERIALIZATION_VERSION,
    HomModel,
    Prediction,
    _theta_grad,
    build_hom_model,
    default_theta_bounds,
    default_theta_init,
    hom_fit,
    hom_predict,
    nll_core,
    nll_core_grad_pieces,
)
from .kernels import Family, KernelSpec, corr_matrix, corr_matrix_dtheta
from .linalg import chol_inverse, chol_jitter, chol_logdet, chol_solve_vec, quad_diag, serial_blas

_TINY = 1e-300
_LOG_EPS = float(np.log(np.finfo(float).eps))


# ---------------------------------------------------------------------------
# latent smoothing
# ---------------------------------------------------------------------------


def _noise_factor(spec: KernelSpec, design: ReplicatedDesign, g: float):
    """Cholesky of ``Upsilon_(g) = C_(g) + g A_n^{-1}`` plus ``C_(g)``."""
    Cg = corr_matrix(spec, design.X0)
    ups = Cg.copy()
    ups[np.diag_indices_from(ups)] += g / design.mult
    Lg, _ = chol_jitter(ups)
    return Cg, Lg


def smooth_latents(delta, phi, g: float, design: ReplicatedDesign,
                   family: Family = Family.SQUARED_EXPONENTIAL) -> np.ndarray:
    """Smoothed log-variances ``C_(g) (C_(g) + g A_n^{-1})^{-1} delta``.

    ``g = 0`` returns ``delta`` unchanged (no smoothing).
    """
    delta = np.asarray(delta, dtype=float).ravel()
    if delta.shape[0] != design.n:
        raise ValidationError("delta length must equal the number of unique sites")
    if g < 0:
        raise ValidationError("smoothing nugget g must be nonnegative")
    if g == 0.0:
        return delta.copy()
    spec = KernelSpec(family, phi)
    Cg, Lg = _noise_factor(spec, design, g)
    return Cg @ chol_solve_vec(Lg, delta)


# ---------------------------------------------------------------------------
# joint likelihood and gradient
# ---------------------------------------------------------------------------


def _joint_state(theta, phi, g, delta, design, family, nu_g_fixed=None):
    """Everything both the objective and the gradient need, computed once.

    With ``nu_g_fixed`` the latent term is the Gaussian prior density at
    that scale instead of the concentrated profile: the profile rewards
    shrinking the whole latent field toward zero without bound (the scale
    MLE collapses), so fitting pins the scale to the priming estimate and
    only reporting uses the concentrated form.
    """
    delta = np.asarray(delta, dtype=float).ravel()
    spec_m = KernelSpec(family, theta)
    spec_g = KernelSpec(family, phi)
    Cg, Lg = _noise_factor(spec_g, design, g)
    beta = chol_solve_vec(Lg, delta)
    log_lambda = delta.copy() if g == 0.0 else Cg @ beta
    # the smoother can amplify the latents when its matrix is near
    # singular; refuse states that would overflow exp
    if not np.all(np.isfinite(log_lambda)) or np.max(np.abs(log_lambda)) > 300.0:
        raise FactorizationError("latent smoothing produced out-of-range log variances")
    lam = np.exp(log_lambda)
    mf_value, aux = nll_core(spec_m, lam, design)
    quad = max(float(delta @ beta), _TINY)
    nu_g = quad / design.n
    if nu_g_fixed is None:
        nu_used = nu_g
        latent_value = (
            0.5 * design.n * np.log(nu_g)
            + 0.5 * chol_logdet(Lg)
            + 0.5 * design.n * (1.0 + LOG_2PI)
        )
    else:
        nu_used = nu_g_fixed
        latent_value = (
            0.5 * quad / nu_g_fixed
            + 0.5 * chol_logdet(Lg)
            + 0.5 * design.n * (np.log(nu_g_fixed) + LOG_2PI)
        )
    return {
        "spec_m": spec_m,
        "spec_g": spec_g,
        "Cg": Cg,
        "Lg": Lg,
        "beta": beta,
        "log_lambda": log_lambda,
        "lam": lam,
        "aux": aux,
        "nu_g": nu_g,
        "nu_used": nu_used,
        "meanfield": mf_value,
        "latent": float(latent_value),
        "delta": delta,
    }


def het_njll_parts(theta, phi, g: float, delta, design: ReplicatedDesign,
                   family: Family = Family.SQUARED_EXPONENTIAL) -> tuple[float, float]:
    """(mean-field, latent-process) components of the joint objective."""
    if g < 0:
        raise ValidationError("smoothing nugget g must be nonnegative")
    st = _joint_state(theta, phi, g, delta, design, family)
    return st["meanfield"], st["latent"]


def het_njll(theta, phi, g: float, delta, design: ReplicatedDesign,
             family: Family = Family.SQUARED_EXPONENTIAL) -> float:
    """Concentrated joint negative log likelihood."""
    mf, latent = het_njll_parts(theta, phi, g, delta, design, family)
    return mf + latent


def het_fit_objective(theta, phi, g: float, delta, design: ReplicatedDesign,
                      family: Family, nu_g0: float) -> float:
    """Joint objective as optimized by ``het_fit``: the latent scale is held
    at the priming estimate instead of being concentrated out."""
    if g < 0:
        raise ValidationError("smoothing nugget g must be nonnegative")
    st = _joint_state(theta, phi, g, delta, design, family, nu_g_fixed=nu_g0)
    return st["meanfield"] + st["latent"]


def het_njll_grad(theta, phi, g: float, delta, design: ReplicatedDesign,
                  family: Family = Family.SQUARED_EXPONENTIAL) -> np.ndarray:
    """Analytic gradient of ``het_njll`` w.r.t. ``(theta, phi, g, delta)``.

    Ordered as the concatenation (theta: d, phi: d, g: 1, delta: n).
    """
    if g < 0:
        raise ValidationError("smoothing nugget g must be nonnegative")
    st = _joint_state(theta, phi, g, delta, design, family)
    return _grad_from_state(st, design)


def _grad_from_state(st: dict, design: ReplicatedDesign) -> np.ndarray:
    spec_m, spec_g = st["spec_m"], st["spec_g"]
    Cg, Lg, beta, lam = st["Cg"], st["Lg"], st["beta"], st["lam"]
    nu_g, aux = st["nu_used"], st["aux"]
    a = design.mult
    d = spec_m.dim

    Q, dll_dlam = nll_core_grad_pieces(spec_m, design, aux)
    w = lam * dll_dlam  # d logL / d log(lambda_i)
    Qg = chol_inverse(Lg)

    grad = np.empty(2 * d + 1 + design.n)

    # mean-field lengthscales
    grad[:d] = _theta_grad(spec_m, design, aux, Q)

    # noise-process lengthscales: the smoother's Jacobian feeds w, and the
    # latent-process term contributes its own quadratic and trace parts
    for k in range(d):
        dCg = corr_matrix_dtheta(spec_g, design.X0, k)
        v = dCg @ beta
        dlog_lambda = v - Cg @ chol_solve_vec(Lg, v)
        dll = (
            float(dlog_lambda @ w)
            + 0.5 * float(beta @ v) / nu_g
            - 0.5 * float(np.sum(Qg * dCg))
        )
        grad[d + k] = -dll

    # smoothing nugget
    u = beta / a
    dlog_lambda_dg = -(Cg @ chol_solve_vec(Lg, u))
    dll_g = (
        float(dlog_lambda_dg @ w)
        + 0.5 * float(beta @ u) / nu_g
        - 0.5 * float(np.sum(np.diag(Qg) / a))
    )
    grad[2 * d] = -dll_g

    # latents: transpose of the smoother applied to w, minus the prior pull
    dll_delta = chol_solve_vec(Lg, Cg @ w) - beta / nu_g
    grad[2 * d + 1 :] = -dll_delta
    return grad


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------


@dataclass
class HetModel:
    """Fitted heteroskedastic GP; ``fallback=True`` means the returned model
    is the homoskedastic fit (prediction then delegates to it)."""

    kernel_mean: KernelSpec
    kernel_noise: KernelSpec
    delta: np.ndarray
    g: float
    logLambda: np.ndarray
    nu_hat: float
    nu_g: float
    design: ReplicatedDesign
    fallback: bool
    nll_joint: float
    nll_meanfield: float
    cache: dict
    hom: HomModel | None = None
    fit_status: str = "direct"
    iterations: int = 0

    def to_json(self) -> str:
        doc = {
            "version": SERIALIZATION_VERSION,
            "model": "het",
            "family": self.kernel_mean.family.value,
            "theta": self.kernel_mean.lengthscales.tolist(),
            "phi": self.kernel_noise.lengthscales.tolist(),
            "delta": self.delta.tolist(),
            "g": self.g,
            "fallback": self.fallback,
            "design": self.design.to_dict(),
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "HetModel":
        doc = json.loads(text)
        if doc.get("version") != SERIALIZATION_VERSION or doc.get("model") != "het":
            raise ValidationError("unrecognized heteroskedastic model document")
        design = ReplicatedDesign.from_dict(doc["design"])
        model = build_het_model(
            np.asarray(doc["theta"]),
            np.asarray(doc["phi"]),
            float(doc["g"]),
            np.asarray(doc["delta"]),
            design,
            Family(doc["family"]),
        )
        if doc.get("fallback"):
            theta = np.asarray(doc["theta"])
            hom = build_hom_model(theta, float(np.exp(doc["delta"][0])), design, Family(doc["family"]))
            model = replace(model, fallback=True, hom=hom, nll_meanfield=hom.nll)
        return model


def build_het_model(theta, phi, g: float, delta, design: ReplicatedDesign,
                    family: Family, fit_status: str = "direct", iterations: int = 0) -> HetModel:
    """Assemble the model state (smoothed variances, scales, caches)."""
    st = _joint_state(theta, phi, g, delta, design, family)
    return HetModel(
        kernel_mean=st["spec_m"],
        kernel_noise=st["spec_g"],
        delta=st["delta"],
        g=float(g),
        logLambda=st["log_lambda"],
        nu_hat=st["aux"]["nu_hat"],
        nu_g=st["nu_g"],
        design=design,
        fallback=False,
        nll_joint=st["meanfield"] + st["latent"],
        nll_meanfield=st["meanfield"],
        cache={
            "L": st["aux"]["L"],
            "alpha": st["aux"]["alpha"],
            "Lg": st["Lg"],
            "beta": st["beta"],
        },
        fit_status=fit_status,
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# initialization and fitting
# ---------------------------------------------------------------------------


@dataclass
class HetSettings:
    """Knobs for the joint fit.

    ``phi_mode``: "lower" leaves the noise lengthscales free above the
    primed mean-field estimate (forcing the noise process to evolve no
    faster than the mean); "coupled" infers a single scalar ``k >= 1`` with
    ``phi = k * theta``, useful in higher dimensions.

    ``compare_hom`` controls the end-of-fit comparison against the
    homoskedastic fit; benchmarks that study the raw optimum turn it off.
    ``phi_bounds``/``delta_box`` override the derived search boxes, letting
    several fits share one region regardless of their starting points.
    """

    family: Family = Family.SQUARED_EXPONENTIAL
    phi_mode: str = "lower"
    max_iter: int = 100
    g_upper: float = 100.0
    delta_margin: float = 5.0
    k_max: float = 100.0
    compare_hom: bool = True
    phi_bounds: tuple | None = None
    delta_box: tuple | None = None

    def __post_init__(self):
        self.family = Family(self.family)
        if self.phi_mode not in ("lower", "coupled"):
            raise ValidationError("phi_mode must be 'lower' or 'coupled'")


@dataclass
class HetInit:
    theta0: np.ndarray
    phi0: np.ndarray
    g0: float
    delta0: np.ndarray
    hom_model: HomModel
    nu_g0: float = 1.0


def het_init(design: ReplicatedDesign, settings: HetSettings | None = None,
             lower=None, upper=None) -> HetInit:
    """Priming stage: a homoskedastic fit seeds everything else.

    The latents start at the log residual second moment around the primed
    fit, computed from sufficient statistics as
    ``log((s_i^2 + (zbar_i - mu_i)^2) / nu_hat)`` and floored at log
    machine epsilon; dividing by the primed plug-in variance puts the
    residuals on the scaled-noise axis the latents parameterize. A second
    homoskedastic fit to ``(X0, delta0)`` supplies the smoothing nugget and
    refines the noise lengthscales.
    """
    settings = settings or HetSettings()
    hom_model = hom_fit(design, lower=lower, upper=upper, family=settings.family,
                        max_iter=settings.max_iter)
    mu = hom_predict(hom_model, design.X0).mean
    resid2 = design.S2 + (design.Z0 - mu) ** 2
    # scale by the primed plug-in variance so the latents start on the
    # lambda (noise-to-signal) scale the likelihood is written in
    delta0 = np.log(np.maximum(resid2 / hom_model.nu_hat, np.finfo(float).eps))

    noise_design = ReplicatedDesign(
        X0=design.X0,
        Z0=delta0,
        mult=np.ones(design.n, dtype=np.int64),
        S2=np.zeros(design.n),
    )
    noise_fit = hom_fit(noise_design, lower=lower, upper=upper, family=settings.family,
                        max_iter=settings.max_iter)
    theta0 = hom_model.kernel.lengthscales
    phi0 = np.maximum(noise_fit.kernel.lengthscales, theta0)
    return HetInit(theta0=theta0, phi0=phi0, g0=noise_fit.g, delta0=delta0,
                   hom_model=hom_model, nu_g0=max(noise_fit.nu_hat, 1e-8))


def _fallback_model(hom_model: HomModel, init: HetInit, design: ReplicatedDesign,
                    settings: HetSettings, fit_status: str, iterations: int) -> HetModel:
    delta = np.full(design.n, np.log(hom_model.g))
    model = build_het_model(
        hom_model.kernel.lengthscales, init.phi0, 0.0, delta, design, settings.family,
        fit_status=fit_status, iterations=iterations,
    )
    return replace(model, fallback=True, hom=hom_model, nll_meanfield=hom_model.nll)


def het_fit(design: ReplicatedDesign, lower=None, upper=None,
            settings: HetSettings | None = None, init: HetInit | None = None) -> HetModel:
    """Joint maximum-likelihood fit over ``(theta, phi, g, delta)``.

    Runs the priming initialization, optimizes the joint objective with the
    bound-constrained quasi-Newton solver, then compares the unpenalized
    mean-field likelihood against the optimized homoskedastic fit and falls
    back to the latter when it is strictly better. ``max_iter`` in the
    settings caps the iterations (a truncated fit is often sufficient).
    """
    settings = settings or HetSettings()
    if init is None:
        init = het_init(design, settings, lower=lower, upper=upper)
    d = design.dim
    n = design.n
    family = settings.family

    lo_t, hi_t = default_theta_bounds(design.X0, family)
    if lower is not None:
        lo_t = np.broadcast_to(np.asarray(lower, dtype=float), (d,)).copy()
    if upper is not None:
        hi_t = np.broadcast_to(np.asarray(upper, dtype=float), (d,)).copy()
    if np.any(lo_t >= hi_t):
        raise ValidationError("theta bounds must satisfy lower < upper")

    theta0 = np.clip(init.theta0, lo_t, hi_t)
    if settings.delta_box is not None:
        delta_lo, delta_hi = float(settings.delta_box[0]), float(settings.delta_box[1])
    else:
        delta_lo = float(init.delta0.min()) - settings.delta_margin
        delta_hi = float(init.delta0.max()) + settings.delta_margin
    g0 = float(np.clip(init.g0, 0.0, settings.g_upper))

    # lengthscales are searched on the log scale (conditioning). The
    # smoothing nugget runs through the offset log u = log(g + eps): its
    # objective has a boundary layer near g = 0 (the log-det gradient grows
    # like the inverse smallest eigenvalue of the noise correlation), and
    # the offset keeps g = 0 exactly reachable at the lower bound. The
    # latents are already log-variances and stay linear.
    eps_g = SQRT_EPS
    u_lo, u_hi = np.log(eps_g), np.log(settings.g_upper + eps_g)
    u0 = np.log(g0 + eps_g)
    coupled = settings.phi_mode == "coupled"
    if coupled:
        k0 = float(np.clip(np.max(init.phi0 / np.maximum(theta0, 1e-300)), 1.0, settings.k_max))
        x0 = np.concatenate([np.log(theta0), [np.log(k0), u0], init.delta0])
        lower_v = np.concatenate([np.log(lo_t), [0.0, u_lo], np.full(n, delta_lo)])
        upper_v = np.concatenate(
            [np.log(hi_t), [np.log(settings.k_max), u_hi], np.full(n, delta_hi)]
        )
        dim = d + 2 + n
    else:
        if settings.phi_bounds is not None:
            lo_phi = np.broadcast_to(np.asarray(settings.phi_bounds[0], dtype=float), (d,)).copy()
            hi_phi = np.broadcast_to(np.asarray(settings.phi_bounds[1], dtype=float), (d,)).copy()
        else:
            lo_phi = np.minimum(np.maximum(lo_t, theta0), hi_t * (1.0 - 1e-9))
            hi_phi = np.maximum(hi_t, 2.0 * theta0)
        phi0 = np.clip(init.phi0, lo_phi, hi_phi)
        x0 = np.concatenate([np.log(theta0), np.log(phi0), [u0], init.delta0])
        lower_v = np.concatenate([np.log(lo_t), np.log(lo_phi), [u_lo], np.full(n, delta_lo)])
        upper_v = np.concatenate(
            [np.log(hi_t), np.log(hi_phi), [u_hi], np.full(n, delta_hi)]
        )
        dim = 2 * d + 1 + n
    ig = d + 1 if coupled else 2 * d  # index of the transformed nugget

    def unpack(x):
        theta = np.exp(x[:d])
        if coupled:
            phi = np.exp(x[d]) * theta
            delta = x[d + 2 :]
        else:
            phi = np.exp(x[d : 2 * d])
            delta = x[2 * d + 1 :]
        g = max(0.0, float(np.exp(x[ig])) - eps_g)
        return theta, phi, g, delta

    memo: dict[bytes, tuple[float, np.ndarray]] = {}
    nu_g_fixed = max(float(init.nu_g0), 1e-8)

    def value_and_grad(x: np.ndarray) -> tuple[float, np.ndarray]:
        key = x.tobytes()
        hit = memo.get(key)
        if hit is not None:
            return hit
        theta, phi, g, delta = unpack(x)
        try:
            st = _joint_state(theta, phi, g, delta, design, family,
                              nu_g_fixed=nu_g_fixed)
            f = st["meanfield"] + st["latent"]
            base = _grad_from_state(st, design)
            gr = np.empty(dim)
            if coupled:
                # log phi = log theta + log k, so both log-theta and log-k
                # collect the full phi sensitivity
                gr[:d] = theta * base[:d] + phi * base[d : 2 * d]
                gr[d] = float(phi @ base[d : 2 * d])
                gr[d + 1] = base[2 * d] * (g + eps_g)
                gr[d + 2 :] = base[2 * d + 1 :]
            else:
                gr[:d] = theta * base[:d]
                gr[d : 2 * d] = phi * base[d : 2 * d]
                gr[2 * d] = base[2 * d] * (g + eps_g)
                gr[2 * d + 1 :] = base[2 * d + 1 :]
        except FactorizationError:
            f, gr = 1e12, np.zeros(dim)
        memo.clear()
        memo[key] = (f, gr)
        return f, gr

    problem = optim.OptProblem(
        dimension=dim,
        objective=lambda x: value_and_grad(x)[0],
        gradient=lambda x: value_and_grad(x)[1],
        lower=lower_v,
        upper=upper_v,
        max_iter=settings.max_iter,
        tol_f=1e-10,
    )
    with serial_blas():
        res = optim.minimize_with_restarts(problem, x0)
    if not np.isfinite(res.f_opt) or not np.all(np.isfinite(res.x_opt)):
        raise ConvergenceError(
            "heteroskedastic fit failed to produce a finite optimum",
            best_x=res.x_opt,
            best_f=res.f_opt,
        )
    theta, phi, g, delta = unpack(res.x_opt)
    model = build_het_model(theta, phi, g, delta, design, family,
                            fit_status=res.status.value, iterations=res.iterations)
    # the returned model is the one whose unpenalized mean-field likelihood
    # is higher; ties go to the heteroskedastic fit
    if settings.compare_hom and init.hom_model.nll < model.nll_meanfield:
        return _fallback_model(init.hom_model, init, design, settings,
                               fit_status=res.status.value, iterations=res.iterations)
    return model


def het_predict(model: HetModel, Xnew: np.ndarray) -> Prediction:
    """Predictive mean, epistemic variance and input-dependent noise.

    The noise variance at new locations is the latent GP's zero-mean
    predictive mean of the log variance, exponentiated and scaled by the
    plug-in process variance; it is consistent with the smoothed values at
    the design sites. Fallback models predict the constant homoskedastic
    noise instead.
    """
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
    if Xnew.shape[1] != model.design.dim:
        raise ValidationError("prediction inputs do not match the design dimension")
    c = corr_matrix(model.kernel_mean, model.design.X0, Xnew)
    mean = c.T @ model.cache["alpha"]
    sd2 = model.nu_hat * np.clip(1.0 - quad_diag(model.cache["L"], c), 0.0, None)
    if model.fallback:
        nugs = np.full(Xnew.shape[0], model.hom.nu_hat * model.hom.g)
        return Prediction(mean=mean, sd2=sd2, nugs=nugs)
    cg = corr_matrix(model.kernel_noise, model.design.X0, Xnew)
    nugs = model.nu_hat * np.exp(cg.T @ model.cache["beta"])
    return Prediction(mean=mean, sd2=sd2, nugs=nugs)


# ---------------------------------------------------------------------------
# stochastic-kriging baseline
# ---------------------------------------------------------------------------


@dataclass
class SKModel:
    """Kriging on replicate means with plugged-in empirical variances."""

    kernel: KernelSpec
    nu: float
    sigma2_hat: np.ndarray
    variance_gp: HomModel
    design: ReplicatedDesign
    cache: dict = field(default_factory=dict)


def sk_fit(design: ReplicatedDesign, lower=None, upper=None,
           family: Family = Family.SQUARED_EXPONENTIAL, max_iter: int = 100) -> SKModel:
    """Fit the baseline: requires at least two replicates at every site.

    Lengthscales and the process variance maximize the pre-averaged
    likelihood of the replicate means with the bias-adjusted empirical
    variances ``a_i s_i^2 / (a_i - 1)`` plugged in; a separate interpolating
    GP on ``(X0, sigma2_hat)`` extrapolates the noise.
    """
    if np.any(design.mult < 2):
        raise ValidationError("SK requires replication: every site needs at least two replicates")
    sigma2 = design.mult * design.S2 / (design.mult - 1)
    d = design.dim
    lo_t, hi_t = default_theta_bounds(design.X0, family)
    if lower is not None:
        lo_t = np.broadcast_to(np.asarray(lower, dtype=float), (d,)).copy()
    if upper is not None:
        hi_t = np.broadcast_to(np.asarray(upper, dtype=float), (d,)).copy()
    if np.any(lo_t >= hi_t):
        raise ValidationError("theta bounds must satisfy lower < upper")

    vz = float(np.var(design.Z0, ddof=1)) if design.n > 1 else 0.0
    vz = max(vz, float(np.mean(sigma2)), SQRT_EPS)
    nu_bounds = (1e-6 * vz, 1e3 * vz)
    snoise = sigma2 / design.mult

    def negloglik_and_grad(x):
        theta, nu = x[:d], x[d]
        spec = KernelSpec(family, theta)
        C = corr_matrix(spec, design.X0)
        M = nu * C
        M[np.diag_indices_from(M)] += snoise
        L, _ = chol_jitter(M)
        alpha = chol_solve_vec(L, design.Z0)
        value = 0.5 * chol_logdet(L) + 0.5 * float(design.Z0 @ alpha) \
            + 0.5 * design.n * LOG_2PI
        Minv = chol_inverse(L)
        grad = np.empty(d + 1)
        for k in range(d):
            dM = nu * corr_matrix_dtheta(spec, design.X0, k)
            grad[k] = 0.5 * float(np.sum(Minv * dM)) - 0.5 * float(alpha @ dM @ alpha)
        grad[d] = 0.5 * float(np.sum(Minv * C)) - 0.5 * float(alpha @ C @ alpha)
        return value, grad

    memo: dict[bytes, tuple[float, np.ndarray]] = {}

    def value_and_grad(u):
        key = u.tobytes()
        hit = memo.get(key)
        if hit is not None:
            return hit
        x = np.exp(u)
        try:
            f, gr = negloglik_and_grad(x)
            out = (f, gr * x)
        except FactorizationError:
            out = (1e12, np.zeros(d + 1))
        memo.clear()
        memo[key] = out
        return out

    problem = optim.OptProblem(
        dimension=d + 1,
        objective=lambda u: value_and_grad(u)[0],
        gradient=lambda u: value_and_grad(u)[1],
        lower=np.log(np.append(lo_t, nu_bounds[0])),
        upper=np.log(np.append(hi_t, nu_bounds[1])),
        max_iter=max_iter,
        tol_f=1e-10,
    )
    theta0 = np.clip(default_theta_init(design.X0, family), lo_t, hi_t)
    with serial_blas():
        res = optim.minimize_with_restarts(problem, np.log(np.append(theta0, vz)))
    x_opt = np.exp(res.x_opt)
    theta_hat, nu_hat = x_opt[:d], float(x_opt[d])

    var_design = ReplicatedDesign(
        X0=design.X0, Z0=sigma2, mult=np.ones(design.n, dtype=np.int64), S2=np.zeros(design.n)
    )
    variance_gp = hom_fit(var_design, lower=lower, upper=upper, family=family,
                          g_bounds=(SQRT_EPS, 10 * SQRT_EPS), max_iter=max_iter)

    spec = KernelSpec(family, theta_hat)
    C = corr_matrix(spec, design.X0)
    M = nu_hat * C
    M[np.diag_indices_from(M)] += snoise
    L, _ = chol_jitter(M)
    return SKModel(
        kernel=spec,
        nu=nu_hat,
        sigma2_hat=sigma2,
        variance_gp=variance_gp,
        design=design,
        cache={"L": L, "alpha": chol_solve_vec(L, design.Z0)},
    )


def sk_predict(model: SKModel, Xnew: np.ndarray) -> Prediction:
    """Kriging equations with the empirical variances; the noise prediction
    comes from the variance GP and is floored at zero."""
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
    if Xnew.shape[1] != model.design.dim:
        raise ValidationError("prediction inputs do not match the design dimension")
    c = corr_matrix(model.kernel, model.design.X0, Xnew)
    k = model.nu * c
    mean = k.T @ model.cache["alpha"]
    sd2 = np.clip(model.nu - quad_diag(model.cache["L"], k), 0.0, None)
    nugs = np.clip(hom_predict(model.variance_gp, Xnew).mean, 0.0, None)
    return Prediction(mean=mean, sd2=sd2, nugs=nugs)
