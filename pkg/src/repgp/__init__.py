"""Replication-aware Gaussian process regression.

Exact maximum-likelihood GP fitting on the unique-n representation of
replicated designs, for both constant and input-dependent noise, with a
stochastic-kriging baseline, scoring rules, and simulation benchmarks.
"""

__version__ = "0.1.0"

from .design import ReplicatedDesign, expand, find_reps
from .errors import ConvergenceError, FactorizationError, RepGPError, ValidationError
from .het import (
    HetModel,
    HetSettings,
    SKModel,
    het_fit,
    het_init,
    het_njll,
    het_njll_grad,
    het_predict,
    sk_fit,
    sk_predict,
    smooth_latents,
)
from .hom import (
    HomModel,
    Prediction,
    dense_nll,
    dense_predict,
    hom_fit,
    hom_nll,
    hom_nll_grad,
    hom_predict,
)
from .kernels import Family, KernelSpec, corr, corr_matrix, corr_matrix_dtheta
from .metrics import EvalSet, nlpd, nmse, score, score_vs_moments
from .optim import OptProblem, OptResult, OptStatus, minimize
from .sims import (
    SirParams,
    SirState,
    load_motorcycle,
    noise_sd,
    sir_mc,
    sir_run,
    sir_sample_sites,
    test_fn,
)

__all__ = [
    "ReplicatedDesign",
    "expand",
    "find_reps",
    "RepGPError",
    "ValidationError",
    "FactorizationError",
    "ConvergenceError",
    "HetModel",
    "HetSettings",
    "SKModel",
    "het_fit",
    "het_init",
    "het_njll",
    "het_njll_grad",
    "het_predict",
    "sk_fit",
    "sk_predict",
    "smooth_latents",
    "HomModel",
    "Prediction",
    "dense_nll",
    "dense_predict",
    "hom_fit",
    "hom_nll",
    "hom_nll_grad",
    "hom_predict",
    "Family",
    "KernelSpec",
    "corr",
    "corr_matrix",
    "corr_matrix_dtheta",
    "EvalSet",
    "nlpd",
    "nmse",
    "score",
    "score_vs_moments",
    "OptProblem",
    "OptResult",
    "OptStatus",
    "minimize",
    "SirParams",
    "SirState",
    "load_motorcycle",
    "noise_sd",
    "sir_mc",
    "sir_run",
    "sir_sample_sites",
    "test_fn",
]
