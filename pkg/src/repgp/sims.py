"""Data generators: exact SIR simulation, analytic test surfaces, and the
bundled motorcycle-impact benchmark data.

The SIR simulator is an exact continuous-time Gillespie scheme over two
channels, infection (rate ``beta * S * I / M``) and recovery (rate
``gamma * I``), run until the infected count hits zero. Randomness comes
from SplitMix64 streams: every run owns one 64-bit key, and batch helpers
derive per-replicate keys from a ``numpy.random.SeedSequence``, so results
are bit-reproducible and independent of evaluation order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np
from numba import njit

from .design import ReplicatedDesign, find_reps, read_observations
from .errors import ValidationError


@dataclass(frozen=True)
class SirParams:
    beta: float
    gamma: float
    M: int

    def __post_init__(self):
        if self.beta < 0 or self.gamma < 0:
            raise ValidationError("rates must be nonnegative")
        if self.M < 1:
            raise ValidationError("population must be at least 1")


@dataclass(frozen=True)
class SirState:
    S: int
    I: int
    R: int

    def __post_init__(self):
        if min(self.S, self.I, self.R) < 0:
            raise ValidationError("counts must be nonnegative")


@njit(cache=True)
def _splitmix64_next(state):
    state = np.uint64(state + np.uint64(0x9E3779B97F4A7C15))
    z = state
    z = np.uint64((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9))
    z = np.uint64((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB))
    return np.uint64(z ^ (z >> np.uint64(31))), state


@njit(cache=True)
def _uniform_open(bits):
    # (0, 1]: 53 high bits, shifted off zero
    return (np.float64(bits >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _sir_chain(beta, gamma, M, S0, I0, key):
    """One outbreak; returns newly infected count S0 - S_final."""
    S = S0
    I = I0
    state = np.uint64(key)
    t = 0.0
    while I > 0:
        rate_inf = beta * S * I / M
        rate_rec = gamma * I
        total = rate_inf + rate_rec
        bits, state = _splitmix64_next(state)
        t -= np.log(_uniform_open(bits)) / total
        bits, state = _splitmix64_next(state)
        if _uniform_open(bits) * total <= rate_inf:
            S -= 1
            I += 1
        else:
            I -= 1
    return S0 - S


@njit(cache=True)
def _sir_chain_batch(beta, gamma, M, S0, I0, keys):
    out = np.empty(keys.shape[0], dtype=np.int64)
    for i in range(keys.shape[0]):
        out[i] = _sir_chain(beta, gamma, M, S0, I0, keys[i])
    return out


def _run_keys(seed, count: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)


def sir_run(params: SirParams, init: SirState, seed) -> int:
    """Total newly infected over one exact outbreak simulation.

    Deterministic per seed: the stream key is the first 64-bit word of
    ``SeedSequence(seed)``.
    """
    if init.S + init.I + init.R > params.M:
        raise ValidationError("S + I + R exceeds the population size")
    if params.gamma == 0 and init.I > 0 and params.beta > 0:
        raise ValidationError("gamma = 0 with infecteds present never absorbs")
    key = _run_keys(seed, 1)[0]
    return int(_sir_chain(params.beta, params.gamma, params.M, init.S, init.I, key))


def sir_mc(params: SirParams, init: SirState, replicates: int, seed) -> tuple[float, float]:
    """Monte Carlo mean and bias-unadjusted variance of the infected count.

    Each replicate runs on its own pre-assigned SplitMix64 key (consecutive
    words of ``SeedSequence(seed)``), so the estimate does not depend on
    evaluation order.
    """
    if replicates < 1:
        raise ValidationError("replicates must be at least 1")
    if init.S + init.I + init.R > params.M:
        raise ValidationError("S + I + R exceeds the population size")
    keys = _run_keys(seed, replicates)
    draws = _sir_chain_batch(params.beta, params.gamma, params.M, init.S, init.I, keys)
    mean = float(np.mean(draws))
    var = float(np.mean((draws - mean) ** 2))
    return mean, var


def sir_sample_sites(params: SirParams, sites: np.ndarray, mult: np.ndarray, seed) -> np.ndarray:
    """Raw draws for a replicated design over (S, I) sites.

    Returns the concatenated outputs, ``mult[i]`` draws for site ``i`` in
    site order; per-site streams are spawned from ``SeedSequence(seed)`` so
    each site is independent of the others.
    """
    sites = np.atleast_2d(np.asarray(sites))
    mult = np.asarray(mult, dtype=np.int64)
    if sites.shape[0] != mult.shape[0]:
        raise ValidationError("sites and replicate counts must align")
    root = np.random.SeedSequence(seed)
    children = root.spawn(sites.shape[0])
    out = np.empty(int(mult.sum()), dtype=np.int64)
    pos = 0
    for i in range(sites.shape[0]):
        keys = children[i].generate_state(int(mult[i]), dtype=np.uint64)
        out[pos : pos + mult[i]] = _sir_chain_batch(
            params.beta, params.gamma, params.M, int(sites[i, 0]), int(sites[i, 1]), keys
        )
        pos += mult[i]
    return out


# ---------------------------------------------------------------------------
# analytic test surfaces
# ---------------------------------------------------------------------------

_DOMAINS = {
    "gramacy2d": np.array([[-2.0, 4.0], [-2.0, 4.0]]),
    "branin_noisy": np.array([[0.0, 1.0], [0.0, 1.0]]),
    "jump1d": np.array([[0.0, 1.0]]),
}


def _check_domain(name: str, x: np.ndarray) -> np.ndarray:
    if name not in _DOMAINS:
        raise ValidationError(f"unknown test function '{name}'")
    dom = _DOMAINS[name]
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != dom.shape[0]:
        raise ValidationError(f"{name} expects {dom.shape[0]}-dimensional inputs")
    if np.any(x < dom[:, 0] - 1e-12) or np.any(x > dom[:, 1] + 1e-12):
        raise ValidationError(f"input outside the {name} domain")
    return x


def test_fn(name: str, x) -> np.ndarray:
    """Deterministic mean surface of a named test function."""
    x = _check_domain(name, x)
    if name == "gramacy2d":
        return x[:, 0] * np.exp(-x[:, 0] ** 2 - x[:, 1] ** 2)
    if name == "branin_noisy":
        # standard Branin remapped to the unit square
        a, b = 15.0 * x[:, 0] - 5.0, 15.0 * x[:, 1]
        return (
            (b - 5.1 * a**2 / (4 * np.pi**2) + 5 * a / np.pi - 6.0) ** 2
            + 10.0 * (1 - 1 / (8 * np.pi)) * np.cos(a)
            + 10.0
        )
    # reconstruction of a one-dimensional sinusoid with a level shift;
    # demo-only stand-in, not tied to any benchmark number
    return np.sin(8 * np.pi * x[:, 0]) + 2.0 * (x[:, 0] > 0.5)


def noise_sd(name: str, x) -> np.ndarray:
    """Generative noise standard deviation, where the surface defines one."""
    x = _check_domain(name, x)
    if name == "gramacy2d":
        return np.full(x.shape[0], 0.01)
    if name == "branin_noisy":
        var = 2.0 + 2.0 * np.sin(np.pi * x[:, 0]) * np.cos(3 * np.pi * x[:, 1]) \
            + 5.0 * (x[:, 0] ** 2 + x[:, 1] ** 2)
        return np.sqrt(var)
    return np.ones(x.shape[0])


# ---------------------------------------------------------------------------
# bundled benchmark data
# ---------------------------------------------------------------------------

MOTORCYCLE_N = 133
MOTORCYCLE_UNIQUE = 94


def motorcycle_path():
    return resources.files("repgp").joinpath("data/motorcycle.csv")


def load_motorcycle(path=None) -> ReplicatedDesign:
    """Motorcycle-impact benchmark: 133 accelerations over time, with a
    modest amount of replication (94 unique time inputs)."""
    if path is None:
        with resources.as_file(motorcycle_path()) as p:
            X, Y = read_observations(p)
    else:
        X, Y = read_observations(path)
    if X.shape[0] != MOTORCYCLE_N:
        warnings.warn(
            f"expected {MOTORCYCLE_N} rows in the motorcycle data, found {X.shape[0]}"
        )
    return find_reps(X, Y)
