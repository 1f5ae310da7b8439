import numpy as np
import pytest

from repgp.design import find_reps


def synthetic_replicates(rng, n, d, max_rep, noise_scale=1.0, x_scale=1.0):
    """Raw data whose collapsed statistics are exactly controllable.

    Per site, replicates are placed as +-c pairs around the site mean (odd
    counts add one point at the mean), so the raw variance is exact and the
    full-N oracles see data consistent with the unique-n statistics.
    """
    X0 = rng.uniform(0, x_scale, (n, d))
    mult = rng.integers(1, max_rep + 1, n)
    Xs, Ys = [], []
    for i in range(n):
        a = int(mult[i])
        m = rng.normal(0, 1)
        if a == 1:
            y = np.array([m])
        else:
            s = abs(rng.normal(0, noise_scale))
            c = s * np.sqrt(a / (a - 1)) if a % 2 else s
            half = a // 2
            y = np.concatenate([m + c * np.ones(half), m - c * np.ones(half), [m] if a % 2 else []])
        Xs.append(np.tile(X0[i], (a, 1)))
        Ys.append(y)
    return np.vstack(Xs), np.concatenate(Ys)


def random_design(rng, n, d, max_rep, **kw):
    X, Y = synthetic_replicates(rng, n, d, max_rep, **kw)
    return find_reps(X, Y), X, Y


def central_diff(f, x, step=1e-6):
    """Central finite differences with per-coordinate scaled steps."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
