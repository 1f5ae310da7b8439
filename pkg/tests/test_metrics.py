import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from repgp.errors import ValidationError
from repgp.metrics import EvalSet, nlpd, nmse, score, score_vs_moments


def test_score_exact_values():
    y = np.array([1.0, 2.0, 3.0])
    assert score(EvalSet(y, y, np.ones(3))) == pytest.approx(0.0)
    assert score(EvalSet(y, y, np.full(3, np.e))) == pytest.approx(-1.0)


def test_score_hand_summed(rng):
    y = rng.normal(0, 1, 5)
    m = rng.normal(0, 1, 5)
    v = rng.uniform(0.5, 2.0, 5)
    expected = np.mean([-(y[i] - m[i]) ** 2 / v[i] - np.log(v[i]) for i in range(5)])
    assert score(EvalSet(y, m, v)) == pytest.approx(expected, rel=1e-12)


def test_nmse_exact_values(rng):
    y = rng.normal(0, 2, 10)
    assert nmse(EvalSet(y, y, np.ones(10))) == 0.0
    const = np.full(10, y.mean())
    assert nmse(EvalSet(y, const, np.ones(10))) == pytest.approx(1.0, rel=1e-12)
    m = rng.normal(0, 1, 10)
    expected = np.mean((y - m) ** 2) / np.mean((y - y.mean()) ** 2)
    assert nmse(EvalSet(y, m, np.ones(10))) == pytest.approx(expected, rel=1e-12)


def test_nlpd_exact_values():
    y = np.zeros(4)
    assert nlpd(EvalSet(y, y, np.full(4, 1 / (2 * np.pi)))) == pytest.approx(0.0, abs=1e-14)
    assert nlpd(EvalSet(y, y, np.ones(4))) == pytest.approx(0.5 * np.log(2 * np.pi))


vectors = st.integers(2, 20).flatmap(
    lambda m: st.tuples(
        arrays(float, m, elements=st.floats(-50, 50, allow_nan=False)),
        arrays(float, m, elements=st.floats(-50, 50, allow_nan=False)),
        arrays(float, m, elements=st.floats(0.01, 100, allow_nan=False)),
    )
)


@given(vectors)
@settings(max_examples=60, deadline=None)
def test_nlpd_score_affine_identity(data):
    y, m, v = data
    e = EvalSet(y, m, v)
    assert nlpd(e) == pytest.approx(-score(e) / 2 + 0.5 * np.log(2 * np.pi), rel=1e-9, abs=1e-9)


@given(vectors, st.floats(-30, 30, allow_nan=False))
@settings(max_examples=40, deadline=None)
def test_nmse_shift_invariance(data, c):
    y, m, v = data
    if np.var(y) < 1e-8:
        return
    assert nmse(EvalSet(y + c, m + c, v)) == pytest.approx(nmse(EvalSet(y, m, v)), rel=1e-6)


def test_score_vs_moments_matches_expectation(rng):
    # the closed form equals the Monte Carlo average of the pointwise score
    mu, sig2 = 1.5, 4.0
    mean, var = 1.0, 3.0
    draws = rng.normal(mu, np.sqrt(sig2), 200_000)
    mc = np.mean(-((draws - mean) ** 2) / var - np.log(var))
    closed = score_vs_moments([mu], [sig2], [mean], [var])
    assert closed == pytest.approx(mc, abs=0.02)


def test_validation():
    with pytest.raises(ValidationError):
        EvalSet([1.0], [1.0], [0.0])
    with pytest.raises(ValidationError):
        EvalSet([1.0], [1.0, 2.0], [1.0])
    with pytest.raises(ValidationError):
        EvalSet([], [], [])
    with pytest.raises(ValidationError):
        nmse(EvalSet([2.0, 2.0], [1.0, 1.0], [1.0, 1.0]))
    with pytest.raises(ValidationError):
        score_vs_moments([1.0], [-0.5], [1.0], [1.0])
