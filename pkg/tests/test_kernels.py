import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from repgp.errors import ValidationError
from repgp.kernels import Family, KernelSpec, corr, corr_matrix, corr_matrix_dtheta
from repgp.linalg import chol_jitter



FAMILIES = (Family.SQUARED_EXPONENTIAL, Family.MATERN52)

finite_floats = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
lengthscales = st.floats(0.1, 10.0, allow_nan=False)


@given(
    d=st.integers(1, 4),
    data=st.data(),
)
@settings(max_examples=50, deadline=None)
def test_corr_is_one_at_zero_distance(d, data):
    theta = data.draw(arrays(float, d, elements=lengthscales))
    x = data.draw(arrays(float, d, elements=finite_floats))
    for fam in FAMILIES:
        spec = KernelSpec(fam, theta)
        assert corr(spec, x, x) == pytest.approx(1.0, abs=1e-14)


def test_sqexp_unit_distance_value():
    spec = KernelSpec(Family.SQUARED_EXPONENTIAL, [1.0])
    assert corr(spec, [0.0], [1.0]) == pytest.approx(np.exp(-1.0), rel=1e-12)


def test_matern52_decays_monotonically_to_zero():
    spec = KernelSpec(Family.MATERN52, [1.0])
    dists = np.linspace(0.0, 40.0, 200)
    vals = np.array([corr(spec, [0.0], [r]) for r in dists])
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 1e-12
    assert vals[0] == 1.0


def test_corr_matrix_matches_pairwise_corr(rng):
    X1 = rng.uniform(0, 1, (4, 2))
    X2 = rng.uniform(0, 1, (3, 2))
    for fam in FAMILIES:
        spec = KernelSpec(fam, rng.uniform(0.3, 3.0, 2))
        C = corr_matrix(spec, X1, X2)
        for i in range(4):
            for j in range(3):
                assert C[i, j] == pytest.approx(corr(spec, X1[i], X2[j]), rel=1e-12)


def test_corr_matrix_single_point_and_symmetry(rng):
    for fam in FAMILIES:
        spec = KernelSpec(fam, [1.0, 2.0])
        np.testing.assert_allclose(corr_matrix(spec, [[0.3, 0.4]]), [[1.0]])
        X = rng.uniform(0, 1, (6, 2))
        C = corr_matrix(spec, X)
        np.testing.assert_allclose(C, C.T, rtol=0, atol=1e-15)
        np.testing.assert_allclose(np.diag(C), 1.0, atol=1e-15)


def test_corr_matrix_positive_semidefinite(rng):
    # PSD checked through a successful jittered Cholesky
    for trial in range(10):
        d = int(rng.integers(1, 4))
        X = rng.uniform(0, 2, (int(rng.integers(2, 12)), d))
        for fam in FAMILIES:
            spec = KernelSpec(fam, rng.uniform(0.1, 10.0, d))
            L, jit = chol_jitter(corr_matrix(spec, X))
            assert np.all(np.isfinite(L))


def test_dtheta_diagonal_is_zero(rng):
    X = rng.uniform(0, 1, (5, 2))
    for fam in FAMILIES:
        spec = KernelSpec(fam, [0.5, 1.5])
        for k in range(2):
            dC = corr_matrix_dtheta(spec, X, k)
            np.testing.assert_allclose(np.diag(dC), 0.0, atol=1e-15)


def test_dtheta_sqexp_closed_form(rng):
    theta = np.array([0.7, 2.3])
    spec = KernelSpec(Family.SQUARED_EXPONENTIAL, theta)
    X = rng.uniform(0, 1, (5, 2))
    C = corr_matrix(spec, X)
    for k in range(2):
        diff = X[:, k, None] - X[None, :, k]
        np.testing.assert_allclose(
            corr_matrix_dtheta(spec, X, k), C * diff**2 / theta[k] ** 2, rtol=1e-12
        )


def test_dtheta_matches_finite_differences(rng):
    for trial in range(8):
        d = int(rng.integers(1, 3))
        X = rng.uniform(0, 2, (6, d))
        theta = rng.uniform(0.1, 10.0, d)
        for fam in FAMILIES:
            for k in range(d):
                dC = corr_matrix_dtheta(KernelSpec(fam, theta), X, k)

                def entry(t):
                    return corr_matrix(KernelSpec(fam, t), X)

                h = 1e-6 * theta[k]
                tp, tm = theta.copy(), theta.copy()
                tp[k] += h
                tm[k] -= h
                fd = (entry(tp) - entry(tm)) / (2 * h)
                scale = np.abs(dC).max()
                np.testing.assert_allclose(dC, fd, rtol=1e-6, atol=1e-6 * max(scale, 1e-12))


def test_validation_errors():
    with pytest.raises(ValidationError):
        KernelSpec(Family.SQUARED_EXPONENTIAL, [1.0, -1.0])
    with pytest.raises(ValidationError):
        KernelSpec(Family.MATERN52, [0.0])
    spec = KernelSpec(Family.SQUARED_EXPONENTIAL, [1.0, 1.0])
    with pytest.raises(ValidationError):
        corr(spec, [0.0], [0.0, 0.0])
    with pytest.raises(ValidationError):
        corr_matrix(spec, np.zeros((3, 3)))
    with pytest.raises(ValidationError):
        corr_matrix_dtheta(spec, np.zeros((3, 2)), 2)
