import json

import numpy as np
import pytest

from repgp.design import ReplicatedDesign, find_reps
from repgp.errors import ValidationError
from repgp.hom import (
    HomModel,
    build_hom_model,
    default_g_bounds,
    dense_nll,
    dense_predict,
    hom_fit,
    hom_nll,
    hom_nll_grad,
    hom_predict,
)
from repgp.kernels import Family, KernelSpec, corr_matrix

from conftest import central_diff, rel_err, synthetic_replicates

FAMILIES = (Family.SQUARED_EXPONENTIAL, Family.MATERN52)


def test_scalar_case_closed_form():
    # single site, single observation
    y, g = 1.7, 0.3
    design = find_reps(np.array([[0.0]]), np.array([y]))
    val = hom_nll(np.array([1.0]), g, design)
    expected = 0.5 * np.log(2 * np.pi) + 0.5 * np.log(y**2 / (1 + g)) + 0.5 * np.log(1 + g) + 0.5
    assert val == pytest.approx(expected, rel=1e-12)


def test_nll_matches_dense_oracle_replicate_free(rng):
    X = rng.uniform(0, 1, (6, 2))
    Y = rng.normal(0, 1, 6)
    design = find_reps(X, Y)
    theta = rng.uniform(0.3, 3.0, 2)
    for fam in FAMILIES:
        a = hom_nll(theta, 0.2, design, fam)
        b = dense_nll(X, Y, theta, 0.2, fam)
        assert a == pytest.approx(b, rel=1e-12)


def test_nll_matches_dense_oracle_replicated(rng):
    for trial in range(10):
        d = int(rng.integers(1, 3))
        n = int(rng.integers(2, 8))
        X, Y = synthetic_replicates(rng, n, d, 4)
        design = find_reps(X, Y)
        theta = rng.uniform(0.3, 3.0, d)
        g = rng.uniform(0.05, 2.0)
        for fam in FAMILIES:
            a = hom_nll(theta, g, design, fam)
            b = dense_nll(X, Y, theta, g, fam)
            assert rel_err(a, b, floor=1.0).max() < 1e-10


def test_nll_large_nugget_limit(rng):
    X, Y = synthetic_replicates(rng, 5, 1, 3)
    design = find_reps(X, Y)
    theta = np.array([1.0])
    g = 1e6
    assert hom_nll(theta, g, design) == pytest.approx(dense_nll(X, Y, theta, g), rel=1e-10)


def test_gradient_matches_finite_differences(rng):
    worst = 0.0
    for trial in range(20):
        d = int(rng.integers(1, 3))
        n = int(rng.integers(3, 8))
        X, Y = synthetic_replicates(rng, n, d, 4)
        design = find_reps(X, Y)
        theta = rng.uniform(0.3, 3.0, d)
        g = rng.uniform(0.05, 2.0)
        fam = FAMILIES[trial % 2]
        x0 = np.append(theta, g)
        ga = hom_nll_grad(theta, g, design, fam)
        gf = central_diff(lambda x: hom_nll(x[:d], x[d], design, fam), x0)
        worst = max(worst, rel_err(ga, gf).max())
    assert worst < 1e-5


def test_gradient_at_fit_optimum_small(rng):
    X, Y = synthetic_replicates(rng, 12, 1, 3)
    design = find_reps(X, Y)
    model = hom_fit(design)
    grad = hom_nll_grad(model.kernel.lengthscales, model.g, design)
    # only interior coordinates must satisfy the first-order condition
    lo, hi = default_g_bounds(design)
    if lo * 1.01 < model.g < hi * 0.99:
        assert abs(grad[-1]) < 1e-3
    assert np.all(np.abs(grad[:-1]) < 1e-3) or model.fit_status != "Converged"


def test_gradient_doubled_counts_vs_dense_oracle(rng):
    # doubling every a_i with identical (Z0, S2) changes the gradient the
    # way the dense likelihood on the doubled synthetic data dictates
    X, Y = synthetic_replicates(rng, 4, 1, 3)
    design = find_reps(X, Y)
    doubled = ReplicatedDesign(X0=design.X0, Z0=design.Z0, mult=2 * design.mult,
                               S2=design.S2)
    theta = np.array([0.8])
    g = 0.4
    ga = hom_nll_grad(theta, g, doubled)
    # rebuild raw data with doubled replicates carrying the same statistics
    ys = []
    for i in range(doubled.n):
        a = int(doubled.mult[i])
        c = np.sqrt(doubled.S2[i])
        half = a // 2
        ys.append(np.concatenate([doubled.Z0[i] + c * np.ones(half),
                                  doubled.Z0[i] - c * np.ones(half)]))
    X2 = np.repeat(doubled.X0, doubled.mult, axis=0)
    Y2 = np.concatenate(ys)
    gf = central_diff(lambda x: dense_nll(X2, Y2, x[:1], x[1]), np.append(theta, g))
    assert rel_err(ga, gf).max() < 1e-5


def test_fit_constant_response_pins_nugget_at_lower_bound(rng):
    X = rng.uniform(0, 1, (8, 1))
    design = find_reps(X, np.full(8, 2.5))
    model = hom_fit(design)
    assert model.g == pytest.approx(default_g_bounds(design)[0], rel=1e-6)


def test_predict_far_field_reverts_to_prior(rng):
    X, Y = synthetic_replicates(rng, 6, 1, 2)
    design = find_reps(X, Y)
    model = build_hom_model(np.array([0.5]), 0.1, design, Family.SQUARED_EXPONENTIAL)
    p = hom_predict(model, np.array([[500.0]]))
    assert abs(p.mean[0]) < 1e-10
    assert p.sd2[0] == pytest.approx(model.nu_hat, rel=1e-10)
    assert p.nugs[0] == pytest.approx(model.nu_hat * model.g, rel=1e-12)


def test_predict_interpolates_heavily_replicated_site():
    X0 = np.array([[0.0], [1.0]])
    ys = np.concatenate([np.full(200, 3.0) + np.tile([0.01, -0.01], 100), [1.0]])
    X = np.vstack([np.repeat(X0[:1], 200, axis=0), X0[1:]])
    design = find_reps(X, ys)
    model = build_hom_model(np.array([0.5]), 1e-6, design, Family.SQUARED_EXPONENTIAL)
    p = hom_predict(model, X0[:1])
    assert p.mean[0] == pytest.approx(3.0, abs=1e-3)


def test_predict_matches_dense_oracle(rng):
    for trial in range(10):
        d = int(rng.integers(1, 3))
        X, Y = synthetic_replicates(rng, int(rng.integers(3, 8)), d, 4)
        design = find_reps(X, Y)
        theta = rng.uniform(0.3, 3.0, d)
        g = rng.uniform(0.05, 2.0)
        Xnew = rng.uniform(0, 1, (5, d))
        fam = FAMILIES[trial % 2]
        model = build_hom_model(theta, g, design, fam)
        p = hom_predict(model, Xnew)
        m, v = dense_predict(X, Y, theta, np.full(len(Y), g), Xnew, fam)
        assert rel_err(p.mean, m, floor=1e-9).max() < 1e-10
        assert rel_err(p.sd2, v, floor=1e-9).max() < 1e-10


def test_woodbury_component_identities(rng):
    # the three building blocks behind the unique-n likelihood
    for trial in range(10):
        d = int(rng.integers(1, 3))
        X, Y = synthetic_replicates(rng, int(rng.integers(2, 8)), d, 4)
        design = find_reps(X, Y)
        lam = rng.uniform(0.05, 2.0, design.n)
        lamN = np.repeat(lam, design.mult)
        spec = KernelSpec(FAMILIES[trial % 2], rng.uniform(0.3, 3.0, d))
        CN = corr_matrix(spec, X)
        M = CN + np.diag(lamN)
        lhs_quad = float(Y @ np.linalg.solve(M, Y))
        Cn = corr_matrix(spec, design.X0)
        ups = Cn + np.diag(lam / design.mult)
        rhs_quad = (
            float(Y @ (Y / lamN))
            - float(design.Z0 @ (design.mult / lam * design.Z0))
            + float(design.Z0 @ np.linalg.solve(ups, design.Z0))
        )
        assert rel_err(lhs_quad, rhs_quad, floor=1.0).max() < 1e-10

        lhs_det = np.linalg.slogdet(M)[1]
        rhs_det = np.linalg.slogdet(ups)[1] + float(
            np.sum((design.mult - 1) * np.log(lam) + np.log(design.mult))
        )
        assert rel_err(lhs_det, rhs_det, floor=1.0).max() < 1e-10

        # variance-correction identity
        lhs_sv = float(Y @ (Y / lamN)) - float(design.Z0 @ (design.mult / lam * design.Z0))
        rhs_sv = float(np.sum(design.mult * design.S2 / lam))
        assert rel_err(lhs_sv, rhs_sv, floor=1.0).max() < 1e-10


def test_nll_invariant_to_permutations(rng):
    X, Y = synthetic_replicates(rng, 6, 1, 3)
    theta, g = np.array([0.7]), 0.3
    base = hom_nll(theta, g, find_reps(X, Y))
    perm = rng.permutation(len(Y))
    assert hom_nll(theta, g, find_reps(X[perm], Y[perm])) == pytest.approx(base, rel=1e-12)


def test_serialization_round_trip(rng):
    X, Y = synthetic_replicates(rng, 6, 2, 3)
    design = find_reps(X, Y)
    model = hom_fit(design)
    text = model.to_json()
    doc = json.loads(text)
    assert doc["version"] == 1 and doc["model"] == "hom"
    back = HomModel.from_json(text)
    Xnew = rng.uniform(0, 1, (4, 2))
    p1, p2 = hom_predict(model, Xnew), hom_predict(back, Xnew)
    np.testing.assert_allclose(p1.mean, p2.mean, rtol=1e-12)
    np.testing.assert_allclose(p1.sd2, p2.sd2, rtol=1e-12)


def test_prediction_dimension_mismatch(rng):
    X, Y = synthetic_replicates(rng, 4, 2, 2)
    model = hom_fit(find_reps(X, Y))
    with pytest.raises(ValidationError):
        hom_predict(model, np.zeros((2, 3)))


def test_invalid_nugget():
    design = find_reps(np.array([[0.0]]), np.array([1.0]))
    with pytest.raises(ValidationError):
        hom_nll(np.array([1.0]), 0.0, design)
