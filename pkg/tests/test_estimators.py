import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from kernel_etc.estimators import (Dataset, DivergenceError, Kind, SingularSystemError, VarianceUnsupported,
                                   cholesky_with_jitter, fit_interpolator_gd, fit_model, predict,
                                   rkhs_norm_of)
from kernel_etc.kernels import cross_gram, gram, make_spec


def gauss(d, g=4.0):
    return make_spec("gaussian", d, g=g)


def random_data(rng, N, d, scale=1.0):
    return Dataset(rng.standard_normal((N, d)) * scale, rng.standard_normal(N))


def test_single_point():
    spec = gauss(3)
    x = np.array([0.1, -0.2, 0.3])
    m = fit_model(Kind.KERNEL_INTERP, spec, Dataset(x[None, :], [3.5]))
    assert m.coeffs == pytest.approx([3.5])
    assert predict(m, x) == pytest.approx(3.5)
    assert rkhs_norm_of(fit_model(Kind.KERNEL_INTERP, spec, Dataset(x[None, :], [2.0]))) == pytest.approx(2.0)


def test_zero_targets(rng):
    spec = gauss(4)
    data = Dataset(rng.standard_normal((6, 4)), np.zeros(6))
    for kind in Kind:
        m = fit_model(kind, spec, data, 1.0 if "ridge" in kind.value else 0.0)
        assert np.all(m.coeffs == 0)
        assert np.all(predict(m, rng.standard_normal((5, 4))) == 0)
        assert rkhs_norm_of(m) == 0


def test_interpolates_against_dense_solve(rng):
    spec = gauss(5)
    data = random_data(rng, 5, 5)
    m = fit_model(Kind.KERNEL_INTERP, spec, data)
    np.testing.assert_allclose(predict(m, data.X), data.Y, atol=1e-8)
    np.testing.assert_allclose(m.coeffs, np.linalg.solve(gram(spec, data.X), data.Y), rtol=1e-9)


def test_ridgeless_limit(rng):
    spec = gauss(5)
    data = random_data(rng, 8, 5)
    a = fit_model(Kind.KERNEL_INTERP, spec, data)
    b = fit_model(Kind.KERNEL_RIDGE, spec, data, 1e-8)
    Xt = rng.standard_normal((100, 5))
    np.testing.assert_allclose(predict(b, Xt), predict(a, Xt), atol=1e-4)


def test_std_at_training_point_and_far_away(rng):
    spec = gauss(4)
    data = random_data(rng, 4, 4, 0.5)
    m = fit_model(Kind.KERNEL_INTERP, spec, data)
    mean, std = predict(m, data.X[2], want_std=True)
    assert mean == pytest.approx(data.Y[2], abs=1e-8)
    assert std <= 1e-6
    mean, std = predict(m, np.full(4, 9.0), want_std=True)
    assert abs(mean) < 1e-10 and std == pytest.approx(1.0, abs=1e-10)


def test_ridge_posterior_dense_oracle(rng):
    spec = gauss(3, g=1.0)
    data = random_data(rng, 3, 3)
    m = fit_model(Kind.KERNEL_RIDGE, spec, data, 1.0)
    x = rng.standard_normal(3)
    K = gram(spec, data.X) + np.eye(3)
    k = cross_gram(spec, data.X, x[None, :])[:, 0]
    mean = k @ np.linalg.inv(K) @ data.Y
    var = 1.0 - k @ np.linalg.inv(K) @ k
    got = predict(m, x, want_std=True)
    assert got[0] == pytest.approx(mean, rel=1e-12)
    assert got[1] == pytest.approx(math.sqrt(var), rel=1e-12)


def test_rkhs_norm_identity(rng):
    spec = gauss(4)
    data = random_data(rng, 6, 4)
    m = fit_model(Kind.KERNEL_INTERP, spec, data)
    direct = math.sqrt(data.Y @ np.linalg.solve(gram(spec, data.X), data.Y))
    assert rkhs_norm_of(m) == pytest.approx(direct, rel=1e-9)


def test_linear_kinds(rng):
    X = rng.standard_normal((4, 10))
    Y = rng.standard_normal(4)
    m = fit_model(Kind.LINEAR_MIN_NORM, None, Dataset(X, Y))
    np.testing.assert_allclose(X @ m.coeffs, Y, atol=1e-10)
    np.testing.assert_allclose(m.coeffs, np.linalg.pinv(X) @ Y, atol=1e-10)
    assert rkhs_norm_of(m) == pytest.approx(np.linalg.norm(m.coeffs))
    r = fit_model(Kind.LINEAR_RIDGE, None, Dataset(X, Y), 1.0)
    np.testing.assert_allclose(r.coeffs, np.linalg.solve(X.T @ X + np.eye(10), X.T @ Y), rtol=1e-10)
    with pytest.raises(VarianceUnsupported, match="variance unsupported"):
        predict(m, X[0], want_std=True)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 3)), [])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), [1.0])
    with pytest.raises(ValueError):
        Dataset([[np.inf, 0]], [1.0])
    with pytest.raises(ValueError):
        Dataset([[11.0, 0]], [1.0])
    with pytest.raises(ValueError):
        fit_model(Kind.KERNEL_INTERP, None, Dataset([[0.0, 0]], [1.0]))


def test_jitter_on_duplicates(rng):
    spec = gauss(3)
    x = rng.standard_normal(3)
    m = fit_model(Kind.KERNEL_INTERP, spec, Dataset(np.stack([x, x]), [1.0, 1.0]))
    assert m.jitter > 0
    assert predict(m, x) == pytest.approx(1.0, abs=1e-6)


def test_singular_system_reports_condition():
    A = -np.eye(3)
    with pytest.raises(SingularSystemError) as err:
        cholesky_with_jitter(A)
    assert err.value.condition == pytest.approx(1.0)


# gradient-descent oracle path

def test_gd_zero_targets(rng):
    data = Dataset(rng.standard_normal((5, 3)), np.zeros(5))
    m = fit_interpolator_gd(gauss(3), data, steps=10, rate=0.1)
    assert np.all(m.coeffs == 0)


def test_gd_matches_direct_solve(rng):
    spec = gauss(6, g=1.0)
    data = random_data(rng, 10, 6)
    lam = np.linalg.eigvalsh(gram(spec, data.X))
    m = fit_interpolator_gd(spec, data, steps=200000, rate=1.0 / lam[-1])
    ref = fit_model(Kind.KERNEL_INTERP, spec, data)
    Xt = rng.standard_normal((100, 6))
    np.testing.assert_allclose(predict(m, Xt), predict(ref, Xt), atol=1e-4)


def test_gd_divergence(rng):
    spec = gauss(4, g=1.0)
    data = random_data(rng, 8, 4)
    lam_max = np.linalg.eigvalsh(gram(spec, data.X))[-1]
    with pytest.raises(DivergenceError, match="smaller rate"):
        fit_interpolator_gd(spec, data, steps=5000, rate=2.0 / lam_max + 0.5)


# properties

@st.composite
def instances(draw, max_n=12):
    N = draw(st.integers(1, max_n))
    d = draw(st.integers(2, 10))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    return rng, Dataset(rng.standard_normal((N, d)), rng.uniform(-5, 5, N))


@settings(max_examples=100)
@given(instances())
def test_interpolation_property(inst):
    rng, data = inst
    m = fit_model(Kind.KERNEL_INTERP, gauss(data.X.shape[1]), data)
    assert np.max(np.abs(predict(m, data.X) - data.Y)) <= 1e-6 * (1 + np.max(np.abs(data.Y)))


@settings(max_examples=60)
@given(instances(8))
def test_min_norm_optimality(inst):
    rng, data = inst
    N, d = data.X.shape
    spec = gauss(d)
    m = fit_model(Kind.KERNEL_INTERP, spec, data)
    U = np.vstack([data.X, rng.standard_normal((5, d))])
    G = gram(spec, U)
    # g = sum_u b_u K(., U_u) vanishing on the training rows: b in the null space of G[:N, :]
    _, s, vt = np.linalg.svd(G[:N, :])
    null = vt[np.sum(s > 1e-10 * s[0]):]
    b = null.T @ rng.standard_normal(null.shape[0])
    if b @ G @ b < 1e-10:
        return
    a = np.concatenate([m.coeffs, np.zeros(5)])
    assert (a + b) @ G @ (a + b) > a @ G @ a


@settings(max_examples=60)
@given(instances())
def test_ridge_shrinkage(inst):
    rng, data = inst
    spec = gauss(data.X.shape[1])
    norms = [rkhs_norm_of(fit_model(Kind.KERNEL_RIDGE, spec, data, lam)) for lam in (1e-8, 1e-4, 1.0, 10.0)]
    assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(norms, norms[1:]))


@settings(max_examples=60)
@given(instances(), st.sampled_from(["gaussian", "laplace", "matern", "rational_quadratic"]))
def test_posterior_std_bounded(inst, profile):
    rng, data = inst
    d = data.X.shape[1]
    kw = {"gaussian": {"g": 4}, "laplace": {"g": 1}, "matern": {"ell": 1, "nu": 2.5},
          "rational_quadratic": {"alpha": 1, "g": 1}}[profile]
    m = fit_model(Kind.KERNEL_RIDGE, make_spec(profile, d, **kw), data, 1.0)
    _, std = predict(m, rng.standard_normal((20, d)), want_std=True)
    assert np.all(std >= 0) and np.all(std <= 1 + 1e-12)


@settings(max_examples=60)
@given(instances(), st.sampled_from(list(Kind)))
def test_linearity_in_targets(inst, kind):
    rng, data = inst
    spec = gauss(data.X.shape[1])
    lam = 1.0 if "ridge" in kind.value else 0.0
    Y2 = rng.standard_normal(len(data))
    f1 = fit_model(kind, spec, data, lam)
    f2 = fit_model(kind, spec, Dataset(data.X, Y2), lam)
    f12 = fit_model(kind, spec, Dataset(data.X, data.Y + Y2), lam)
    Xt = rng.standard_normal((10, data.X.shape[1]))
    if f1.jitter != f12.jitter or f2.jitter != f12.jitter:
        return
    np.testing.assert_allclose(predict(f12, Xt), predict(f1, Xt) + predict(f2, Xt), atol=1e-8)
