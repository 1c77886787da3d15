import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from asmfgp import kernels
from asmfgp.errors import DimensionMismatchError, InvalidSpecError, NonFiniteInputError
from asmfgp.kernels import Family, KernelSpec, kernel_eval, kernel_grad, kernel_matrix


def matern_1d(h, theta):
    r = math.sqrt(5.0) * abs(h) / theta
    return (1.0 + r + r * r / 3.0) * math.exp(-r)


def gauss_1d(h, theta):
    return math.exp(-((h / theta) ** 2))


def oracle(spec, x, x2):
    one = matern_1d if spec.family is Family.MATERN52 else gauss_1d
    th = spec.theta
    if spec.composition.value == "additive":
        return sum(a * one(x[i] - x2[i], th[i]) for i, a in enumerate(spec.variance))
    return spec.variance * math.prod(one(x[i] - x2[i], th[i]) for i in range(spec.dimension))


# --- examples ------------------------------------------------------------------

def test_zero_distance_is_one():
    spec = KernelSpec.product([0.3, 2.0, 7.0])
    x = np.array([0.1, 0.5, 0.9])
    assert kernel_eval(spec, x, x) == pytest.approx(1.0, abs=1e-15)


def test_matern_unit_distance_value():
    spec = KernelSpec.product([1.0])
    expected = (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))
    assert expected == pytest.approx(0.523994, abs=1e-6)
    assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(expected, rel=1e-14)


def test_additive_zero_distance_sums_components():
    spec = KernelSpec.additive([0.5, 0.8], [1.0, 1.0])
    assert kernel_eval(spec, [0.2, 0.4], [0.2, 0.4]) == pytest.approx(2.0)


def test_single_point_matrix_with_nugget():
    spec = KernelSpec.product([1.0])
    np.testing.assert_allclose(kernel_matrix(spec, [[0.3]], nugget=0.1), [[1.1]])


def test_nugget_only_on_identical_sets():
    spec = KernelSpec.product([1.0, 1.0])
    X = np.array([[0.1, 0.2], [0.5, 0.6]])
    K = kernel_matrix(spec, X, X + 0.1, nugget=0.5)
    assert K[0, 0] < 1.0
    assert kernel_matrix(spec, X, X.copy(), nugget=0.5)[0, 0] == pytest.approx(1.5)


def test_three_points_positive_definite(rng):
    spec = KernelSpec.product([1.0, 1.0])
    X = rng.uniform(size=(3, 2))
    assert np.all(np.linalg.eigvalsh(kernel_matrix(spec, X, nugget=1e-6)) > 0)


def test_matrix_entries_match_scalar_oracle(rng):
    for family in Family:
        for spec in (KernelSpec.product([0.4, 1.3], 2.5, family),
                     KernelSpec.isotropic(0.7, 2, 0.5, family),
                     KernelSpec.additive([0.4, 1.3], [0.2, 0.0], family)):
            X, Z = rng.uniform(size=(4, 2)), rng.uniform(size=(3, 2))
            K = kernel_matrix(spec, X, Z)
            ref = [[oracle(spec, a, b) for b in Z] for a in X]
            np.testing.assert_allclose(K, ref, rtol=1e-13, atol=1e-15)


def test_additive_alpha_derivative_is_component():
    spec = KernelSpec.additive([0.5, 0.9], [0.3, 1.7])
    X = np.random.default_rng(1).uniform(size=(6, 2))
    grads = kernel_grad(spec, X)
    comp = kernel_matrix(KernelSpec.product([0.5], 1.0), X[:, :1])
    np.testing.assert_array_equal(grads[2], comp)
    assert len(grads) == 5


def test_nugget_derivative_is_identity():
    X = np.random.default_rng(2).uniform(size=(4, 3))
    grads = kernel_grad(KernelSpec.product([1, 2, 3]), X)
    np.testing.assert_array_equal(grads[-1], np.eye(4))


def test_matern_lengthscale_derivative_fd():
    X = np.random.default_rng(3).uniform(size=(5, 1))
    theta = 0.7
    dK = kernel_grad(KernelSpec.product([theta]), X)[0]
    h = 1e-5 * theta
    fd = (kernel_matrix(KernelSpec.product([theta + h]), X)
          - kernel_matrix(KernelSpec.product([theta - h]), X)) / (2 * h)
    off = ~np.eye(5, dtype=bool)
    np.testing.assert_allclose(dK[off], fd[off], rtol=1e-6)
    np.testing.assert_allclose(np.diag(dK), 0.0, atol=1e-12)


def test_gradient_prior_covariance_matches_second_derivative():
    for family in Family:
        spec = KernelSpec.product([0.6, 1.1], 2.0, family)
        x = np.array([0.3, 0.4])
        h = 1e-4
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            # d2 k(x, x') / dx_i dx'_i at x = x' equals -d2 k(u)/du_i^2 at u = 0
            second = (kernel_eval(spec, x + e, x) - 2 * kernel_eval(spec, x, x)
                      + kernel_eval(spec, x - e, x)) / h**2
            assert kernels.gradient_prior_covariance(spec)[i, i] == pytest.approx(-second, rel=1e-5)


def test_input_gradient_fd(rng):
    for spec in (KernelSpec.product([0.5, 0.8, 1.2], 1.3),
                 KernelSpec.additive([0.5, 0.8, 1.2], [0.1, 0.5, 1.0], Family.GAUSSIAN)):
        X = rng.uniform(size=(4, 3))
        xs = rng.uniform(size=(1, 3))
        _, G = kernels.input_gradient(spec, xs, X)
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1e-6
            fd = (kernels.covariance(spec, xs + e, X) - kernels.covariance(spec, xs - e, X)) / 2e-6
            np.testing.assert_allclose(G[0, :, i], fd[0], rtol=1e-5, atol=1e-9)


# --- errors --------------------------------------------------------------------

def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        kernel_eval(KernelSpec.product([1.0, 1.0]), [0.0], [0.0, 1.0])
    with pytest.raises(DimensionMismatchError):
        kernel_matrix(KernelSpec.product([1.0, 1.0]), np.zeros((3, 3)))


def test_non_finite_input():
    with pytest.raises(NonFiniteInputError):
        kernel_eval(KernelSpec.product([1.0]), [np.nan], [0.0])


@pytest.mark.parametrize("kwargs", [
    dict(lengthscales=[0.0, 1.0]),
    dict(lengthscales=[-1.0, 1.0]),
])
def test_invalid_lengthscales(kwargs):
    with pytest.raises(InvalidSpecError):
        KernelSpec.product(**kwargs)


def test_invalid_variances():
    with pytest.raises(InvalidSpecError):
        KernelSpec.additive([1.0, 1.0], [0.0, 0.0])
    with pytest.raises(InvalidSpecError):
        KernelSpec.additive([1.0, 1.0], [-0.1, 1.0])
    with pytest.raises(InvalidSpecError):
        KernelSpec.product([1.0], variance=0.0)


def test_spec_round_trip():
    for spec in (KernelSpec.product([0.3, 0.4], 2.0), KernelSpec.isotropic(0.5, 4),
                 KernelSpec.additive([1, 2], [0.5, 0.25], Family.GAUSSIAN)):
        assert KernelSpec.from_dict(spec.to_dict()) == spec


# --- properties ----------------------------------------------------------------

families = st.sampled_from(list(Family))
lengthscale = st.floats(0.05, 5.0)
unit = st.floats(0.0, 1.0)


@st.composite
def specs(draw, d=None):
    d = d or draw(st.integers(1, 4))
    fam = draw(families)
    kind = draw(st.sampled_from(["product", "isotropic", "additive"]))
    if kind == "product":
        return KernelSpec.product(draw(st.lists(lengthscale, min_size=d, max_size=d)),
                                  draw(st.floats(0.1, 3.0)), fam)
    if kind == "isotropic":
        return KernelSpec.isotropic(draw(lengthscale), d, draw(st.floats(0.1, 3.0)), fam)
    alphas = draw(st.lists(st.floats(0.0, 2.0), min_size=d, max_size=d))
    alphas[0] = max(alphas[0], 0.1)
    return KernelSpec.additive(draw(st.lists(lengthscale, min_size=d, max_size=d)), alphas, fam)


@st.composite
def spec_and_design(draw, n_min=2, n_max=8):
    spec = draw(specs())
    n = draw(st.integers(n_min, n_max))
    X = draw(arrays(float, (n, spec.dimension), elements=unit))
    return spec, X


@given(spec_and_design())
def test_matrix_symmetric_and_factorizable(args):
    spec, X = args
    K = kernel_matrix(spec, X, nugget=1e-8 * spec.variance_normalization)
    assert np.array_equal(K, K.T)
    # duplicated rows are allowed, so widen the guard relative to the matrix size
    jit = 1e-8 * spec.variance_normalization * X.shape[0]
    np.linalg.cholesky(K + jit * np.eye(len(K)))


@given(spec_and_design(), arrays(float, 4, elements=st.floats(-3, 3)))
def test_translation_invariance(args, shift):
    spec, X = args
    s = shift[: spec.dimension]
    np.testing.assert_allclose(kernel_matrix(spec, X + s, X[::-1] + s),
                               kernel_matrix(spec, X, X[::-1]), rtol=1e-10, atol=1e-12)


@given(specs(), arrays(float, 4, elements=unit), arrays(float, 4, elements=unit))
def test_eval_symmetric_and_normalized(spec, a, b):
    a, b = a[: spec.dimension], b[: spec.dimension]
    assert kernel_eval(spec, a, b) == pytest.approx(kernel_eval(spec, b, a), rel=1e-14)
    assert kernel_eval(spec, a, a) == pytest.approx(spec.variance_normalization, rel=1e-14)


@given(st.integers(1, 4), lengthscale, families, arrays(float, (5, 4), elements=unit))
def test_isotropic_equals_product(d, theta, fam, X):
    X = X[:, :d]
    iso = KernelSpec.isotropic(theta, d, 1.7, fam)
    prod = KernelSpec.product([theta] * d, 1.7, fam)
    np.testing.assert_allclose(kernel_matrix(iso, X), kernel_matrix(prod, X), rtol=1e-14)


def _bump(spec, k, h):
    ls = list(spec.lengthscales)
    if k < len(ls):
        ls[k] += h
        return spec.with_params(lengthscales=ls)
    k -= len(ls)
    if isinstance(spec.variance, tuple):
        v = list(spec.variance)
        v[k] += h
        return spec.with_params(variance=v)
    return spec.with_params(variance=spec.variance + h)


@given(spec_and_design(n_min=5, n_max=5))
def test_kernel_grad_matches_fd(args):
    spec, X = args
    grads = kernel_grad(spec, X)[:-1]
    params = list(spec.lengthscales) + list(np.atleast_1d(spec.variance))
    for k, g in enumerate(grads):
        h = 1e-5 * max(params[k], 1e-2)
        if params[k] - h <= 0:
            continue
        fd = (kernel_matrix(_bump(spec, k, h), X) - kernel_matrix(_bump(spec, k, -h), X)) / (2 * h)
        scale = max(np.abs(fd).max(), 1e-6)
        assert np.abs(g - fd).max() <= 1e-5 * scale + 1e-9
        assert np.array_equal(g, g.T)
