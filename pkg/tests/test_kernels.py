import numpy as np
import pytest

from nard.errors import ParameterError
from nard.kernels import KernelSpec, Polynomial, RbfRandomFeatures, expand, polynomial_size
from nard.model import Dataset


def test_degree_two_with_bias_rows():
    a, b = 1.5, -2.0
    data = Dataset(np.array([[a], [b]]), np.zeros((1, 1)))
    out = expand(data, KernelSpec(Polynomial(2, True)))
    np.testing.assert_array_equal(out.x[:, 0], [1, a, b, a * a, a * b, b * b])
    assert out.d == 6
    assert out.feature_names == ["1", "x0", "x1", "x0*x0", "x0*x1", "x1*x1"]


@pytest.mark.parametrize("d", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("degree", [2, 3])
@pytest.mark.parametrize("bias", [True, False])
def test_monomial_counts(d, degree, bias):
    data = Dataset(np.ones((d, 3)), np.zeros((1, 3)))
    out = expand(data, KernelSpec(Polynomial(degree, bias)))
    from math import comb
    expected = comb(d + degree, degree) - (0 if bias else 1)
    assert out.d == expected == polynomial_size(d, degree, bias)
    # every monomial appears once
    assert len(set(out.feature_names)) == out.d


def test_polynomial_of_zero_is_bias_only():
    out = expand(Dataset(np.zeros((3, 4)), np.zeros((1, 4))), KernelSpec(Polynomial(3)))
    np.testing.assert_array_equal(out.x[0], 1.0)
    assert not out.x[1:].any()


def test_identity_kernel_returns_same_object():
    data = Dataset(np.ones((2, 2)), np.ones((1, 2)))
    assert expand(data, KernelSpec()) is data


def test_explosion_guard():
    data = Dataset(np.ones((200, 1)), np.zeros((1, 1)))
    with pytest.raises(ParameterError):
        expand(data, KernelSpec(Polynomial(3)))


def test_spec_validation():
    with pytest.raises(ParameterError):
        Polynomial(4)
    with pytest.raises(ParameterError):
        RbfRandomFeatures(gamma=0.0)
    with pytest.raises(ParameterError):
        RbfRandomFeatures(n_features=0)
    with pytest.raises(ParameterError):
        KernelSpec("poly")


def unit_columns(rng, d, n):
    x = rng.standard_normal((d, n))
    return x / np.linalg.norm(x, axis=0)


def rbf_errors(gamma, dim, seed, n=30):
    x = unit_columns(np.random.default_rng(seed), 4, n)
    out = expand(Dataset(x, np.zeros((1, n))), KernelSpec(RbfRandomFeatures(gamma, dim, seed=seed)))
    sq = np.sum((x[:, :, None] - x[:, None, :]) ** 2, axis=0)
    return out.x.T @ out.x - np.exp(-gamma * sq)


def test_rbf_approximates_gaussian_kernel():
    # per-pair Monte-Carlo error has standard deviation <= 1/sqrt(2D) ~ 0.016,
    # so each inner product sits within 0.05; the max over many pairs can exceed it
    err = np.abs(rbf_errors(0.8, 2000, seed=3))
    pairs = err[np.triu_indices(err.shape[0])]
    assert np.mean(pairs <= 0.05) >= 0.95
    assert pairs.mean() <= 0.05


def test_rbf_estimate_is_unbiased():
    mean_err = np.mean([rbf_errors(0.5, 200, seed=s, n=6) for s in range(200)], axis=0)
    assert np.max(np.abs(mean_err)) <= 0.01


def test_rbf_is_deterministic():
    x = np.random.default_rng(0).standard_normal((3, 5))
    data = Dataset(x, np.zeros((1, 5)))
    a = expand(data, KernelSpec(RbfRandomFeatures(1.0, 50, seed=4)))
    b = expand(data, KernelSpec(RbfRandomFeatures(1.0, 50, seed=4)))
    c = expand(data, KernelSpec(RbfRandomFeatures(1.0, 50, seed=5)))
    assert a.x.tobytes() == b.x.tobytes()
    assert a.x.tobytes() != c.x.tobytes()
    assert a.d == 50 and a.feature_names[0].startswith("rff0")
