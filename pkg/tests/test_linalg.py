import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nard.errors import ConditioningError, NotPositiveDefiniteError
from nard.linalg import (
    RankOneUpdate,
    assert_pd,
    factor_with_jitter,
    rank_one_det_ratio,
    rank_one_inv_update,
    spectral_radius,
    woodbury_c_inverse,
)


def dense_c(x, k):
    return np.eye(x.shape[1]) + x.T @ np.diag(1.0 / k) @ x


# woodbury_c_inverse

def test_woodbury_zero_x_is_identity():
    np.testing.assert_array_equal(woodbury_c_inverse(np.zeros((3, 4)), np.ones(3)), np.eye(4))


def test_woodbury_scalar():
    np.testing.assert_allclose(woodbury_c_inverse(np.array([[1.0]]), np.array([1.0])), [[0.5]], rtol=1e-14)


def test_woodbury_random_matches_dense(rng):
    x = rng.standard_normal((3, 5))
    k = rng.uniform(0.5, 2.0, 3)
    cinv = woodbury_c_inverse(x, k)
    np.testing.assert_allclose(cinv @ dense_c(x, k), np.eye(5), atol=1e-10)
    np.testing.assert_array_equal(cinv, cinv.T)


def test_woodbury_empty_active_set():
    np.testing.assert_array_equal(woodbury_c_inverse(np.zeros((0, 3)), np.zeros(0)), np.eye(3))


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 6), n=st.integers(1, 8), seed=st.integers(0, 2**31 - 1))
def test_woodbury_property(p, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((p, n))
    k = rng.uniform(0.1, 5.0, p)
    np.testing.assert_allclose(woodbury_c_inverse(x, k) @ dense_c(x, k), np.eye(n), atol=1e-8)


# rank-one lemmas

def test_det_ratio_zero_phi():
    u = RankOneUpdate(np.eye(3), np.zeros(3), 2.0)
    assert rank_one_det_ratio(u) == 1.0


def test_det_ratio_large_alpha():
    u = RankOneUpdate(np.eye(3), np.ones(3), 1e15)
    assert abs(rank_one_det_ratio(u) - 1.0) < 1e-14


def test_det_ratio_hand_value():
    u = RankOneUpdate(np.eye(2), np.array([1.0, 1.0]), 2.0)
    assert rank_one_det_ratio(u) == pytest.approx(2.0, abs=1e-15)


def test_inv_update_zero_phi():
    c = np.array([[2.0, 0.3], [0.3, 1.0]])
    np.testing.assert_allclose(rank_one_inv_update(RankOneUpdate(c, np.zeros(2), 1.0)), c)


def test_inv_update_scalar():
    out = rank_one_inv_update(RankOneUpdate(np.array([[1.0]]), np.array([1.0]), 1.0))
    np.testing.assert_allclose(out, [[0.5]], rtol=1e-15)


def test_inv_update_random_matches_dense(rng):
    a = rng.standard_normal((4, 6))
    c_prev = np.eye(4) + a @ a.T / 6
    phi = rng.standard_normal(4)
    alpha = 0.7
    out = rank_one_inv_update(RankOneUpdate(np.linalg.inv(c_prev), phi, alpha))
    np.testing.assert_allclose(out, np.linalg.inv(c_prev + np.outer(phi, phi) / alpha), atol=1e-10)


def test_rank_one_reproduces_woodbury_for_every_feature(rng):
    p, n = 6, 7
    x = rng.standard_normal((p, n))
    k = rng.uniform(0.3, 2.0, p)
    full = woodbury_c_inverse(x, k)
    for i in range(p):
        keep = np.arange(p) != i
        prev = woodbury_c_inverse(x[keep], k[keep])
        out = rank_one_inv_update(RankOneUpdate(prev, x[i], k[i]))
        np.testing.assert_allclose(out, full, atol=1e-10)


def test_det_product_matches_direct(rng):
    p, n = 5, 6
    x = rng.standard_normal((p, n))
    k = rng.uniform(0.3, 2.0, p)
    prod = 1.0
    for i in range(p):
        prev = woodbury_c_inverse(x[:i], k[:i])
        prod *= rank_one_det_ratio(RankOneUpdate(prev, x[i], k[i]))
    direct = np.linalg.det(dense_c(x, k))
    assert prod == pytest.approx(direct, rel=1e-8)


def test_rank_one_rejects_bad_input():
    with pytest.raises(ValueError):
        RankOneUpdate(np.eye(2), np.ones(2), 0.0)
    with pytest.raises(ValueError):
        RankOneUpdate(np.eye(3), np.ones(2), 1.0)


# spectral_radius

def test_spectral_radius_identity():
    rho, ok = spectral_radius(np.eye(4))
    assert ok and rho == pytest.approx(1.0, rel=1e-12)


def test_spectral_radius_diagonal():
    rho, ok = spectral_radius(np.diag([3.0, 1.0]))
    assert ok and rho == pytest.approx(9.0, rel=1e-9)


def test_spectral_radius_random_matches_eigh(rng):
    x = rng.standard_normal((5, 8))
    rho, ok = spectral_radius(x, tol=1e-14)
    assert ok
    assert rho == pytest.approx(np.linalg.eigvalsh(x @ x.T)[-1], rel=1e-8)


def test_spectral_radius_wide_and_tall_agree(rng):
    x = rng.standard_normal((9, 4))
    assert spectral_radius(x, tol=1e-14)[0] == pytest.approx(spectral_radius(x.T, tol=1e-14)[0], rel=1e-10)


def test_spectral_radius_fallback_start():
    # all-ones start is annihilated; top eigenvector is (1, -1)/sqrt(2)
    x = np.array([[1.0, -1.0]])
    rho, ok = spectral_radius(x.T @ x)
    assert ok and rho == pytest.approx(4.0, rel=1e-10)


def test_spectral_radius_flags_non_convergence(rng):
    x = rng.standard_normal((6, 6))
    rho, ok = spectral_radius(x, tol=1e-300, max_iter=2)
    assert not ok and rho > 0


def test_spectral_radius_rayleigh_bound(rng):
    x = rng.standard_normal((7, 11))
    rho, _ = spectral_radius(x, tol=1e-12)
    g = x @ x.T
    for _ in range(100):
        v = rng.standard_normal(7)
        assert rho * (1 + 1e-9) >= v @ g @ v / (v @ v)


def test_spectral_radius_rejects_zero():
    with pytest.raises(ValueError):
        spectral_radius(np.zeros((2, 2)))


# assert_pd / jitter

def test_assert_pd_identity():
    assert assert_pd(np.eye(3)).logdet() == 0.0


def test_assert_pd_reports_pivot():
    with pytest.raises(NotPositiveDefiniteError) as exc:
        assert_pd(np.diag([1.0, -1.0]))
    assert exc.value.pivot == 2


def test_assert_pd_logdet_hand():
    assert assert_pd(np.array([[2.0, 1.0], [1.0, 2.0]])).logdet() == pytest.approx(np.log(3.0), rel=1e-14)


def test_assert_pd_solve_inverse(rng):
    a = rng.standard_normal((4, 4))
    a = a @ a.T + np.eye(4)
    fac = assert_pd(a)
    b = rng.standard_normal(4)
    np.testing.assert_allclose(a @ fac.solve(b), b, atol=1e-12)
    np.testing.assert_allclose(fac.inverse() @ a, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(fac.inv_diag(), np.diag(np.linalg.inv(a)), rtol=1e-12)


def test_assert_pd_rejects_asymmetric():
    with pytest.raises(ValueError):
        assert_pd(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_jitter_rescues_singular():
    a = np.ones((3, 3))
    fac = factor_with_jitter(a)
    assert fac.jitter > 0


def test_jitter_gives_up():
    with pytest.raises(ConditioningError) as exc:
        factor_with_jitter(np.diag([1.0, -1.0]))
    assert exc.value.suggested_jitter > 0
