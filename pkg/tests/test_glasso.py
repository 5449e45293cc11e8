import numpy as np
import pytest

from conftest import random_spd
from oracles import brute_force_glasso
from nard.errors import DataError, FoldError, NotPositiveDefiniteError, ParameterError
from nard.glasso import (
    GlassoConfig,
    cv_scores,
    glasso_fit,
    glasso_objective,
    kfold_splits,
    kkt_residual,
    select_lambda,
)
from nard.model import Dataset
from nard.synth import sample_noise


# glasso_objective

def test_objective_identity():
    assert glasso_objective(np.eye(4), np.eye(4), 0.0) == pytest.approx(4.0)


def test_objective_scalar():
    assert glasso_objective(np.array([[2.0]]), np.array([[0.5]]), 0.3) == pytest.approx(np.log(2) + 1, rel=1e-14)


def test_objective_hand_2x2():
    assert glasso_objective(np.array([[1, 0.5], [0.5, 1]]), np.eye(2), 1.0) == pytest.approx(2.0)


def test_objective_penalty_offdiag_only():
    om = np.array([[2.0, -0.5], [-0.5, 1.0]])
    s = np.eye(2)
    base = glasso_objective(s, om, 0.0)
    assert glasso_objective(s, om, 0.1) == pytest.approx(base + 0.1 * 1.0)
    assert glasso_objective(s, om, 0.1, penalize_diagonal=True) == pytest.approx(base + 0.1 * 4.0)


def test_objective_non_pd_raises():
    with pytest.raises(NotPositiveDefiniteError):
        glasso_objective(np.eye(2), -np.eye(2), 0.1)


# glasso_fit

def test_zero_lambda_gives_inverse(rng):
    s = random_spd(rng, 5)
    res = glasso_fit(s, GlassoConfig(lam=0.0, tol=1e-10, max_iter=1000))
    assert res.converged
    np.testing.assert_allclose(res.omega_hat, np.linalg.inv(s), atol=1e-6)


def test_large_lambda_gives_exact_diagonal(rng):
    s = random_spd(rng, 4)
    lam = np.max(np.abs(s - np.diag(np.diag(s))))
    res = glasso_fit(s, GlassoConfig(lam=lam))
    off = res.omega_hat - np.diag(np.diag(res.omega_hat))
    assert np.all(off == 0.0)
    np.testing.assert_allclose(np.diag(res.omega_hat), 1.0 / np.diag(s), rtol=1e-12)


def test_two_by_two_soft_threshold():
    s = np.array([[1.0, 0.6], [0.6, 1.0]])
    res = glasso_fit(s, GlassoConfig(lam=0.2, tol=1e-10))
    np.testing.assert_allclose(res.v_hat, [[1.0, 0.4], [0.4, 1.0]], atol=1e-6)
    np.testing.assert_allclose(res.omega_hat, np.linalg.inv([[1.0, 0.4], [0.4, 1.0]]), atol=1e-6)


def test_two_by_two_matches_brute_force():
    s = np.array([[1.0, 0.6], [0.6, 1.0]])
    res = glasso_fit(s, GlassoConfig(lam=0.2, tol=1e-10))
    np.testing.assert_allclose(res.omega_hat, brute_force_glasso(s, 0.2), atol=2e-3)


def test_penalized_diagonal_shifts_covariance():
    s = np.array([[1.0, 0.6], [0.6, 1.0]])
    res = glasso_fit(s, GlassoConfig(lam=0.2, tol=1e-10, penalize_diagonal=True))
    np.testing.assert_allclose(res.v_hat, [[1.2, 0.4], [0.4, 1.2]], atol=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_solution_properties(seed):
    rng = np.random.default_rng(seed)
    s = random_spd(rng, 6, ridge=0.2)
    cfg = GlassoConfig(lam=0.1, tol=1e-8, max_iter=500)
    res = glasso_fit(s, cfg)
    assert res.converged
    np.testing.assert_array_equal(res.omega_hat, res.omega_hat.T)
    assert np.max(np.abs(res.v_hat @ res.omega_hat - np.eye(6))) <= 1e-6
    assert kkt_residual(s, res.omega_hat, 0.1) <= 1e-5
    assert np.all(np.diff(res.objective_trace) <= 1e-10)
    assert np.all(np.linalg.eigvalsh(res.omega_hat) > 0)


def test_warm_start_reaches_same_solution(rng):
    s = random_spd(rng, 5)
    cold = glasso_fit(s, GlassoConfig(lam=0.05, tol=1e-9))
    warm = glasso_fit(s, GlassoConfig(lam=0.05, tol=1e-9), omega_init=cold.omega_hat)
    np.testing.assert_allclose(warm.omega_hat, cold.omega_hat, atol=1e-7)
    assert warm.iters <= 2


def test_non_pd_warm_start_is_ignored(rng):
    s = random_spd(rng, 3)
    res = glasso_fit(s, GlassoConfig(lam=0.05), omega_init=-np.eye(3))
    assert res.converged


def test_budget_exhaustion_reports_not_converged(rng):
    s = random_spd(rng, 8, ridge=0.05)
    res = glasso_fit(s, GlassoConfig(lam=0.01, tol=1e-14, max_iter=1))
    assert not res.converged and res.iters == 1


def test_input_validation():
    with pytest.raises(DataError):
        glasso_fit(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(DataError):
        glasso_fit(np.array([[1.0, 0.2], [0.0, 1.0]]))
    with pytest.raises(DataError):
        glasso_fit(np.ones((2, 3)))
    with pytest.raises(ParameterError):
        GlassoConfig(lam=-1.0)


# select_lambda

def _noise_data(omega, n, seed):
    rng = np.random.default_rng(seed)
    y = sample_noise(omega, n, rng)
    return Dataset(np.zeros((1, n)), y)


def test_singleton_and_duplicate_grid(rng):
    data = _noise_data(np.eye(3), 40, 0)
    folds = kfold_splits(data, 5, seed=0)
    assert select_lambda(folds, [0.3]) == 0.3
    assert select_lambda(folds, [0.2, 0.2]) == 0.2


def test_diagonal_truth_selects_more_than_smallest():
    data = _noise_data(np.eye(10), 200, 1)
    folds = kfold_splits(data, 5, seed=1)
    grid = np.logspace(-3, 0, 20)
    lam = select_lambda(folds, grid)
    assert lam > grid[0]


def test_ties_break_toward_larger(rng):
    data = _noise_data(np.eye(3), 40, 2)
    folds = kfold_splits(data, 5, seed=0)
    # above max |v_ij| every fold gives the same diagonal Omega, hence equal scores but for the penalty (zero)
    grid = [50.0, 100.0]
    scores = cv_scores(folds, grid)
    assert scores[0] == pytest.approx(scores[1], rel=1e-12)
    assert select_lambda(folds, grid) == 100.0


def test_fold_error_names_the_fold():
    good = _noise_data(np.eye(3), 20, 3)
    y = good.y.copy()
    y[1] = 0.0
    bad = Dataset(good.x, y)
    folds = [(good, good), (bad, good), (good, good)]
    with pytest.raises(FoldError) as exc:
        select_lambda(folds, [0.1])
    assert exc.value.fold == 1
    assert "fold 1" in str(exc.value)


def test_kfold_partition():
    data = _noise_data(np.eye(2), 23, 4)
    folds = kfold_splits(data, 5, seed=9)
    held = np.concatenate([test.y[0] for _, test in folds])
    assert sorted(held) == sorted(data.y[0])
    for train, test in folds:
        assert train.n + test.n == 23
    with pytest.raises(ParameterError):
        kfold_splits(data, 1)
    with pytest.raises(DataError):
        kfold_splits(Dataset(np.zeros((1, 3)), np.zeros((1, 3))), 5)


def test_parallel_scores_match_serial(rng):
    data = _noise_data(np.eye(4), 60, 5)
    folds = kfold_splits(data, 3, seed=0)
    grid = [0.01, 0.1, 0.5]
    np.testing.assert_array_equal(cv_scores(folds, grid, n_jobs=1), cv_scores(folds, grid, n_jobs=3))
