"""Graphical lasso and cross-validated selection of its penalty.

The solver is block coordinate descent on the *primal* problem

    min_Omega  -log|Omega| + Tr(S Omega) + lam * sum_{i != j} |omega_ij|

one row/column at a time. Each block step keeps the rest of ``Omega``
fixed, optimizes the diagonal entry in closed form and the off-diagonal
column by a cyclic coordinate-descent lasso. Because every block step is
an exact (or descent) step on the primal objective started from the
current iterate, the objective never increases and the Schur complement
``1/s_jj`` keeps every iterate positive definite. ``W = Omega^{-1}`` is
carried alongside with block-inverse updates and refreshed after each
sweep.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from .errors import DataError, FoldError, NotPositiveDefiniteError, ParameterError
from .linalg import assert_pd, symmetrize


@dataclass(frozen=True)
class GlassoConfig:
    lam: float = 0.1
    tol: float = 1e-5
    max_iter: int = 200
    penalize_diagonal: bool = False
    inner_max_iter: int = 1000

    def __post_init__(self):
        if not self.lam >= 0:
            raise ParameterError("glasso lambda must be >= 0")
        if not self.tol > 0:
            raise ParameterError("glasso tol must be > 0")
        if int(self.max_iter) < 1:
            raise ParameterError("glasso max_iter must be >= 1")


@dataclass
class GlassoResult:
    v_hat: np.ndarray
    omega_hat: np.ndarray
    objective_trace: List[float] = field(default_factory=list)
    iters: int = 0
    converged: bool = False


def _offdiag_l1(a):
    return float(np.abs(a).sum() - np.abs(np.diag(a)).sum())


def glasso_objective(v_emp, omega, lam, penalize_diagonal=False) -> float:
    """``-log|Omega| + Tr(V Omega) + lam * sum_{i != j} |omega_ij|``."""
    omega = np.asarray(omega, dtype=float)
    fac = assert_pd(omega)
    value = -fac.logdet() + float(np.sum(np.asarray(v_emp) * omega)) + lam * _offdiag_l1(omega)
    if penalize_diagonal:
        value += lam * float(np.abs(np.diag(omega)).sum())
    return value


@njit(cache=True, nogil=True)
def _sweep(theta, w, s, lam, diag_shift, inner_tol, inner_max):
    m = theta.shape[0]
    g = np.zeros(m)
    for j in range(m):
        w22 = s[j, j] + diag_shift
        wjj = w[j, j]
        u = w[:, j].copy()
        # g = w22 * inv(Theta_11) @ theta_12, with inv(Theta_11) = W_11 - u u^T / w_jj
        for k in range(m):
            g[k] = 0.0
        for l in range(m):
            if l == j:
                continue
            tl = theta[l, j]
            if tl == 0.0:
                continue
            for k in range(m):
                if k != j:
                    g[k] += w22 * (w[k, l] - u[k] * u[l] / wjj) * tl
        for _ in range(inner_max):
            dmax = 0.0
            for k in range(m):
                if k == j:
                    continue
                hk = w22 * (w[k, k] - u[k] * u[k] / wjj)
                old = theta[k, j]
                r = -s[k, j] - (g[k] - hk * old)
                if r > lam:
                    new = (r - lam) / hk
                elif r < -lam:
                    new = (r + lam) / hk
                else:
                    new = 0.0
                delta = new - old
                if delta != 0.0:
                    theta[k, j] = new
                    for l in range(m):
                        if l != j:
                            g[l] += delta * w22 * (w[l, k] - u[l] * u[k] / wjj)
                    if abs(delta) > dmax:
                        dmax = abs(delta)
            if dmax <= inner_tol:
                break
        quad = 0.0
        for k in range(m):
            if k != j:
                quad += g[k] * theta[k, j]
        theta[j, j] = 1.0 / w22 + quad / w22
        for k in range(m):
            if k != j:
                theta[j, k] = theta[k, j]
        # block inverse: W_11 <- inv(Theta_11) + g g^T / w22, w_12 <- -g, w_22 <- w22
        for k in range(m):
            if k == j:
                continue
            for l in range(m):
                if l == j:
                    continue
                w[k, l] = w[k, l] - u[k] * u[l] / wjj + g[k] * g[l] / w22
        for k in range(m):
            if k != j:
                w[k, j] = -g[k]
                w[j, k] = -g[k]
        w[j, j] = w22


def _check_input(v_emp):
    v = np.asarray(v_emp, dtype=float)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise DataError("empirical covariance must be square")
    if not np.all(np.isfinite(v)):
        raise DataError("empirical covariance must be finite")
    if np.max(np.abs(v - v.T), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(v), initial=0.0)):
        raise DataError("empirical covariance must be symmetric")
    if np.any(np.diag(v) <= 0):
        raise DataError("empirical covariance must have a positive diagonal")
    return symmetrize(v)


def glasso_fit(v_emp, config: GlassoConfig = GlassoConfig(), omega_init=None) -> GlassoResult:
    """Solve the graphical lasso.

    Parameters
    ----------
    v_emp : ndarray, shape (m, m)
        Symmetric empirical covariance with positive diagonal.
    config : GlassoConfig
        Penalty, tolerance on the max absolute change of ``Omega`` per
        sweep, and sweep budget.
    omega_init : ndarray, optional
        Positive definite warm start (typically the previous solution).

    Returns
    -------
    GlassoResult
        ``objective_trace[0]`` is the objective at the starting point, then
        one entry per sweep. ``converged`` is False if ``max_iter`` sweeps
        ran out first.
    """
    s = _check_input(v_emp)
    m = s.shape[0]
    lam = float(config.lam)
    shift = lam if config.penalize_diagonal else 0.0
    if omega_init is not None:
        theta = symmetrize(np.array(omega_init, dtype=float))
        try:
            w = assert_pd(theta).inverse()
        except NotPositiveDefiniteError:
            theta = None
    else:
        theta = None
    if theta is None:
        theta = np.diag(1.0 / (np.diag(s) + shift))
        w = np.diag(np.diag(s) + shift)
    theta = np.ascontiguousarray(theta)
    w = np.ascontiguousarray(symmetrize(w))

    trace = [glasso_objective(s, theta, lam, config.penalize_diagonal)]
    inner_tol = 0.1 * config.tol
    converged = False
    it = 0
    for it in range(1, int(config.max_iter) + 1):
        before = theta.copy()
        _sweep(theta, w, s, lam, shift, inner_tol, int(config.inner_max_iter))
        theta = symmetrize(theta)
        w = np.ascontiguousarray(assert_pd(theta).inverse())
        trace.append(glasso_objective(s, theta, lam, config.penalize_diagonal))
        if np.max(np.abs(theta - before)) <= config.tol:
            converged = True
            break
    omega = symmetrize(theta)
    v_hat = symmetrize(assert_pd(omega).inverse())
    return GlassoResult(v_hat=v_hat, omega_hat=omega, objective_trace=trace, iters=it, converged=converged)


def kkt_residual(v_emp, omega, lam, penalize_diagonal=False) -> float:
    """Largest violation of the glasso optimality conditions at ``omega``."""
    s = np.asarray(v_emp, dtype=float)
    w = assert_pd(omega).inverse()
    r = w - s
    off = ~np.eye(s.shape[0], dtype=bool)
    nz = (omega != 0) & off
    z = (omega == 0) & off
    res = 0.0
    if np.any(nz):
        res = max(res, float(np.max(np.abs(r[nz] - lam * np.sign(omega[nz])))))
    if np.any(z):
        res = max(res, float(np.max(np.maximum(np.abs(r[z]) - lam, 0.0))))
    diag = np.diag(r) - (lam if penalize_diagonal else 0.0)
    return max(res, float(np.max(np.abs(diag))))


def worker_count():
    """Worker cap from ``NARD_THREADS`` (default: number of cores)."""
    raw = os.environ.get("NARD_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _empirical_covariance(split):
    return split.y @ split.y.T / split.n


def kfold_splits(data, k=5, seed=0):
    """Random ``k``-fold partition of the samples: list of (train, held-out)."""
    if k < 2:
        raise ParameterError("need at least 2 folds")
    if data.n < k:
        raise DataError(f"cannot split {data.n} samples into {k} folds")
    order = np.random.default_rng(seed).permutation(data.n)
    parts = np.array_split(order, k)
    out = []
    for i in range(k):
        test = np.sort(parts[i])
        train = np.sort(np.concatenate([parts[j] for j in range(k) if j != i]))
        out.append((data.subset(train), data.subset(test)))
    return out


def cv_scores(folds, grid, cov_builder: Callable = _empirical_covariance, holdout_builder: Optional[Callable] = None,
              config: GlassoConfig = GlassoConfig(), n_jobs=None) -> np.ndarray:
    """Summed held-out score for each grid value.

    For fold ``l`` the precision ``Omega_{-l}`` is fit on
    ``cov_builder(train)`` and scored as
    ``Tr(V_l Omega_{-l}) - log|Omega_{-l}| + lam * sum_{i!=j}|omega_ij|``
    with ``V_l = holdout_builder(held_out)``.
    """
    if len(folds) < 2:
        raise ParameterError("need at least 2 folds")
    grid = [float(g) for g in grid]
    if not grid:
        raise ParameterError("lambda grid is empty")
    holdout_builder = holdout_builder or cov_builder
    train_covs, test_covs = [], []
    for i, (train, test) in enumerate(folds):
        c_train = symmetrize(np.asarray(cov_builder(train), dtype=float))
        c_test = symmetrize(np.asarray(holdout_builder(test), dtype=float))
        try:
            assert_pd(c_train)
        except NotPositiveDefiniteError as exc:
            raise FoldError(i) from exc
        if np.any(np.diag(c_test) <= 0):
            raise FoldError(i, f"held-out covariance of fold {i} has a non-positive diagonal")
        train_covs.append(c_train)
        test_covs.append(c_test)

    def score(lam):
        cfg = GlassoConfig(lam=lam, tol=config.tol, max_iter=config.max_iter,
                           penalize_diagonal=config.penalize_diagonal)
        total = 0.0
        for c_train, c_test in zip(train_covs, test_covs):
            om = glasso_fit(c_train, cfg).omega_hat
            total += float(np.sum(c_test * om)) - assert_pd(om).logdet() + lam * _offdiag_l1(om)
        return total

    workers = min(len(grid), n_jobs or worker_count())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(score, grid)))
    return np.array([score(lam) for lam in grid])


def select_lambda(folds: Sequence[Tuple], grid: Sequence[float], cov_builder: Callable = _empirical_covariance,
                  holdout_builder: Optional[Callable] = None, config: GlassoConfig = GlassoConfig(),
                  n_jobs=None) -> float:
    """Grid value with the smallest summed held-out score.

    Ties go to the larger (sparser) penalty.
    """
    grid = [float(g) for g in grid]
    scores = cv_scores(folds, grid, cov_builder, holdout_builder, config, n_jobs)
    best = np.min(scores)
    slack = 1e-12 * max(1.0, abs(best))
    return max(lam for lam, sc in zip(grid, scores) if sc <= best + slack)
