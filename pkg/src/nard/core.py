"""Vanilla NARD: alternating posterior, covariance, graphical-lasso and ARD updates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningWarning, ConvergenceWarning, EmptyModelError, ParameterError
from .glasso import GlassoConfig, glasso_fit
from .linalg import assert_pd, factor_with_jitter, symmetrize
from .model import (
    DEFAULT_PRUNE_THRESHOLD,
    AlphaVector,
    ArdState,
    Dataset,
    FitConfig,
    Flat,
    Gamma,
    HyperpriorConfig,
    InverseWishart,
    TraceRecord,
)


@dataclass
class PosteriorPair:
    """Posterior of ``W`` over the active features.

    ``sigma`` is ``(K_A + X_A X_A^T)^{-1}`` and ``mu`` the ``m x p``
    posterior mean; ``active`` lists the feature indices they refer to and
    ``logdet_sxx`` is ``ln|S_xx|`` (kept for the evidence).
    """

    sigma: np.ndarray
    mu: np.ndarray
    active: np.ndarray
    d: int
    logdet_sxx: float = 0.0

    def mu_full(self):
        out = np.zeros((self.mu.shape[0], self.d))
        out[:, self.active] = self.mu
        return out


def _posterior(xxt_active, yxt_active, k, active, d):
    sxx = xxt_active.copy()
    sxx[np.diag_indices(active.size)] += k
    fac = factor_with_jitter(sxx)
    sigma = fac.inverse()
    mu = yxt_active @ sigma
    return PosteriorPair(sigma=sigma, mu=mu, active=active, d=d, logdet_sxx=fac.logdet())


def posterior_update(data: Dataset, alpha: AlphaVector) -> PosteriorPair:
    """``Sigma = (K_A + X_A X_A^T)^{-1}`` and ``mu = Y X_A^T Sigma``.

    Raises :class:`~nard.errors.EmptyModelError` when every feature is pruned.
    """
    act = alpha.active
    if act.size == 0:
        raise EmptyModelError("no active features")
    xa = data.x[act]
    return _posterior(xa @ xa.T, data.y @ xa.T, alpha.finite(), act, data.d)


def _scatter(data, post, alpha):
    xa = data.x[post.active]
    resid = data.y - post.mu @ xa
    k = alpha.values[post.active]
    return resid @ resid.T + (post.mu * k) @ post.mu.T


def _ensure_pd(v, what):
    v = symmetrize(v)
    fac = factor_with_jitter(v)
    if fac.jitter:
        warnings.warn(f"{what} was not positive definite; added jitter {fac.jitter:.3g}", ConditioningWarning,
                      stacklevel=3)
        v = v + fac.jitter * np.eye(v.shape[0])
    return v


def update_v_flat(data: Dataset, post: PosteriorPair, alpha: AlphaVector):
    """``[(Y - mu X)(Y - mu X)^T + mu K mu^T] / N``.

    A rank-deficient result gets the jitter policy applied and a
    :class:`~nard.errors.ConditioningWarning`.
    """
    return _ensure_pd(_scatter(data, post, alpha) / data.n, "V update")


def update_v_inverse_wishart(data: Dataset, post: PosteriorPair, alpha: AlphaVector, psi, nu):
    """Posterior-mode style update under an inverse-Wishart(psi, nu) prior on V."""
    psi = np.asarray(psi, dtype=float)
    if not nu > 0:
        raise ParameterError("nu must be positive")
    return _ensure_pd((_scatter(data, post, alpha) + psi) / (data.n + nu), "V update")


def _ard_denominator(post, omega, m_dim):
    quad = np.einsum("ij,ij->j", post.mu, omega @ post.mu)
    return m_dim * np.diag(post.sigma) + quad


def _alpha_from(post, numer, denom, prune_threshold):
    values = np.zeros(post.d)
    pruned = np.ones(post.d, dtype=bool)
    with np.errstate(divide="ignore"):
        new = np.where(denom > 0, numer / np.where(denom > 0, denom, 1.0), np.inf)
    values[post.active] = new
    pruned[post.active] = False
    return AlphaVector.from_values(values, prune_threshold, pruned=pruned)


def update_alpha_flat(post: PosteriorPair, omega, m_dim, prune_threshold=DEFAULT_PRUNE_THRESHOLD) -> AlphaVector:
    """``alpha_i = m / [m Sigma_ii + (mu^T Omega mu)_ii]``, pruning above the threshold."""
    return _alpha_from(post, float(m_dim), _ard_denominator(post, omega, m_dim), prune_threshold)


def update_alpha_gamma(post: PosteriorPair, omega, m_dim, a, b, prune_threshold=DEFAULT_PRUNE_THRESHOLD) -> AlphaVector:
    """ARD update under a Gamma(a, b) prior (shape, rate).

    ``alpha_i = (m + 2a - 2) / [m Sigma_ii + (mu^T Omega mu)_ii + 2b]``
    """
    if not a > 0 or not b >= 0:
        raise ParameterError("Gamma prior needs a > 0 and b >= 0")
    numer = m_dim + 2.0 * a - 2.0
    if numer <= 0:
        raise ParameterError(f"m + 2a - 2 must be positive; need a > {(2 - m_dim) / 2}")
    return _alpha_from(post, numer, _ard_denominator(post, omega, m_dim) + 2.0 * b, prune_threshold)


def update_alpha(post, omega, m_dim, hyper: HyperpriorConfig, prune_threshold=DEFAULT_PRUNE_THRESHOLD):
    prior = hyper.alpha_prior
    if isinstance(prior, Gamma):
        return update_alpha_gamma(post, omega, m_dim, prior.a, prior.b, prune_threshold)
    return update_alpha_flat(post, omega, m_dim, prune_threshold)


def update_v(data, post, alpha, hyper: HyperpriorConfig):
    prior = hyper.v_prior
    if isinstance(prior, InverseWishart):
        return update_v_inverse_wishart(data, post, alpha, prior.psi, prior.nu)
    return update_v_flat(data, post, alpha)


def initial_v(data: Dataset, hyper: HyperpriorConfig = HyperpriorConfig()):
    """``Y Y^T / N``, or its inverse-Wishart counterpart, made PD if needed."""
    yyt = data.y @ data.y.T
    prior = hyper.v_prior
    if isinstance(prior, InverseWishart):
        return _ensure_pd((yyt + prior.psi) / (data.n + prior.nu), "initial V")
    return _ensure_pd(yyt / data.n, "initial V")


def glasso_config_for(config: FitConfig, glasso: GlassoConfig | None):
    if glasso is None:
        return GlassoConfig(lam=config.lam)
    return GlassoConfig(lam=config.lam, tol=glasso.tol, max_iter=glasso.max_iter,
                        penalize_diagonal=glasso.penalize_diagonal, inner_max_iter=glasso.inner_max_iter)


def max_delta_inv_alpha(new: AlphaVector, old: AlphaVector) -> float:
    return float(np.max(np.abs(new.reciprocal() - old.reciprocal()), initial=0.0))


def _evidence(data, post, alpha, scatter, omega):
    """Negative log-MLF at (alpha, Omega) reusing the posterior factorization."""
    k = alpha.values[post.active]
    logdet_c = post.logdet_sxx - float(np.sum(np.log(k)))
    return data.m * logdet_c - data.n * assert_pd(omega).logdet() + float(np.sum(omega * scatter))


def nard_fit(data: Dataset, config: FitConfig = FitConfig(), hyper: HyperpriorConfig = HyperpriorConfig(),
             glasso: GlassoConfig | None = None, alpha_init: AlphaVector | None = None, track_mlf=True,
             callback=None) -> ArdState:
    """Vanilla NARD.

    Each iteration computes the posterior, updates ``V``, runs the
    graphical lasso (warm-started from the previous precision) and then the
    ARD update. The loop stops once ``max |1/alpha_new - 1/alpha_old|``
    drops to ``config.epsilon`` or after ``config.max_iter`` iterations.
    ``W`` is the last posterior mean with pruned columns zeroed.

    The recorded ``neg_log_mlf`` is evaluated at the alpha used for the
    iteration's posterior and the precision returned by the graphical lasso.
    ``callback(iteration, info)``, if given, runs at the end of every
    iteration with ``info`` holding ``alpha``, ``omega`` and ``posterior``.
    """
    gcfg = glasso_config_for(config, glasso)
    alpha = alpha_init if alpha_init is not None else AlphaVector.full(data.d, 1.0)
    xxt = data.x @ data.x.T
    yxt = data.y @ data.x.T
    v = initial_v(data, hyper)
    omega = None
    trace = []
    post = None
    converged = False
    t = 0
    for t in range(1, int(config.max_iter) + 1):
        act = alpha.active
        if act.size == 0:
            warnings.warn("all features were pruned; returning an empty model", ConvergenceWarning, stacklevel=2)
            t -= 1
            break
        post = _posterior(xxt[np.ix_(act, act)], yxt[:, act], alpha.finite(), act, data.d)
        scatter = _scatter(data, post, alpha)
        if isinstance(hyper.v_prior, InverseWishart):
            v_new = _ensure_pd((scatter + hyper.v_prior.psi) / (data.n + hyper.v_prior.nu), "V update")
        else:
            v_new = _ensure_pd(scatter / data.n, "V update")
        res = glasso_fit(v_new, gcfg, omega_init=omega)
        if not res.converged:
            warnings.warn(f"graphical lasso did not converge in {res.iters} sweeps", ConvergenceWarning,
                          stacklevel=2)
        v, omega = res.v_hat, res.omega_hat
        new_alpha = update_alpha(post, omega, data.m, hyper, config.prune_threshold)
        delta = max_delta_inv_alpha(new_alpha, alpha)
        mlf = _evidence(data, post, alpha, scatter, omega) if track_mlf else None
        trace.append(TraceRecord(iteration=t, neg_log_mlf=mlf, max_delta_inv_alpha=delta,
                                 n_active=int(new_alpha.active.size)))
        alpha = new_alpha
        if callback is not None:
            callback(t, {"alpha": alpha, "omega": omega, "posterior": post})
        if delta <= config.epsilon:
            converged = True
            break

    if omega is None:
        omega = assert_pd(v).inverse()
    w = np.zeros((data.m, data.d))
    sigma = None
    if post is not None:
        w = post.mu_full()
        w[:, alpha.pruned] = 0.0
        keep = np.isin(post.active, alpha.active)
        sigma = post.sigma[np.ix_(keep, keep)]
    return ArdState(alpha=alpha, v=v, omega=omega, w=w, mu=w.copy(), sigma=sigma, iter=t, trace=trace,
                    converged=converged, method="nard", lam=config.lam)
