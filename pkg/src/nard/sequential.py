"""Sequential NARD: one-feature-at-a-time add, re-estimate and delete moves.

Every move is scored with the rank-one decomposition of the evidence.
With ``Q_i, S_i`` the quality and sparsity of feature ``i`` against the
model without it, the log-evidence (times two) depends on ``alpha_i``
only through

    l_i(alpha) = m [ln alpha - ln(alpha + s)] + q^T Omega q / (alpha + s)

which is maximized at ``alpha = m s^2 / eta`` when
``eta = q^T Omega q - m s`` is positive and at ``alpha = inf`` otherwise.

The objective climbed is the penalized evidence of the full model
``J = m ln|C| + n_eff * g(V_emp, Omega)``, with ``g`` the graphical-lasso
objective, so that the graphical-lasso step is itself an ascent step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List

import numpy as np

from .errors import DegenerateDenominatorError, EmptyModelError, NumericalError, ParameterError
from .glasso import GlassoConfig, glasso_fit, glasso_objective
from .linalg import factor_with_jitter, symmetrize
from .model import (
    AlphaVector,
    ArdState,
    Dataset,
    FitConfig,
    Flat,
    HyperpriorConfig,
    InverseWishart,
    TraceRecord,
)
from .synth import substream

ADD, REESTIMATE, DELETE = "add", "reestimate", "delete"


@dataclass
class SequentialState:
    """Sequential solver state.

    ``q_cache`` and ``s_cache`` hold ``Q_i`` and ``S_i`` for every feature
    against the current active set. ``mlf`` is the penalized log-evidence
    ``-J`` (larger is better) at ``(alpha, omega)``.
    """

    active: np.ndarray
    alpha: AlphaVector
    q_cache: np.ndarray
    s_cache: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    mlf: float
    sxx_inv_active: np.ndarray
    scatter: np.ndarray = None

    def copy(self):
        return replace(self, active=self.active.copy(), q_cache=self.q_cache.copy(), s_cache=self.s_cache.copy(),
                       v=self.v.copy(), omega=self.omega.copy(), sxx_inv_active=self.sxx_inv_active.copy(),
                       scatter=None if self.scatter is None else self.scatter.copy())


class _Stats:
    """Data products reused by every move."""

    def __init__(self, data: Dataset, hyper: HyperpriorConfig):
        self.data = data
        self.yyt = data.y @ data.y.T
        self.yxt = data.y @ data.x.T
        self.phi_sq = np.einsum("ij,ij->i", data.x, data.x)
        prior = hyper.v_prior
        if isinstance(prior, InverseWishart):
            self.psi, self.n_eff = prior.psi, data.n + prior.nu
        else:
            self.psi, self.n_eff = np.zeros((data.m, data.m)), float(data.n)


def _sxx_inverse(data, active, alpha):
    if active.size == 0:
        return np.zeros((0, 0)), 0.0
    xa = data.x[active]
    sxx = xa @ xa.T
    sxx[np.diag_indices(active.size)] += alpha.values[active]
    fac = factor_with_jitter(sxx)
    return fac.inverse(), fac.logdet()


def compute_QS(data: Dataset, state: SequentialState, i):
    """``Q_i = Y C_A^{-1} phi_i`` and ``S_i = phi_i^T C_A^{-1} phi_i``.

    Evaluated through ``(S_xx^A)^{-1}``; the ``N x N`` matrix ``C_A^{-1}``
    is never formed.
    """
    phi = data.x[i]
    act = state.active
    q = data.y @ phi
    s = float(phi @ phi)
    if act.size:
        xa = data.x[act]
        b = xa @ phi
        u = state.sxx_inv_active @ b
        q = q - (data.y @ xa.T) @ u
        s = s - float(b @ u)
    return q, max(s, 0.0)


def _all_qs(stats, active, sxx_inv):
    data = stats.data
    if active.size == 0:
        return stats.yxt.copy(), stats.phi_sq.copy()
    g = data.x[active] @ data.x.T
    h = sxx_inv @ g
    q = stats.yxt - stats.yxt[:, active] @ h
    s = stats.phi_sq - np.einsum("ij,ij->j", g, h)
    return q, np.maximum(s, 0.0)


def qs_to_small(Q, S, alpha_i):
    """Convert ``(Q_i, S_i)`` to ``(q_i, s_i)``, the statistics with feature ``i`` removed.

    ``alpha_i`` of ``None`` or ``inf`` means the feature is out of the model
    and ``(Q, S)`` is returned unchanged.
    """
    Q = np.asarray(Q, dtype=float)
    if alpha_i is None or not np.isfinite(alpha_i):
        return Q.copy(), float(S)
    denom = alpha_i - S
    if abs(denom) <= 1e-12 * max(1.0, abs(alpha_i)):
        raise DegenerateDenominatorError(f"alpha_i = S_i = {alpha_i:.6g}")
    return alpha_i * Q / denom, alpha_i * S / denom


def eta(q, s, omega, m_dim):
    return float(q @ omega @ q) - m_dim * s


def optimal_alpha(q, s, omega, m_dim):
    """Maximizer of ``l_i``: ``m s^2 / eta`` when ``eta > 0``, else ``inf``."""
    if not s > 0:
        raise NumericalError(f"sparsity statistic must be positive, got {s}")
    e = eta(q, s, omega, m_dim)
    if e > 0:
        return m_dim * s * s / e
    return np.inf


def alpha_part(alpha, q, s, omega, m_dim):
    """``l_i(alpha)``; zero at ``alpha = inf``."""
    if alpha is None or not np.isfinite(alpha):
        return 0.0
    quad = float(q @ omega @ q)
    return m_dim * (np.log(alpha) - np.log(alpha + s)) + quad / (alpha + s)


def delta_mlf(state: SequentialState, i, action, new_alpha=None, m_dim=None, qs=None):
    """Change of the log-evidence for a move on feature ``i`` at fixed ``Omega``.

    Parameters
    ----------
    action : {"add", "reestimate", "delete"}
    new_alpha : float
        Target value for add and re-estimate moves.
    qs : tuple, optional
        Precomputed ``(q_i, s_i)``; taken from the caches otherwise.

    Returns
    -------
    float
        ``L_new - L_old`` (positive means the evidence improves).
    """
    m_dim = state.omega.shape[0] if m_dim is None else m_dim
    old = None if state.alpha.pruned[i] else float(state.alpha.values[i])
    if qs is None:
        qs = qs_to_small(state.q_cache[:, i], state.s_cache[i], old)
    q, s = qs
    if action == ADD:
        if old is not None:
            raise ParameterError(f"feature {i} is already active")
        return alpha_part(new_alpha, q, s, state.omega, m_dim)
    if action == REESTIMATE:
        if old is None:
            raise ParameterError(f"feature {i} is not active")
        return alpha_part(new_alpha, q, s, state.omega, m_dim) - alpha_part(old, q, s, state.omega, m_dim)
    if action == DELETE:
        if old is None:
            raise ParameterError(f"feature {i} is not active")
        return -alpha_part(old, q, s, state.omega, m_dim)
    raise ParameterError(f"unknown action {action!r}")


def _scatter(stats, active, sxx_inv):
    """``Y C_A^{-1} Y^T = Y Y^T - S_yx (S_xx^A)^{-1} S_yx^T``."""
    if active.size == 0:
        return stats.yyt.copy()
    syx = stats.yxt[:, active]
    return symmetrize(stats.yyt - syx @ sxx_inv @ syx.T)


def _v_emp(stats, scatter):
    return (scatter + stats.psi) / stats.n_eff


def _objective(stats, logdet_c, scatter, omega, lam, penalize_diagonal=False):
    """Penalized negative evidence ``J``."""
    g = glasso_objective(_v_emp(stats, scatter), omega, lam, penalize_diagonal)
    return stats.data.m * logdet_c + stats.n_eff * g


def _logdet_c(logdet_sxx, alpha, active):
    if active.size == 0:
        return 0.0
    return logdet_sxx - float(np.sum(np.log(alpha.values[active])))


def _build_state(stats, active, alpha, omega, v, lam, gcfg=None):
    """Factor, refresh caches and (optionally) run the graphical lasso."""
    sxx_inv, logdet_sxx = _sxx_inverse(stats.data, active, alpha)
    scatter = _scatter(stats, active, sxx_inv)
    if gcfg is not None:
        res = glasso_fit(_v_emp(stats, scatter), gcfg, omega_init=omega)
        v, omega = res.v_hat, res.omega_hat
    pen = gcfg.penalize_diagonal if gcfg is not None else False
    obj = _objective(stats, _logdet_c(logdet_sxx, alpha, active), scatter, omega, lam, pen)
    q, s = _all_qs(stats, active, sxx_inv)
    return SequentialState(active=active, alpha=alpha, q_cache=q, s_cache=s, v=v, omega=omega, mlf=-obj,
                           sxx_inv_active=sxx_inv, scatter=scatter)


def initial_feature(data: Dataset):
    """Feature with the largest ``||Y phi_i||^2 / (phi_i^T phi_i)``."""
    norms = np.einsum("ij,ij->i", data.x, data.x)
    score = np.einsum("ij,ij->j", data.y @ data.x.T, data.y @ data.x.T)
    score = np.where(norms > 0, score / np.where(norms > 0, norms, 1.0), -np.inf)
    return int(np.argmax(score))


def _check_hyper(hyper):
    if not isinstance(hyper.alpha_prior, Flat):
        raise ParameterError("the sequential solvers support only the flat alpha prior")


def initial_state(data: Dataset, config: FitConfig, hyper: HyperpriorConfig = HyperpriorConfig(),
                  glasso: GlassoConfig | None = None, stats=None):
    """One-feature starting model with a graphical-lasso precision."""
    from .core import glasso_config_for

    _check_hyper(hyper)
    stats = stats or _Stats(data, hyper)
    gcfg = glasso_config_for(config, glasso)
    omega0 = glasso_fit(_v_emp(stats, stats.yyt), gcfg).omega_hat
    i0 = initial_feature(data)
    q, s = stats.yxt[:, i0], float(stats.phi_sq[i0])
    if not s > 0:
        raise EmptyModelError("every feature row of x is zero")
    a0 = optimal_alpha(q, s, omega0, data.m)
    if not np.isfinite(a0):
        a0 = s
    alpha = AlphaVector.from_values(np.full(data.d, np.inf)).with_entry(i0, a0)
    return _build_state(stats, np.array([i0]), alpha, omega0, np.linalg.inv(omega0), config.lam, gcfg)


def propose(state: SequentialState, i, m_dim):
    """Move suggested for feature ``i``: ``(action, new_alpha, alpha_delta)`` or None to skip."""
    active = not state.alpha.pruned[i]
    old = float(state.alpha.values[i]) if active else None
    q, s = qs_to_small(state.q_cache[:, i], state.s_cache[i], old)
    if not s > 0:
        return None
    new = optimal_alpha(q, s, state.omega, m_dim)
    if np.isfinite(new):
        action = REESTIMATE if active else ADD
    elif active:
        action = DELETE
    else:
        return None
    return action, new, delta_mlf(state, i, action, new, m_dim, qs=(q, s))


def sequential_step(state: SequentialState, data: Dataset, i, config: FitConfig, stats=None, gcfg=None):
    """Try one move on feature ``i``.

    Returns ``(state, accepted, delta, action)``. A rejected move returns
    the input ``state`` object untouched. ``delta`` is the full change of
    the penalized log-evidence, including the graphical-lasso update, or
    the alpha-level pre-screen value when it was not positive.
    """
    stats = stats or _Stats(data, HyperpriorConfig())
    if gcfg is None:
        from .core import glasso_config_for
        gcfg = glasso_config_for(config, None)
    try:
        prop = propose(state, i, data.m)
    except DegenerateDenominatorError:
        return state, False, None, None
    if prop is None:
        return state, False, None, None
    action, new, d_alpha = prop
    if not d_alpha > 0:
        return state, False, d_alpha, action
    alpha = state.alpha.with_entry(i, new)
    if action == ADD:
        active = np.sort(np.append(state.active, i))
    elif action == DELETE:
        active = state.active[state.active != i]
    else:
        active = state.active
    sxx_inv, logdet_sxx = _sxx_inverse(data, active, alpha)
    scatter = _scatter(stats, active, sxx_inv)
    v_emp = _v_emp(stats, scatter)
    res = glasso_fit(v_emp, gcfg, omega_init=state.omega)
    g_old = glasso_objective(v_emp, state.omega, config.lam, gcfg.penalize_diagonal)
    g_new = res.objective_trace[-1]
    delta = d_alpha + stats.n_eff * (g_old - g_new)
    if not delta > 0:
        return state, False, delta, action
    obj = _objective(stats, _logdet_c(logdet_sxx, alpha, active), scatter, res.omega_hat, config.lam,
                     gcfg.penalize_diagonal)
    q, s = _all_qs(stats, active, sxx_inv)
    new_state = SequentialState(active=active, alpha=alpha, q_cache=q, s_cache=s, v=res.v_hat,
                                omega=res.omega_hat, mlf=-obj, sxx_inv_active=sxx_inv, scatter=scatter)
    return new_state, True, delta, action


def _final_state(data, stats, state, trace, t, converged, lam, method):
    act = state.active
    w = np.zeros((data.m, data.d))
    sigma = state.sxx_inv_active
    if act.size:
        w[:, act] = stats.yxt[:, act] @ state.sxx_inv_active
    return ArdState(alpha=state.alpha, v=state.v, omega=state.omega, w=w, mu=w.copy(), sigma=sigma, iter=t,
                    trace=trace, converged=converged, method=method, lam=lam)


def sequential_fit(data: Dataset, config: FitConfig = FitConfig(), hyper: HyperpriorConfig = HyperpriorConfig(),
                   glasso: GlassoConfig | None = None, order="random", return_state=False, callback=None):
    """Sequential NARD.

    Features are visited in passes; ``order="random"`` draws a fresh
    permutation per pass from the run seed, ``"cyclic"`` visits them in
    index order. Each visit proposes the move implied by the optimal
    ``alpha_i``, runs the graphical lasso only if the alpha-level change is
    positive, and keeps the move iff the full penalized evidence increases.
    ``config.max_iter`` bounds the number of visits; the fit stops at the
    end of a pass whose best change is at most ``config.epsilon``. ``W`` is
    computed once, from the final active set.

    Each trace record is an accepted move: ``neg_log_mlf`` is the penalized
    objective ``J`` after it and ``change`` the reported increase of ``-J``.
    ``callback(t, info)`` runs after every visit (``t = 0`` for the initial
    model) with ``info`` holding ``state``, ``accepted``, ``delta``,
    ``action`` and ``feature``.
    """
    from .core import glasso_config_for

    _check_hyper(hyper)
    if order not in ("random", "cyclic"):
        raise ParameterError("order must be 'random' or 'cyclic'")
    stats = _Stats(data, hyper)
    gcfg = glasso_config_for(config, glasso)
    state = initial_state(data, config, hyper, glasso, stats)
    rng = substream(config.seed, "sequential")
    trace: List[TraceRecord] = []
    t = 0
    if callback is not None:
        callback(0, {"state": state, "accepted": True, "delta": None, "action": ADD,
                     "feature": int(state.active[0])})
    converged = False
    while t < config.max_iter:
        perm = rng.permutation(data.d) if order == "random" else np.arange(data.d)
        best = -np.inf
        for i in perm:
            if t >= config.max_iter:
                break
            t += 1
            state, accepted, delta, action = sequential_step(state, data, int(i), config, stats, gcfg)
            if delta is not None:
                best = max(best, delta)
            if accepted:
                trace.append(TraceRecord(iteration=t, neg_log_mlf=-state.mlf, max_delta_inv_alpha=None,
                                         n_active=int(state.active.size), change=float(delta),
                                         extra={"feature": int(i), "action": action}))
            if callback is not None:
                callback(t, {"state": state, "accepted": accepted, "delta": delta, "action": action,
                             "feature": int(i)})
        else:
            if best <= config.epsilon:
                converged = True
                break
    out = _final_state(data, stats, state, trace, t, converged, config.lam, "sequential")
    return (out, state) if return_state else out
