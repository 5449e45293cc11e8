"""Surrogate and Hybrid NARD.

The residual scatter ``g(W) = (Y - WX)(Y - WX)^T`` is majorized around an
anchor ``W'`` by

    R(W, W') = (Y - W'X)(Y - W'X)^T + 2 (W - W') X (W'X - Y)^T + rho (W - W')(W - W')^T

with ``rho`` at least the largest eigenvalue of ``X X^T``. Minimizing the
majorized objective over ``W`` decouples across features, so a sweep only
inverts the diagonal ``K + rho I``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import _ensure_pd, glasso_config_for
from .errors import (
    ConditioningError,
    ConvergenceWarning,
    InstabilityError,
    NotPositiveDefiniteError,
    ParameterError,
)
from .glasso import GlassoConfig, glasso_fit
from .linalg import assert_pd, factor_with_jitter, spectral_radius, symmetrize
from .model import (
    AlphaVector,
    ArdState,
    Dataset,
    FitConfig,
    Gamma,
    HyperpriorConfig,
    InverseWishart,
    TraceRecord,
)
from .sequential import (
    _Stats,
    _all_qs,
    _check_hyper,
    _sxx_inverse,
    optimal_alpha,
    alpha_part,
    qs_to_small,
)
from .synth import substream

RHO_MARGIN = 1.01
RHO_TOL = 1e-6
GROWTH_LIMIT = 1e6


@dataclass
class SurrogateState:
    """``W``, its anchor ``W'``, the curvature ``rho`` and the diagonal of ``K + rho I``."""

    w: np.ndarray
    w_anchor: np.ndarray
    rho: float
    sxx_diag: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    alpha: AlphaVector
    iter: int = 0


def compute_rho(x):
    """Inflated spectral bound of ``X X^T`` (0 rows give 1.0 to keep the step defined)."""
    x = np.asarray(x, dtype=float)
    if x.size == 0 or not np.any(x):
        return 1.0
    rho, _ = spectral_radius(x, tol=RHO_TOL)
    return RHO_MARGIN * rho


def surrogate_R(w, w_anchor, data: Dataset, rho):
    """Majorizer ``R(W, W')`` of the residual scatter, symmetrized."""
    d = np.asarray(w) - np.asarray(w_anchor)
    resid = data.y - w_anchor @ data.x
    dx = d @ data.x
    cross = dx @ resid.T
    out = resid @ resid.T - cross - cross.T + rho * (d @ d.T)
    return symmetrize(out)


def surrogate_neg_log_mlf(state: SurrogateState, data: Dataset):
    """``m ln|C| + N ln|V| + Tr(V^{-1} R) + Tr(V^{-1} W K W^T)`` over the active features."""
    act = state.alpha.active
    logdet_c = 0.0
    if act.size:
        xa = data.x[act]
        k = state.alpha.finite()
        sxx = xa @ xa.T
        sxx[np.diag_indices(act.size)] += k
        logdet_c = factor_with_jitter(sxx).logdet() - float(np.sum(np.log(k)))
    fac = assert_pd(symmetrize(state.v))
    r = surrogate_R(state.w, state.w_anchor, data, state.rho)
    wk = state.w[:, act] * state.alpha.finite()
    term = r + wk @ state.w[:, act].T
    return data.m * logdet_c + data.n * fac.logdet() + float(np.trace(fac.solve(term)))


def _w_update(state, data, yxt):
    """Exact minimizer of the majorized objective over ``W`` (active columns only)."""
    act = state.alpha.active
    w_new = np.zeros_like(state.w)
    if act.size == 0:
        return w_new
    wa = state.w_anchor[:, act]
    xa = data.x[act]
    grad = (wa @ xa) @ xa.T
    w_new[:, act] = (state.rho * wa - grad + yxt[:, act]) / state.sxx_diag[act]
    return w_new


def _alpha_update(w, omega, sxx_diag, alpha, m_dim, hyper, prune_threshold):
    act = alpha.active
    numer, extra = float(m_dim), 0.0
    if isinstance(hyper.alpha_prior, Gamma):
        numer = m_dim + 2.0 * hyper.alpha_prior.a - 2.0
        extra = 2.0 * hyper.alpha_prior.b
        if numer <= 0:
            raise ParameterError("m + 2a - 2 must be positive")
    wa = w[:, act]
    quad = np.einsum("ij,ij->j", wa, omega @ wa)
    denom = quad + m_dim / sxx_diag[act] + extra
    values = np.zeros(alpha.d)
    values[act] = numer / denom
    return AlphaVector.from_values(values, prune_threshold, pruned=alpha.pruned)


def surrogate_step(state: SurrogateState, data: Dataset, glasso_cfg: GlassoConfig = GlassoConfig(),
                   hyper: HyperpriorConfig = HyperpriorConfig(), prune_threshold=1e12, yxt=None):
    """One sweep ``W -> W' -> V -> glasso -> K``.

    ``S_xx = K + rho I`` is diagonal, so the only inverse over features is
    elementwise. ``V = [R(W, W') + W K W^T] / N`` uses ``K`` from before the
    sweep and ``R`` at the pre-sweep anchor.
    """
    if yxt is None:
        yxt = data.y @ data.x.T
    act = state.alpha.active
    w_new = _w_update(state, data, yxt)
    r = surrogate_R(w_new, state.w_anchor, data, state.rho)
    wk = w_new[:, act] * state.alpha.finite()
    scatter = r + wk @ w_new[:, act].T
    prior = hyper.v_prior
    if isinstance(prior, InverseWishart):
        v = _ensure_pd((scatter + prior.psi) / (data.n + prior.nu), "V update")
    else:
        v = _ensure_pd(scatter / data.n, "V update")
    res = glasso_fit(v, glasso_cfg, omega_init=state.omega)
    alpha = _alpha_update(w_new, res.omega_hat, state.sxx_diag, state.alpha, data.m, hyper, prune_threshold)
    w_new[:, alpha.pruned] = 0.0
    sxx_diag = np.where(alpha.pruned, state.rho, alpha.values + state.rho)
    return SurrogateState(w=w_new, w_anchor=w_new.copy(), rho=state.rho, sxx_diag=sxx_diag, v=res.v_hat,
                          omega=res.omega_hat, alpha=alpha, iter=state.iter + 1)


def _initial_omega(data, hyper, gcfg):
    yyt = data.y @ data.y.T
    prior = hyper.v_prior
    if isinstance(prior, InverseWishart):
        v0 = _ensure_pd((yyt + prior.psi) / (data.n + prior.nu), "initial V")
    else:
        v0 = _ensure_pd(yyt / data.n, "initial V")
    res = glasso_fit(v0, gcfg)
    return res.v_hat, res.omega_hat


def initial_surrogate_state(data: Dataset, config: FitConfig, hyper: HyperpriorConfig = HyperpriorConfig(),
                            glasso: GlassoConfig | None = None, alpha_init: AlphaVector | None = None):
    """``W0 = Y X^T (K + X X^T)^{-1}`` with ``Omega`` from the graphical lasso on ``Y Y^T / N``."""
    gcfg = glasso_config_for(config, glasso)
    alpha = alpha_init if alpha_init is not None else AlphaVector.full(data.d, 1.0)
    act = alpha.active
    w0 = np.zeros((data.m, data.d))
    if act.size:
        xa = data.x[act]
        sxx = xa @ xa.T
        sxx[np.diag_indices(act.size)] += alpha.finite()
        w0[:, act] = factor_with_jitter(sxx).solve(xa @ data.y.T).T
    rho = compute_rho(data.x[act]) if act.size else 1.0
    v, omega = _initial_omega(data, hyper, gcfg)
    sxx_diag = np.where(alpha.pruned, rho, alpha.values + rho)
    return SurrogateState(w=w0, w_anchor=w0.copy(), rho=rho, sxx_diag=sxx_diag, v=v, omega=omega, alpha=alpha)


def _to_ard(state, data, trace, converged, lam, method):
    w = state.w.copy()
    w[:, state.alpha.pruned] = 0.0
    act = state.alpha.active
    sigma = None
    if act.size:
        xa = data.x[act]
        sxx = xa @ xa.T
        sxx[np.diag_indices(act.size)] += state.alpha.finite()
        sigma = factor_with_jitter(sxx).inverse()
    return ArdState(alpha=state.alpha, v=state.v, omega=state.omega, w=w, mu=w.copy(), sigma=sigma,
                    iter=state.iter, trace=trace, converged=converged, method=method, lam=lam)


def _sweep(state, data, gcfg, hyper, prune_threshold, yxt, scale):
    """One surrogate step with the divergence checks of the fit loops."""
    try:
        new = surrogate_step(state, data, gcfg, hyper, prune_threshold, yxt)
    except (ConditioningError, NotPositiveDefiniteError) as exc:
        raise InstabilityError(f"surrogate sweep {state.iter + 1} broke down: {exc}") from exc
    _check_growth(new.w, scale)
    return new


def _check_growth(w, scale):
    norm = float(np.linalg.norm(w))
    if not np.isfinite(norm) or norm > GROWTH_LIMIT * max(scale, 1e-300):
        raise InstabilityError(f"||W||_F grew to {norm:.3g} from {scale:.3g}")


def surrogate_fit(data: Dataset, config: FitConfig = FitConfig(), hyper: HyperpriorConfig = HyperpriorConfig(),
                  glasso: GlassoConfig | None = None, alpha_init: AlphaVector | None = None,
                  track_mlf=True, callback=None) -> ArdState:
    """Surrogate NARD.

    Iterates :func:`surrogate_step` from the ridge initialization until
    both ``||W_k - W_{k-1}||_F`` and ``max |1/alpha_k - 1/alpha_{k-1}|``
    are at most ``config.epsilon``, or ``config.max_iter`` sweeps. (The
    ridge start is the exact posterior mean for the initial ``K``, so the
    first sweep leaves ``W`` unchanged and ``W`` alone cannot signal
    convergence.)
    Raises :class:`~nard.errors.InstabilityError` if ``||W||_F`` grows a
    millionfold over the initialization or a sweep can no longer factor
    its covariance. Each trace record carries the
    surrogate objective (when tracked) at the state after the sweep and the
    change of ``W`` in ``change``. ``callback(iteration, {"state": ...})``
    runs after every sweep.
    """
    gcfg = glasso_config_for(config, glasso)
    state = initial_surrogate_state(data, config, hyper, glasso, alpha_init)
    yxt = data.y @ data.x.T
    scale = float(np.linalg.norm(state.w)) or 1.0
    trace = []
    converged = False
    for _ in range(int(config.max_iter)):
        old_alpha = state.alpha
        new = _sweep(state, data, gcfg, hyper, config.prune_threshold, yxt, scale)
        change = float(np.linalg.norm(new.w - state.w))
        dinv = float(np.max(np.abs(new.alpha.reciprocal() - old_alpha.reciprocal()), initial=0.0))
        state = new
        mlf = surrogate_neg_log_mlf(state, data) if track_mlf and state.alpha.active.size else None
        trace.append(TraceRecord(iteration=state.iter, neg_log_mlf=mlf, max_delta_inv_alpha=dinv,
                                 n_active=int(state.alpha.active.size), change=change))
        if callback is not None:
            callback(state.iter, {"state": state})
        if change <= config.epsilon and dinv <= config.epsilon:
            converged = True
            break
        if state.alpha.active.size == 0:
            warnings.warn("all features were pruned; returning an empty model", ConvergenceWarning, stacklevel=2)
            break
    return _to_ard(state, data, trace, converged, config.lam, "surrogate")


def _screen(state, data, stats, rng, order):
    """Membership pass: add features with ``eta > 0`` and an evidence gain, delete those with ``eta <= 0``.

    Statistics are exact, from ``(S_xx^A)^{-1}`` at the current ``alpha``,
    and refreshed after every membership change. Returns the new state,
    the number of changes and the largest gain seen.
    """
    alpha, w = state.alpha, state.w.copy()
    active = alpha.active
    sxx_inv, _ = _sxx_inverse(data, active, alpha)
    q_all, s_all = _all_qs(stats, active, sxx_inv)
    perm = rng.permutation(data.d) if order == "random" else np.arange(data.d)
    changes, best = 0, 0.0
    for i in perm:
        i = int(i)
        old = None if alpha.pruned[i] else float(alpha.values[i])
        try:
            q, s = qs_to_small(q_all[:, i], s_all[i], old)
        except ArithmeticError:
            continue
        if not s > 0:
            continue
        new = optimal_alpha(q, s, state.omega, data.m)
        if old is None and np.isfinite(new):
            gain = alpha_part(new, q, s, state.omega, data.m)
            if not gain > 0:
                continue
            alpha = alpha.with_entry(i, new)
            # posterior mean of the new coefficient given the rest of the model
            w[:, i] = q / (new + s)
        elif old is not None and not np.isfinite(new):
            gain = -alpha_part(old, q, s, state.omega, data.m)
            if not gain > 0 or alpha.active.size == 1:
                continue
            alpha = alpha.with_entry(i, None)
            w[:, i] = 0.0
        else:
            continue
        best = max(best, gain)
        changes += 1
        active = alpha.active
        sxx_inv, _ = _sxx_inverse(data, active, alpha)
        q_all, s_all = _all_qs(stats, active, sxx_inv)
    if changes:
        rho = compute_rho(data.x[alpha.active])
        sxx_diag = np.where(alpha.pruned, rho, alpha.values + rho)
        state = replace(state, w=w, w_anchor=w.copy(), rho=rho, sxx_diag=sxx_diag, alpha=alpha)
    return state, changes, best


def hybrid_fit(data: Dataset, config: FitConfig = FitConfig(), hyper: HyperpriorConfig = HyperpriorConfig(),
               glasso: GlassoConfig | None = None, sweeps_per_pass=1, order="random", track_mlf=True,
               callback=None) -> ArdState:
    """Hybrid NARD: sequential membership screening interleaved with surrogate sweeps.

    The fit starts from the single best-aligned feature. Each iteration is
    one screening pass over all features in seeded random order (exact
    ``Q, S`` from the active set) followed by ``sweeps_per_pass`` surrogate
    sweeps that update ``W``, ``V``, ``Omega`` and ``alpha`` on the active
    set; ``rho`` is recomputed whenever membership changes. The fit stops
    when a pass changes nothing and the last sweep moved ``W`` by at most
    ``config.epsilon`` (Frobenius), or after ``config.max_iter`` iterations.
    ``callback(iteration, {"state": ..., "changes": ...})`` runs after each
    iteration.
    """
    from .sequential import initial_feature

    _check_hyper(hyper)
    if int(sweeps_per_pass) < 1:
        raise ParameterError("sweeps_per_pass must be >= 1")
    if order not in ("random", "cyclic"):
        raise ParameterError("order must be 'random' or 'cyclic'")
    gcfg = glasso_config_for(config, glasso)
    stats = _Stats(data, hyper)
    rng = substream(config.seed, "sequential")
    v, omega = _initial_omega(data, hyper, gcfg)
    i0 = initial_feature(data)
    s0 = float(stats.phi_sq[i0])
    a0 = optimal_alpha(stats.yxt[:, i0], s0, omega, data.m)
    if not np.isfinite(a0):
        a0 = s0
    alpha = AlphaVector.from_values(np.full(data.d, np.inf)).with_entry(i0, a0)
    w = np.zeros((data.m, data.d))
    w[:, i0] = stats.yxt[:, i0] / (a0 + s0)
    rho = compute_rho(data.x[[i0]])
    state = SurrogateState(w=w, w_anchor=w.copy(), rho=rho, sxx_diag=np.where(alpha.pruned, rho, alpha.values + rho),
                           v=v, omega=omega, alpha=alpha)
    scale = max(float(np.linalg.norm(w)), 1.0)
    trace = []
    converged = False
    for t in range(1, int(config.max_iter) + 1):
        state, changes, best = _screen(state, data, stats, rng, order)
        change = 0.0
        for _ in range(int(sweeps_per_pass)):
            prev = state.w
            state = _sweep(state, data, gcfg, hyper, config.prune_threshold, stats.yxt, scale)
            change = float(np.linalg.norm(state.w - prev))
        mlf = surrogate_neg_log_mlf(state, data) if track_mlf and state.alpha.active.size else None
        trace.append(TraceRecord(iteration=t, neg_log_mlf=mlf, max_delta_inv_alpha=None,
                                 n_active=int(state.alpha.active.size), change=change,
                                 extra={"membership_changes": changes, "best_gain": best}))
        if callback is not None:
            callback(t, {"state": state, "changes": changes})
        if state.alpha.active.size == 0:
            warnings.warn("all features were pruned; returning an empty model", ConvergenceWarning, stacklevel=2)
            break
        if changes == 0 and best <= config.epsilon and change <= config.epsilon:
            converged = True
            break
    state = replace(state, iter=len(trace))
    return _to_ard(state, data, trace, converged, config.lam, "hybrid")
