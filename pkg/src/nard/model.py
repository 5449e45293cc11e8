"""Domain types and the marginal-likelihood evaluator used by every solver.

Shapes follow the column-per-sample convention: ``x`` is ``d x N``,
``y`` is ``m x N`` and the coefficient matrix ``W`` is ``m x d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import DataError, ParameterError
from .linalg import assert_pd, factor_with_jitter, woodbury_c_inverse

DEFAULT_PRUNE_THRESHOLD = 1e12
METHODS = ("nard", "sequential", "surrogate", "hybrid")


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    feature_names: Optional[Sequence[str]] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or y.ndim != 2:
            raise DataError("x and y must be 2-D matrices")
        if x.shape[1] != y.shape[1]:
            raise DataError(f"x has {x.shape[1]} columns but y has {y.shape[1]}")
        if x.shape[1] < 1:
            raise DataError("need at least one sample")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("x and y must be finite")
        if self.feature_names is not None and len(self.feature_names) != x.shape[0]:
            raise DataError("feature_names length does not match the rows of x")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def d(self):
        return self.x.shape[0]

    @property
    def m(self):
        return self.y.shape[0]

    @property
    def n(self):
        return self.x.shape[1]

    def subset(self, columns) -> "Dataset":
        """Samples selected by ``columns`` (indices or boolean mask)."""
        return Dataset(self.x[:, columns], self.y[:, columns], self.feature_names)


@dataclass(frozen=True)
class AlphaVector:
    """Per-feature ARD precisions with an explicit pruned flag.

    A pruned entry stands for ``alpha_i = inf``. Its slot in ``values`` is
    kept at zero and never read; use :attr:`active` and :meth:`finite`.
    """

    values: np.ndarray
    pruned: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        pruned = np.array(self.pruned, dtype=bool)
        if values.shape != pruned.shape or values.ndim != 1:
            raise ValueError("values and pruned must be 1-D with equal length")
        values[pruned] = 0.0
        live = ~pruned
        if np.any(~np.isfinite(values[live])) or np.any(values[live] <= 0):
            raise ValueError("unpruned alpha entries must be finite and positive")
        values.setflags(write=False)
        pruned.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "pruned", pruned)

    @classmethod
    def full(cls, d, value=1.0):
        return cls(np.full(d, float(value)), np.zeros(d, dtype=bool))

    @classmethod
    def from_values(cls, values, prune_threshold=DEFAULT_PRUNE_THRESHOLD, pruned=None):
        """Build from raw values; entries above the threshold, infinite or
        flagged in ``pruned`` become pruned."""
        values = np.asarray(values, dtype=float)
        mask = ~np.isfinite(values) | (values > prune_threshold)
        if pruned is not None:
            mask |= np.asarray(pruned, dtype=bool)
        return cls(np.where(mask, 0.0, values), mask)

    def __len__(self):
        return self.values.size

    @property
    def d(self):
        return self.values.size

    @property
    def active(self):
        return np.flatnonzero(~self.pruned)

    def finite(self):
        return self.values[~self.pruned]

    def reciprocal(self):
        """``1/alpha`` with pruned entries mapped to 0."""
        out = np.zeros(self.d)
        live = ~self.pruned
        out[live] = 1.0 / self.values[live]
        return out

    def with_entry(self, i, value):
        """Copy with entry ``i`` set to ``value`` (``None`` or inf prunes it)."""
        values = self.values.copy()
        pruned = self.pruned.copy()
        if value is None or not np.isfinite(value):
            pruned[i] = True
            values[i] = 0.0
        else:
            pruned[i] = False
            values[i] = float(value)
        return AlphaVector(values, pruned)

    def to_list(self):
        return ["inf" if p else float(v) for v, p in zip(self.values, self.pruned)]

    @classmethod
    def from_list(cls, items):
        pruned = np.array([isinstance(v, str) and v == "inf" for v in items])
        values = np.array([0.0 if p else float(v) for v, p in zip(items, pruned)])
        return cls(values, pruned)


@dataclass
class TraceRecord:
    """Per-iteration diagnostics.

    ``max_delta_inv_alpha`` is the NARD convergence metric; solvers that
    stop on a different quantity record it in ``change`` (``None`` when not
    applicable). ``neg_log_mlf`` is ``None`` when tracking was disabled.
    """

    iteration: int
    neg_log_mlf: Optional[float]
    max_delta_inv_alpha: Optional[float]
    n_active: int
    change: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "neg_log_mlf": self.neg_log_mlf,
            "max_delta_inv_alpha": self.max_delta_inv_alpha,
            "n_active": self.n_active,
            "change": self.change,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            iteration=d["iteration"],
            neg_log_mlf=d["neg_log_mlf"],
            max_delta_inv_alpha=d["max_delta_inv_alpha"],
            n_active=d["n_active"],
            change=d.get("change"),
            extra=dict(d.get("extra") or {}),
        )


@dataclass
class ArdState:
    """Result of a fit.

    ``sigma`` is the posterior column covariance restricted to the active
    features, ordered as ``alpha.active``; pruned rows and columns would be
    zero and are not stored.
    """

    alpha: AlphaVector
    v: np.ndarray
    omega: np.ndarray
    w: np.ndarray
    mu: np.ndarray
    sigma: Optional[np.ndarray]
    iter: int = 0
    trace: List[TraceRecord] = field(default_factory=list)
    converged: bool = False
    method: str = "nard"
    lam: float = 0.0

    @property
    def active(self):
        return self.alpha.active


@dataclass(frozen=True)
class Flat:
    pass


@dataclass(frozen=True)
class Gamma:
    a: float
    b: float

    def __post_init__(self):
        # b = 0 is admitted so that Gamma(1, 0) reproduces the flat update exactly.
        if not self.a > 0 or not self.b >= 0:
            raise ParameterError(f"Gamma prior needs a > 0 and b >= 0, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class InverseWishart:
    psi: np.ndarray
    nu: float

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        if not self.nu > 0:
            raise ParameterError(f"inverse-Wishart nu must be positive, got {self.nu}")
        try:
            assert_pd(psi)
        except Exception as exc:
            raise ParameterError("inverse-Wishart psi must be symmetric positive definite") from exc
        object.__setattr__(self, "psi", psi)


@dataclass(frozen=True)
class HyperpriorConfig:
    alpha_prior: object = Flat()
    v_prior: object = Flat()

    def __post_init__(self):
        if not isinstance(self.alpha_prior, (Flat, Gamma)):
            raise ParameterError("alpha_prior must be Flat or Gamma")
        if not isinstance(self.v_prior, (Flat, InverseWishart)):
            raise ParameterError("v_prior must be Flat or InverseWishart")


@dataclass(frozen=True)
class FitConfig:
    lam: float = 0.1
    epsilon: float = 1e-4
    max_iter: int = 1000
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD
    method: str = "nard"
    seed: int = 0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ParameterError("lambda must be >= 0")
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be > 0")
        if int(self.max_iter) < 1:
            raise ParameterError("max_iter must be >= 1")
        if not self.prune_threshold > 0:
            raise ParameterError("prune_threshold must be > 0")
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; choose from {METHODS}")
        if int(self.seed) < 0:
            raise ParameterError("seed must be non-negative")


def _check_alpha(data, alpha):
    if alpha.d != data.d:
        raise DataError(f"alpha has length {alpha.d} but x has {data.d} rows")


def residual_scatter(data, alpha):
    """``Y C^{-1} Y^T`` and ``ln|C|`` over the active features.

    Uses ``Y C^{-1} Y^T = Y Y^T - S_yx S_xx^{-1} S_yx^T`` and
    ``|C| = |S_xx| / |K|`` so that only a ``p x p`` factorization is needed.
    """
    _check_alpha(data, alpha)
    act = alpha.active
    yyt = data.y @ data.y.T
    if act.size == 0:
        return yyt, 0.0
    xa = data.x[act]
    k = alpha.finite()
    sxx = xa @ xa.T
    sxx[np.diag_indices(act.size)] += k
    fac = factor_with_jitter(sxx)
    syx = data.y @ xa.T
    scatter = yyt - syx @ fac.solve(syx.T)
    logdet_c = fac.logdet() - float(np.sum(np.log(k)))
    return 0.5 * (scatter + scatter.T), logdet_c


def neg_log_mlf_omega(data, alpha, omega, lam=0.0):
    """Negative log-MLF (times two, no constant) parameterized by the precision.

    With ``lam > 0`` the graphical-lasso penalty ``N * lam * sum_{i!=j}|w_ij|``
    is added, giving the penalized objective the sequential solvers climb.
    """
    scatter, logdet_c = residual_scatter(data, alpha)
    fac = assert_pd(omega)
    value = data.m * logdet_c - data.n * fac.logdet() + float(np.sum(omega * scatter))
    if lam:
        off = np.abs(omega).sum() - np.abs(np.diag(omega)).sum()
        value += data.n * lam * off
    return value


def neg_log_mlf(data: Dataset, alpha: AlphaVector, v) -> float:
    """``m ln|C| + N ln|V| + Tr(Y^T V^{-1} Y C^{-1})`` over the active features.

    This is twice the negative log evidence with the ``mN ln 2 pi``
    constant dropped. With every feature pruned ``C`` is the identity.
    Raises :class:`~nard.errors.NotPositiveDefiniteError` if ``v`` is not PD.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (data.m, data.m):
        raise DataError(f"v must be {data.m}x{data.m}")
    fac = assert_pd(v)
    scatter, logdet_c = residual_scatter(data, alpha)
    return data.m * logdet_c + data.n * fac.logdet() + float(np.trace(fac.solve(scatter)))


def mlf_variational_check(data: Dataset, alpha: AlphaVector, mu) -> float:
    """Max-abs gap between ``Y C^{-1} Y^T`` and its latent-variable form.

    ``mu`` may be ``m x d`` (pruned columns ignored) or ``m x p`` over the
    active set. ``C^{-1}`` is formed densely through the Woodbury route so
    the check is independent of the posterior solve that produced ``mu``.
    """
    _check_alpha(data, alpha)
    act = alpha.active
    mu = np.asarray(mu, dtype=float)
    if mu.shape[1] == data.d and act.size != data.d:
        mu = mu[:, act]
    xa = data.x[act]
    cinv = woodbury_c_inverse(xa, alpha.finite())
    lhs = data.y @ cinv @ data.y.T
    resid = data.y - mu @ xa
    rhs = resid @ resid.T + (mu * alpha.finite()) @ mu.T
    return float(np.max(np.abs(lhs - rhs)))
