"""Synthetic benchmark generator and support-recovery metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from .errors import ParameterError

# Named sub-streams so each consumer of randomness is independent of the others.
STREAMS = {"simulate": 0, "sequential": 1, "rbf": 2, "cv": 3}


def substream(seed, name):
    """Generator for the named sub-stream of ``seed``."""
    return np.random.default_rng([int(seed), STREAMS[name]])


@dataclass(frozen=True)
class SynthSpec:
    """Generation constants.

    ``graph_sparsity`` is the Erdos-Renyi edge probability of the precision
    graph. ``w_sparsity`` is the fraction of features (columns of ``W``)
    that carry signal; every entry of a relevant column is nonzero.
    """

    d: int = 100
    m: int = 20
    n: int = 200
    graph_sparsity: float = 0.1
    w_sparsity: float = 0.1
    w_range: Tuple[float, float] = (0.5, 2.0)
    omega_offdiag_range: Tuple[float, float] = (0.4, 0.8)
    min_eigen: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("d", "m", "n"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be a positive count")
        if not 0 <= self.graph_sparsity <= 1:
            raise ParameterError("graph_sparsity must lie in [0, 1]")
        if not 0 < self.w_sparsity <= 1:
            raise ParameterError("w_sparsity must lie in (0, 1]")
        for name in ("w_range", "omega_offdiag_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ParameterError(f"{name} must satisfy 0 <= low <= high")
        if not self.min_eigen > 0:
            raise ParameterError("min_eigen must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass
class GroundTruth:
    w_true: np.ndarray
    omega_true: np.ndarray
    x: np.ndarray
    y: np.ndarray
    spec: SynthSpec = None


def random_precision(m, p, value_range, min_eigen, rng):
    """Erdos-Renyi precision matrix with a controlled smallest eigenvalue.

    Off-diagonal entries on the sampled edges are uniform on ``value_range``
    with a random sign. The diagonal is then set so that the smallest
    eigenvalue equals ``min_eigen``.
    """
    lo, hi = value_range
    upper = np.triu(rng.random((m, m)) < p, k=1)
    vals = rng.uniform(lo, hi, size=(m, m)) * rng.choice([-1.0, 1.0], size=(m, m))
    a = np.where(upper, vals, 0.0)
    a = a + a.T
    lam_min = np.linalg.eigvalsh(a)[0] if m > 0 else 0.0
    omega = a + (min_eigen - lam_min) * np.eye(m)
    return omega, upper | upper.T


def sample_noise(omega, n, rng):
    """``n`` columns drawn from ``Normal(0, omega^{-1})``."""
    chol = np.linalg.cholesky(omega)
    z = rng.standard_normal((omega.shape[0], n))
    return np.linalg.solve(chol.T, z)


def generate(spec: SynthSpec) -> GroundTruth:
    """Draw ``(W, Omega, X, Y)`` with ``Y = W X + E``, ``E ~ N(0, Omega^{-1})``."""
    rng = substream(spec.seed, "simulate")
    omega, _ = random_precision(spec.m, spec.graph_sparsity, spec.omega_offdiag_range, spec.min_eigen, rng)
    k = max(1, int(round(spec.w_sparsity * spec.d)))
    cols = np.sort(rng.choice(spec.d, size=k, replace=False))
    lo, hi = spec.w_range
    w = np.zeros((spec.m, spec.d))
    w[:, cols] = rng.uniform(lo, hi, size=(spec.m, k)) * rng.choice([-1.0, 1.0], size=(spec.m, k))
    x = rng.standard_normal((spec.d, spec.n))
    y = w @ x + sample_noise(omega, spec.n, rng)
    return GroundTruth(w_true=w, omega_true=omega, x=x, y=y, spec=spec)


def support(mat, tol=0.0, precision=False):
    """Mask of entries with ``|value| > tol``; the diagonal is dropped for precisions."""
    mask = np.abs(np.asarray(mat)) > tol
    if precision:
        mask = mask.copy()
        np.fill_diagonal(mask, False)
    return mask


def _scored(est, truth, offdiag):
    est = np.asarray(est, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if est.shape != truth.shape:
        raise ValueError(f"mask shapes differ: {est.shape} vs {truth.shape}")
    if offdiag:
        keep = ~np.eye(est.shape[0], dtype=bool)
        return est[keep], truth[keep]
    return est.ravel(), truth.ravel()


def tpr_fpr(est, truth, offdiag=False):
    """True- and false-positive rates of ``est`` against ``truth``.

    With no positives in ``truth`` the TPR is reported as 1.0, and with no
    negatives the FPR is 0.0. ``offdiag=True`` scores only off-diagonal
    entries of square masks.
    """
    e, t = _scored(est, truth, offdiag)
    tp = np.sum(e & t)
    fn = np.sum(~e & t)
    fp = np.sum(e & ~t)
    tn = np.sum(~e & ~t)
    tpr = 1.0 if tp + fn == 0 else tp / (tp + fn)
    fpr = 0.0 if fp + tn == 0 else fp / (fp + tn)
    return float(tpr), float(fpr)


def jaccard(a, b, offdiag=False):
    """``|a & b| / |a | b|``; two empty masks give 1.0."""
    x, y = _scored(a, b, offdiag)
    union = np.sum(x | y)
    if union == 0:
        return 1.0
    return float(np.sum(x & y) / union)
