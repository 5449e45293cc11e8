"""Dense linear-algebra primitives shared by the solvers.

Everything here is a pure function of its inputs. Symmetric outputs are
explicitly symmetrized so that drift does not accumulate over long runs.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import ConditioningError, NotPositiveDefiniteError

JITTER_BASE = 1e-10
JITTER_RETRIES = 3
JITTER_GROWTH = 10.0


def symmetrize(a):
    return 0.5 * (a + a.T)


class PDFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Parameters
    ----------
    lower : ndarray, shape (n, n)
        Lower triangular factor ``L`` with ``A = L L^T``.
    jitter : float
        Diagonal shift that was added to ``A`` before factoring (0 if none).
    """

    def __init__(self, lower, jitter=0.0):
        self.lower = lower
        self.jitter = float(jitter)

    @property
    def n(self):
        return self.lower.shape[0]

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, b):
        y = solve_triangular(self.lower, b, lower=True, check_finite=False)
        return solve_triangular(self.lower, y, lower=True, trans="T", check_finite=False)

    def inverse(self):
        if self.n == 0:
            return np.zeros((0, 0))
        inv, info = lapack.dpotri(self.lower, lower=1)
        if info != 0:
            raise NotPositiveDefiniteError(max(info, 1))
        inv = np.tril(inv) + np.tril(inv, -1).T
        return inv

    def inv_diag(self):
        """Diagonal of ``A^{-1}`` without forming the full inverse."""
        linv = solve_triangular(self.lower, np.eye(self.n), lower=True, check_finite=False)
        return np.einsum("ij,ij->j", linv, linv)


def _potrf(a):
    c, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    return c, info


def assert_pd(a, sym_tol=1e-8) -> PDFactor:
    """Factor ``a`` or raise :class:`NotPositiveDefiniteError`.

    The error carries the 1-based pivot at which the factorization broke.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.size and np.max(np.abs(a - a.T)) > sym_tol * max(1.0, np.max(np.abs(a))):
        raise ValueError("matrix is not symmetric")
    c, info = _potrf(a)
    if info > 0:
        raise NotPositiveDefiniteError(info)
    if info < 0:
        raise ValueError(f"invalid argument {-info} to dpotrf")
    return PDFactor(c)


def factor_with_jitter(a) -> PDFactor:
    """Cholesky with the escalating jitter policy.

    On failure, ``1e-10 * mean(diag)`` is added to the diagonal and the
    factorization retried up to three times, growing the jitter 10x each
    time. Raises :class:`ConditioningError` when all attempts fail.
    """
    a = np.asarray(a, dtype=float)
    c, info = _potrf(a)
    if info == 0:
        return PDFactor(c)
    scale = float(np.mean(np.abs(np.diag(a)))) if a.size else 1.0
    if scale == 0.0 or not np.isfinite(scale):
        scale = 1.0
    jitter = JITTER_BASE * scale
    eye = np.eye(a.shape[0])
    for _ in range(JITTER_RETRIES):
        c, info = _potrf(a + jitter * eye)
        if info == 0:
            return PDFactor(c, jitter)
        jitter *= JITTER_GROWTH
    raise ConditioningError(jitter)


def woodbury_c_inverse(x_active, k_active):
    """``(I + X^T K^{-1} X)^{-1}`` computed as ``I - X^T (X X^T + K)^{-1} X``.

    Parameters
    ----------
    x_active : ndarray, shape (p, N)
        Rows of the active features.
    k_active : ndarray, shape (p,)
        Positive diagonal of ``K`` for those features.

    Returns
    -------
    ndarray, shape (N, N)
        Symmetric inverse of the column covariance ``C``.
    """
    x = np.asarray(x_active, dtype=float)
    k = np.asarray(k_active, dtype=float)
    if x.ndim != 2:
        raise ValueError("x_active must be 2-D")
    p, n = x.shape
    if k.shape != (p,):
        raise ValueError(f"k_active has shape {k.shape}, expected ({p},)")
    if p == 0:
        return np.eye(n)
    if np.any(k <= 0):
        raise ValueError("k_active entries must be positive")
    sxx = x @ x.T
    sxx[np.diag_indices(p)] += k
    fac = factor_with_jitter(sxx)
    cinv = np.eye(n) - x.T @ fac.solve(x)
    return symmetrize(cinv)


@dataclass(frozen=True)
class RankOneUpdate:
    """Data for adding feature ``i`` back into ``C``.

    ``c_inv_prev`` is ``C_{\\i}^{-1}``, ``phi`` the feature's row of ``X``.
    """

    c_inv_prev: np.ndarray
    phi: np.ndarray
    alpha_i: float

    def __post_init__(self):
        if self.alpha_i <= 0:
            raise ValueError("alpha_i must be positive")
        if self.c_inv_prev.shape != (self.phi.size, self.phi.size):
            raise ValueError("c_inv_prev and phi sizes disagree")


def rank_one_det_ratio(u: RankOneUpdate) -> float:
    """``|C| / |C_{\\i}| = 1 + phi^T C_{\\i}^{-1} phi / alpha_i``."""
    s = float(u.phi @ u.c_inv_prev @ u.phi)
    return 1.0 + s / u.alpha_i


def rank_one_inv_update(u: RankOneUpdate):
    """Sherman-Morrison: ``(C_{\\i} + phi phi^T / alpha_i)^{-1}``."""
    cphi = u.c_inv_prev @ u.phi
    s = float(u.phi @ cphi)
    out = u.c_inv_prev - np.outer(cphi, cphi) / (u.alpha_i + s)
    return symmetrize(out)


def spectral_radius(x, tol=1e-10, max_iter=10_000) -> Tuple[float, bool]:
    """Largest eigenvalue of ``X X^T`` by power iteration.

    Iterates on whichever of ``X X^T`` or ``X^T X`` is smaller (they share
    nonzero eigenvalues). The start vector is the normalized all-ones
    vector; if it is annihilated, a deterministic alternating-sign vector
    and then the unit basis vectors are tried in turn.

    Returns
    -------
    rho : float
        Rayleigh-quotient estimate (never above the true value, up to
        rounding).
    converged : bool
        False if ``max_iter`` was reached before the relative change of the
        estimate dropped below ``tol``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.size == 0 or not np.any(x):
        raise ValueError("spectral_radius needs a nonzero 2-D matrix")
    if x.shape[0] <= x.shape[1]:
        apply = lambda v: x @ (x.T @ v)  # noqa: E731
        n = x.shape[0]
    else:
        apply = lambda v: x.T @ (x @ v)  # noqa: E731
        n = x.shape[1]

    def starts():
        yield np.ones(n)
        yield np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            yield e

    for v in starts():
        v = v / np.linalg.norm(v)
        av = apply(v)
        if np.linalg.norm(av) > 0:
            break
    rho = float(v @ av)
    for _ in range(max_iter):
        v = av / np.linalg.norm(av)
        av = apply(v)
        new = float(v @ av)
        if abs(new - rho) <= tol * abs(new):
            return new, True
        rho = new
    return rho, False
