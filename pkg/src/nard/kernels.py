"""Explicit nonlinear feature maps applied before any solver."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb
from typing import Optional

import numpy as np

from .errors import ParameterError
from .model import Dataset
from .synth import substream

MAX_FEATURES = 10**6


@dataclass(frozen=True)
class Polynomial:
    degree: int = 2
    include_bias: bool = True

    def __post_init__(self):
        if self.degree not in (2, 3):
            raise ParameterError(f"polynomial degree must be 2 or 3, got {self.degree}")


@dataclass(frozen=True)
class RbfRandomFeatures:
    gamma: float = 1.0
    n_features: int = 500
    seed: int = 0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError("RBF gamma must be positive")
        if int(self.n_features) < 1:
            raise ParameterError("RBF n_features must be >= 1")
        if int(self.seed) < 0:
            raise ParameterError("seed must be non-negative")


@dataclass(frozen=True)
class KernelSpec:
    """``kind`` is None (identity), :class:`Polynomial` or :class:`RbfRandomFeatures`."""

    kind: Optional[object] = None

    def __post_init__(self):
        if self.kind is not None and not isinstance(self.kind, (Polynomial, RbfRandomFeatures)):
            raise ParameterError("kernel kind must be None, Polynomial or RbfRandomFeatures")


def polynomial_size(d, degree, include_bias=True):
    """Number of monomials of ``d`` variables with degree 1..``degree`` (plus bias)."""
    return sum(comb(d + k - 1, k) for k in range(1, degree + 1)) + int(include_bias)


def _names(data):
    if data.feature_names is not None:
        return [str(n) for n in data.feature_names]
    return [f"x{i}" for i in range(data.d)]


def _polynomial(data, kind):
    size = polynomial_size(data.d, kind.degree, kind.include_bias)
    if size > MAX_FEATURES:
        raise ParameterError(f"polynomial expansion would create {size} features (limit {MAX_FEATURES})")
    base = _names(data)
    rows, names = [], []
    if kind.include_bias:
        rows.append(np.ones(data.n))
        names.append("1")
    for k in range(1, kind.degree + 1):
        for combo in combinations_with_replacement(range(data.d), k):
            rows.append(np.prod(data.x[list(combo)], axis=0))
            names.append("*".join(base[i] for i in combo))
    return Dataset(np.vstack(rows), data.y, names)


def _rbf(data, kind):
    rng = substream(kind.seed, "rbf")
    dim = int(kind.n_features)
    omega = rng.normal(0.0, np.sqrt(2.0 * kind.gamma), size=(dim, data.d))
    b = rng.uniform(0.0, 2.0 * np.pi, size=dim)
    phi = np.sqrt(2.0 / dim) * np.cos(omega @ data.x + b[:, None])
    names = [f"rff{j}(gamma={kind.gamma:g})" for j in range(dim)]
    return Dataset(phi, data.y, names)


def expand(data: Dataset, spec: KernelSpec) -> Dataset:
    """Replace ``X`` by ``Phi(X)``.

    Polynomial maps list the bias row (if any), then the degree-1, degree-2,
    ... monomials in lexicographic index order, so ``(a, b)`` at degree 2
    becomes ``(1, a, b, a^2, ab, b^2)``. RBF maps use random Fourier
    features ``sqrt(2/D) cos(w_j^T x + b_j)`` with ``w_j ~ N(0, 2 gamma I)``
    and ``b_j ~ U[0, 2 pi)`` drawn from ``seed``. ``kind=None`` returns
    ``data`` itself.
    """
    kind = spec.kind
    if kind is None:
        return data
    if isinstance(kind, Polynomial):
        return _polynomial(data, kind)
    return _rbf(data, kind)
