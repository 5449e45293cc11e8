"""Joint sparse multi-output regression and sparse precision estimation.

The solvers estimate a coefficient matrix ``W`` (with per-feature ARD
precisions ``alpha``) together with a sparse output precision ``Omega``
fitted by the graphical lasso.
"""

__version__ = "0.1.0"

from .core import nard_fit, posterior_update, update_alpha_flat, update_alpha_gamma, update_v_flat
from .errors import (
    ConditioningError,
    DataError,
    EmptyModelError,
    InstabilityError,
    NardError,
    NotPositiveDefiniteError,
    NumericalError,
    ParameterError,
)
from .glasso import GlassoConfig, GlassoResult, glasso_fit, select_lambda
from .kernels import KernelSpec, Polynomial, RbfRandomFeatures, expand
from .model import (
    AlphaVector,
    ArdState,
    Dataset,
    FitConfig,
    Flat,
    Gamma,
    HyperpriorConfig,
    InverseWishart,
    neg_log_mlf,
)
from .sequential import sequential_fit
from .surrogate import hybrid_fit, surrogate_fit
from .synth import SynthSpec, generate, jaccard, support, tpr_fpr

SOLVERS = {
    "nard": nard_fit,
    "sequential": sequential_fit,
    "surrogate": surrogate_fit,
    "hybrid": hybrid_fit,
}


def fit(data, config=FitConfig(), hyper=HyperpriorConfig(), **kwargs):
    """Dispatch to the solver named by ``config.method``."""
    return SOLVERS[config.method](data, config, hyper, **kwargs)
