"""Exception and warning types raised across the package."""


class NardError(Exception):
    """Base class for all errors raised by this package."""


class NumericalError(NardError):
    """A numerical failure (CLI exit code 3)."""


class DataError(NardError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class NotPositiveDefiniteError(NumericalError):
    """Cholesky factorization failed.

    ``pivot`` is the 1-based index of the leading minor that is not positive.
    """

    def __init__(self, pivot, message=None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix is not positive definite (failed at pivot {self.pivot})")


class ConditioningError(NumericalError):
    """Factorization kept failing after the jitter schedule was exhausted."""

    def __init__(self, suggested_jitter, message=None):
        self.suggested_jitter = float(suggested_jitter)
        super().__init__(
            message
            or f"matrix too ill-conditioned to factor; try a diagonal jitter of at least {self.suggested_jitter:.3g}"
        )


class EmptyModelError(NardError):
    """No active features remain."""


class DegenerateDenominatorError(NumericalError):
    """alpha_i == S_i, so the sparsity/quality conversion is undefined."""


class InstabilityError(NumericalError):
    """An iterative solver diverged."""


class ParameterError(NardError, ValueError):
    """Invalid configuration or hyperparameter value."""


class FoldError(DataError):
    """A cross-validation fold cannot produce a usable covariance."""

    def __init__(self, fold, message=None):
        self.fold = int(fold)
        super().__init__(message or f"fold {self.fold} does not give a positive definite covariance")


class ParseError(DataError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        super().__init__(message)


class EmptyInputError(DataError):
    pass


class ConditioningWarning(UserWarning):
    """A matrix needed a diagonal jitter to become positive definite."""


class ConvergenceWarning(UserWarning):
    pass
