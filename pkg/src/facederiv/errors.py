"""Exception hierarchy shared across the package.

The CLI maps each family onto an exit code: configuration problems exit with
2, data problems with 3 and numerical failures with 4.
"""


class FaceDerivError(Exception):
    """Base class for all package errors."""


class ConfigError(FaceDerivError, ValueError):
    """Invalid run configuration or function argument."""


class InvalidArgumentError(ConfigError):
    """An argument is outside the range a routine accepts."""


class DataError(FaceDerivError, ValueError):
    """Input data cannot be used as given."""


class DomainError(DataError):
    """Evaluation point lies outside the basis domain."""


class GridMismatchError(DataError):
    """Two objects that must share an observation grid do not."""


class TooSparseError(DataError):
    """A curve has too few observed points to be reconstructed."""


class NumericError(FaceDerivError, ArithmeticError):
    """A numerical routine failed."""


class SingularMatrixError(NumericError):
    """A matrix that must be positive definite is (numerically) singular."""


class DegenerateSmootherError(NumericError):
    """The smoother trace reaches the number of observations, so GCV is undefined."""


class DegenerateCovarianceError(NumericError):
    """A covariance has no positive eigenvalue."""
