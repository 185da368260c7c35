"""Derivative-based functional principal component analysis with FACE smoothing.

The main entry points are :func:`run_dfpca` for one component and
:func:`run_dmfpca` for several components observed on the same subjects.
"""

from .dfpca import DfpcaResult, reconstruct, run_dfpca
from .dmfpca import DmfpcaResult, reconstruct_multivariate, run_dmfpca
from .errors import (
    ConfigError,
    DataError,
    DegenerateCovarianceError,
    DegenerateSmootherError,
    DomainError,
    FaceDerivError,
    GridMismatchError,
    InvalidArgumentError,
    NumericError,
    SingularMatrixError,
    TooSparseError,
)
from .face import DEFAULT_GRID, FunctionalSample, GridSpec, fit_face
from .simulate import Setting, fill_missing, make_replicate
from .splinebasis import BSplineBasis, make_basis

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BSplineBasis",
    "make_basis",
    "FunctionalSample",
    "GridSpec",
    "DEFAULT_GRID",
    "fit_face",
    "DfpcaResult",
    "run_dfpca",
    "reconstruct",
    "DmfpcaResult",
    "run_dmfpca",
    "reconstruct_multivariate",
    "Setting",
    "make_replicate",
    "fill_missing",
    "FaceDerivError",
    "ConfigError",
    "InvalidArgumentError",
    "DataError",
    "DomainError",
    "GridMismatchError",
    "TooSparseError",
    "NumericError",
    "SingularMatrixError",
    "DegenerateSmootherError",
    "DegenerateCovarianceError",
]
