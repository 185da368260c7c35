"""Derivative-based FPCA for one component: eigenfunctions, noise variance, MME scores.

Eigenfunctions of the smoothed derivative covariance
``B_der(s)^T Theta B_der(t)`` live in the span of ``B_der``, so they are
written ``phi_k(t) = B_der(t)^T alpha_k`` and found from the c x c problem
``G^{1/2} Theta G^{1/2} = Q V Q^T`` with ``alpha_k = G^{-1/2} Q_k``; the J x J
surface is never decomposed.

For ``d >= 1`` the Gram matrix ``G`` has a ``d``-dimensional null space
(coefficients of polynomials of degree below ``d``, whose derivative is
zero).  Square roots are therefore taken on the range of ``G``, which yields
``c - d`` eigenpairs; the null directions carry no function and are dropped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .errors import DegenerateCovarianceError, GridMismatchError, InvalidArgumentError, NumericError
from .face import (
    DEFAULT_GRID,
    FunctionalSample,
    GcvGrid,
    GridSpec,
    SmootherFit,
    center_sample,
    fit_face,
)
from .numerics import SINGULAR_RTOL, clamp_psd, grid_quadrature, sym_eigen
from .splinebasis import BSplineBasis, derivative_basis, gram_matrix

__all__ = [
    "DEFAULT_THRESHOLD",
    "DerivEigenSystem",
    "ScoreSet",
    "DerivCurves",
    "DfpcaResult",
    "truncation_index",
    "eigensystem",
    "curve_derivatives",
    "noise_variance",
    "scores",
    "reconstruct",
    "run_dfpca",
]

DEFAULT_THRESHOLD = 0.95
# eigenvalues below this fraction of nu_1 are raised to it inside V^{-1}
NU_FLOOR_RTOL = 1e-12


@dataclass(frozen=True)
class DerivEigenSystem:
    """Eigenvalues ``nu`` (descending) and coefficient vectors ``alpha`` (columns)."""

    d: int
    nu: NDArray[np.float64]
    alpha: NDArray[np.float64] = field(repr=False)
    K: int
    basis: BSplineBasis
    G: NDArray[np.float64] = field(repr=False)
    threshold: float = DEFAULT_THRESHOLD
    sigma2: float = 0.0

    def eigenfunctions(self, grid: ArrayLike, k: int | None = None) -> NDArray[np.float64]:
        """``phi_1 .. phi_k`` evaluated on ``grid`` as columns (``k`` defaults to ``K``)."""
        k = self.K if k is None else k
        return derivative_basis(self.basis, self.d, np.atleast_1d(grid)) @ self.alpha[:, :k]


@dataclass(frozen=True)
class ScoreSet:
    """Per-curve scores: ``xi[i, k]`` for curve ``i``, component ``k``."""

    xi: NDArray[np.float64]
    nu_used: NDArray[np.float64]
    sigma2: float

    @property
    def K(self) -> int:
        return self.xi.shape[1]

    @property
    def n(self) -> int:
        return self.xi.shape[0]


@dataclass(frozen=True)
class DerivCurves:
    """Derivative curves on a grid, one per column of ``curves``."""

    grid: NDArray[np.float64]
    curves: NDArray[np.float64]
    coeffs: NDArray[np.float64] | None = field(default=None, repr=False)


def truncation_index(values: ArrayLike, threshold: float = DEFAULT_THRESHOLD) -> int:
    """Smallest ``K`` with ``sum(values[:K]) / sum(values) >= threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise InvalidArgumentError(f"variance threshold must lie in (0, 1], got {threshold}")
    v = np.asarray(values, dtype=float)
    total = v.sum()
    if v.size == 0 or total <= 0:
        raise DegenerateCovarianceError("no positive eigenvalue to truncate")
    ratio = np.cumsum(v) / total
    ratio[-1] = 1.0
    return int(np.argmax(ratio >= threshold)) + 1


def _range_factor(G: NDArray[np.float64], nullity: int):
    """Orthonormal basis ``W`` of range(G) and the matching eigenvalues."""
    eig = sym_eigen(G)
    rank = G.shape[0] - nullity
    g = eig.values[:rank]
    if g[-1] <= SINGULAR_RTOL * g[0]:
        raise NumericError(f"Gram matrix has more than {nullity} null directions (eigenvalue {g[-1]:.3e})")
    if nullity and np.max(np.abs(eig.values[rank:])) > 1e-8 * g[0]:
        raise NumericError("Gram matrix null space is not numerically null")
    return eig.vectors[:, :rank], g


def eigensystem(fit: SmootherFit, d: int | None = None, threshold: float = DEFAULT_THRESHOLD) -> DerivEigenSystem:
    """Derivative-based eigenvalues and eigenfunction coefficients from ``Theta``.

    Parameters
    ----------
    fit : SmootherFit
        FACE fit with ``Theta`` estimated.
    d : int, optional
        Derivative order; defaults to ``fit.d``.
    threshold : float
        Fraction of variance that the first ``K`` eigenvalues must explain.

    Returns
    -------
    DerivEigenSystem
        ``c - d`` eigenpairs with ``alpha^T G alpha = I`` and the minimal
        truncation ``K``.  ``sigma2`` is left at 0; see :func:`noise_variance`.
    """
    if fit.Theta is None:
        raise InvalidArgumentError("Theta has not been estimated for this fit")
    d = fit.d if d is None else d
    G = gram_matrix(fit.basis, d)
    W, g = _range_factor(G, d)
    root = W * np.sqrt(g)
    M = root.T @ fit.Theta @ root
    eig = sym_eigen(M)
    nu = clamp_psd(eig.values, scale=float(np.trace(M)))
    if nu.sum() <= 0:
        raise DegenerateCovarianceError("smoothed derivative covariance is identically zero")
    Q = W @ eig.vectors
    alpha = (W / np.sqrt(g)) @ eig.vectors
    # sign convention on Q = G^{1/2} alpha, the c-space eigenvector
    pivot = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[pivot, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    alpha = alpha * signs
    return DerivEigenSystem(
        d=d,
        nu=nu,
        alpha=alpha,
        K=truncation_index(nu, threshold),
        basis=fit.basis,
        G=G,
        threshold=threshold,
    )


def curve_derivatives(sample: FunctionalSample, fit: SmootherFit, d: int | None = None) -> DerivCurves:
    """Derivatives of the FACE-smoothed curves, ``Y_i^d = B_der theta_i``.

    ``theta_i = A0 Sigma_s A0^T B^T Y_i`` for all curves at once.
    """
    if sample.grid.shape != fit.grid.shape or not np.allclose(sample.grid, fit.grid, rtol=0, atol=1e-12):
        raise GridMismatchError("sample and smoother were built on different grids")
    d = fit.d if d is None else d
    coeffs = fit.coefficient_map() @ sample.Y
    Bd = derivative_basis(fit.basis, d, sample.grid)
    return DerivCurves(grid=sample.grid, curves=Bd @ coeffs, coeffs=coeffs)


def noise_variance(
    derivs: DerivCurves,
    fit: SmootherFit,
    d: int | None = None,
    eigsys: DerivEigenSystem | None = None,
) -> float:
    """Integrated gap between the raw and smoothed derivative-covariance diagonals.

    The raw diagonal is that of ``n^{-1} Y^d (Y^d)^T``.  The smoothed diagonal
    is that of ``B_der Theta B_der^T`` when ``eigsys`` is None.  Because
    ``Y^d`` is itself built from the FACE coefficients, those two diagonals
    coincide and the result is zero up to rounding.  Passing ``eigsys`` uses
    the rank-``K`` Mercer diagonal ``sum_{k<=K} nu_k phi_k(s)^2`` instead, so
    the estimate is the derivative variance left outside the retained
    components, which is the error term of the truncated score model.

    Negative values are clamped to zero with a warning.
    """
    d = fit.d if d is None else d
    Yd = derivs.curves
    raw = np.einsum("jn,jn->j", Yd, Yd) / Yd.shape[1]
    if eigsys is None:
        if fit.Theta is None:
            raise InvalidArgumentError("Theta has not been estimated for this fit")
        Bd = derivative_basis(fit.basis, d, derivs.grid)
        smooth = np.einsum("jc,cd,jd->j", Bd, fit.Theta, Bd)
    else:
        phi = eigsys.eigenfunctions(derivs.grid)
        smooth = (phi**2) @ eigsys.nu[: eigsys.K]
    sigma2 = grid_quadrature(raw - smooth, derivs.grid)
    if sigma2 < 0:
        warnings.warn(f"negative noise variance estimate {sigma2:.3e} clamped to 0", RuntimeWarning, stacklevel=2)
        sigma2 = 0.0
    return float(sigma2)


def scores(
    derivs: DerivCurves,
    eigsys: DerivEigenSystem,
    grid: ArrayLike | None = None,
    n_components: int | None = None,
    sigma2: float | None = None,
) -> ScoreSet:
    """Mixed-model-equation scores ``xi_i = (Phi^T Phi + sigma^2 V^{-1})^{-1} Phi^T Y_i^d``.

    ``Phi`` holds the first ``n_components`` (default ``K``) eigenfunctions on
    the grid.  Inner products are plain sums over grid points.  ``sigma2``
    defaults to ``eigsys.sigma2``.
    """
    grid = derivs.grid if grid is None else np.asarray(grid, dtype=float)
    if grid.shape[0] != derivs.curves.shape[0]:
        raise GridMismatchError("grid length does not match the derivative curves")
    k = eigsys.K if n_components is None else int(n_components)
    if not 1 <= k <= eigsys.nu.shape[0]:
        raise InvalidArgumentError(f"number of components must be in [1, {eigsys.nu.shape[0]}], got {k}")
    s2 = eigsys.sigma2 if sigma2 is None else float(sigma2)
    if s2 < 0:
        raise InvalidArgumentError("noise variance must be nonnegative")
    Phi = eigsys.eigenfunctions(grid, k)
    nu = eigsys.nu[:k]
    nu_floor = np.maximum(nu, NU_FLOOR_RTOL * eigsys.nu[0])
    normal = Phi.T @ Phi + np.diag(s2 / nu_floor)
    factor = scipy.linalg.cho_factor(normal)
    xi = scipy.linalg.cho_solve(factor, Phi.T @ derivs.curves).T
    return ScoreSet(xi=xi, nu_used=nu.copy(), sigma2=s2)


def reconstruct(
    score_set: ScoreSet,
    eigsys: DerivEigenSystem,
    grid: ArrayLike,
    mean: ArrayLike | None = None,
) -> DerivCurves:
    """Truncated Karhunen-Loeve sum ``sum_k xi_ik phi_k(t)``, plus ``mean`` if given."""
    grid = np.asarray(grid, dtype=float)
    Phi = eigsys.eigenfunctions(grid, score_set.K)
    curves = Phi @ score_set.xi.T
    if mean is not None:
        curves = curves + np.asarray(mean, dtype=float)[:, None]
    return DerivCurves(grid=grid, curves=curves)


@dataclass(frozen=True)
class DfpcaResult:
    """Everything produced by one univariate derivative FPCA run."""

    sample: FunctionalSample
    fit: SmootherFit
    gcv: GcvGrid
    eigsys: DerivEigenSystem
    derivs: DerivCurves
    scores: ScoreSet
    mean_derivative: NDArray[np.float64]

    @property
    def grid(self) -> NDArray[np.float64]:
        return self.sample.grid

    def eigenfunctions(self, grid: ArrayLike | None = None) -> NDArray[np.float64]:
        return self.eigsys.eigenfunctions(self.grid if grid is None else grid)

    def fitted_derivatives(self) -> NDArray[np.float64]:
        """Reconstructed derivatives including the mean derivative (J x n)."""
        return reconstruct(self.scores, self.eigsys, self.grid, self.mean_derivative).curves


def run_dfpca(
    sample: FunctionalSample,
    basis: BSplineBasis,
    l1: int = 2,
    l2: int = 3,
    d: int = 1,
    grid_spec: GridSpec = DEFAULT_GRID,
    threshold: float = DEFAULT_THRESHOLD,
) -> DfpcaResult:
    """Centering, FACE fit, eigencomponents, noise variance and scores in one call."""
    if not sample.centered:
        sample = center_sample(sample, basis, grid_spec)
    fit, gcv = fit_face(sample, basis, l1, l2, grid_spec, d)
    eig = eigensystem(fit, d, threshold)
    derivs = curve_derivatives(sample, fit, d)
    eig = replace(eig, sigma2=noise_variance(derivs, fit, d, eigsys=eig))
    score_set = scores(derivs, eig)
    if sample.mean_coeffs is not None:
        mean_derivative = derivative_basis(basis, d, sample.grid) @ sample.mean_coeffs
    else:
        mean_derivative = np.zeros(sample.J)
    return DfpcaResult(
        sample=sample,
        fit=fit,
        gcv=gcv,
        eigsys=eig,
        derivs=derivs,
        scores=score_set,
        mean_derivative=mean_derivative,
    )
