"""Fast covariance estimation (FACE) with an additive P-spline penalty.

The smoother

    S = B (B^T B + lambda_1 P_1 + lambda_2 P_2)^{-1} B^T

is reparametrized by the overall level ``lambda_plus = lambda_1 + lambda_2``
and weight ``w = lambda_1 / lambda_plus``.  For fixed ``w`` one symmetric
eigendecomposition of ``(B^T B)^{-1/2} (w P_1 + (1 - w) P_2) (B^T B)^{-1/2}``
gives ``S = A_s diag(1 / (1 + lambda_plus s)) A_s^T`` for every
``lambda_plus``, so the GCV criterion over a whole ``lambda_plus`` column costs
O(c) per point.  The smoothed covariance is ``S K_hat S = B Theta B^T``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    DataError,
    DegenerateSmootherError,
    GridMismatchError,
    InvalidArgumentError,
    SingularMatrixError,
)
from .numerics import clamp_psd, gram_inv_sqrt, psd_factor, sym_eigen
from .splinebasis import BSplineBasis, derivative_basis, eval_basis, penalty_matrix

__all__ = [
    "FunctionalSample",
    "GridSpec",
    "DEFAULT_GRID",
    "SmootherFit",
    "GcvGrid",
    "center_sample",
    "sample_covariance",
    "lemma1_components",
    "gcv_score",
    "select_smoothing",
    "estimate_theta",
    "covariance_surface",
    "derivative_covariance_surface",
    "fit_face",
    "MEAN_GCV_INFLATION",
]

# relative tolerance under which two GCV values count as tied
_GCV_TIE_RTOL = 1e-12
# degrees-of-freedom inflation for the one-dimensional GCV searches (mean
# curve, per-curve fills); plain GCV on a single averaged curve picks
# near-interpolating fits often enough to wreck the differentiated mean
MEAN_GCV_INFLATION = 1.4


@dataclass(frozen=True)
class FunctionalSample:
    """Curves observed on a common grid; column ``i`` of ``Y`` is curve ``i``."""

    grid: NDArray[np.float64]
    Y: NDArray[np.float64]
    centered: bool = False
    mean_coeffs: NDArray[np.float64] | None = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if grid.ndim != 1 or Y.ndim != 2 or Y.shape[0] != grid.shape[0]:
            raise DataError(f"Y must have shape (J, n) with J = len(grid); got {Y.shape} and {grid.shape}")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise DataError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "Y", Y)

    @property
    def J(self) -> int:
        return self.Y.shape[0]

    @property
    def n(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class GridSpec:
    """Candidate values for the two-dimensional ``(lambda_plus, w)`` search."""

    lambda_values: tuple[float, ...]
    w_values: tuple[float, ...]

    def __post_init__(self):
        # sorted ascending: tie-breaking relies on index order
        lam = tuple(sorted(float(v) for v in np.atleast_1d(self.lambda_values)))
        ws = tuple(sorted(float(v) for v in np.atleast_1d(self.w_values)))
        if not lam or not ws:
            raise InvalidArgumentError("smoothing grid must not be empty")
        if min(lam) < 0:
            raise InvalidArgumentError("lambda_plus values must be nonnegative")
        if min(ws) < 0 or max(ws) > 1:
            raise InvalidArgumentError("w values must lie in [0, 1]")
        object.__setattr__(self, "lambda_values", lam)
        object.__setattr__(self, "w_values", ws)

    @classmethod
    def log_spaced(
        cls,
        lambda_min: float = 1e-6,
        lambda_max: float = 1e6,
        lambda_count: int = 25,
        w_min: float = 0.0,
        w_max: float = 1.0,
        w_count: int = 11,
    ) -> "GridSpec":
        if lambda_min <= 0 or lambda_max < lambda_min or lambda_count < 1:
            raise InvalidArgumentError("need 0 < lambda_min <= lambda_max and lambda_count >= 1")
        if w_count < 1:
            raise InvalidArgumentError("w_count must be at least 1")
        lam = np.logspace(np.log10(lambda_min), np.log10(lambda_max), int(lambda_count))
        ws = np.linspace(w_min, w_max, int(w_count)) if w_count > 1 else np.array([w_min])
        return cls(tuple(lam), tuple(np.round(ws, 12)))


DEFAULT_GRID = GridSpec.log_spaced()


@dataclass(frozen=True)
class SmootherFit:
    """Eigen-factor components of one additive-penalty smoother, plus ``Theta`` once estimated."""

    basis: BSplineBasis
    grid: NDArray[np.float64]
    B: NDArray[np.float64] = field(repr=False)
    lambda_plus: float
    w: float
    U: NDArray[np.float64] = field(repr=False)
    s: NDArray[np.float64] = field(repr=False)
    A0: NDArray[np.float64] = field(repr=False)
    As: NDArray[np.float64] = field(repr=False)
    Sigma_s: NDArray[np.float64] = field(repr=False)
    d: int = 1
    Theta: NDArray[np.float64] | None = field(default=None, repr=False)

    def smoother_matrix(self) -> NDArray[np.float64]:
        """``S = A_s Sigma_s A_s^T`` (J x J)."""
        return (self.As * self.Sigma_s) @ self.As.T

    def coefficient_map(self) -> NDArray[np.float64]:
        """``H = A_0 Sigma_s A_0^T B^T`` (c x J), so that ``theta = H y``."""
        return (self.A0 * self.Sigma_s) @ self.As.T


@dataclass(frozen=True)
class GcvGrid:
    """GCV values over the search grid; ``scores[i, j]`` is at ``(lambda_values[i], w_values[j])``."""

    lambda_values: NDArray[np.float64]
    w_values: NDArray[np.float64]
    scores: NDArray[np.float64]
    lambda_plus: float
    w: float

    @property
    def argmin(self) -> tuple[float, float]:
        return self.lambda_plus, self.w


def _design(basis: BSplineBasis, grid: NDArray[np.float64]):
    B = eval_basis(basis, grid)
    try:
        R = gram_inv_sqrt(B)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"B^T B is singular on a grid of {len(grid)} points with c={basis.c}; "
            f"use fewer basis functions ({exc})"
        ) from exc
    return B, R


def _penalty_eigen(R, F1, F2, w):
    """Eigenpairs of ``R (w P1 + (1 - w) P2) R`` from penalty factors ``P = F^T F``.

    The SVD of the stacked factor avoids forming the product, so eigenvalues
    near zero keep a small absolute error even for large ``lambda_plus``.
    """
    c = R.shape[0]
    M = np.vstack([np.sqrt(w) * (F1 @ R), np.sqrt(1.0 - w) * (F2 @ R)])
    _, sv, Vt = np.linalg.svd(M, full_matrices=True)
    s = np.zeros(c)
    s[: sv.size] = sv[:c] ** 2
    U = Vt.T.copy()
    # fixed sign convention: largest-magnitude entry of each vector is positive
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivot, np.arange(c)])
    signs[signs == 0] = 1.0
    return U * signs, s


def _components(basis, grid, B, R, F1, F2, lambda_plus, w, d) -> SmootherFit:
    U, s = _penalty_eigen(R, F1, F2, w)
    A0 = R @ U
    As = B @ A0
    return SmootherFit(
        basis=basis,
        grid=grid,
        B=B,
        lambda_plus=float(lambda_plus),
        w=float(w),
        U=U,
        s=s,
        A0=A0,
        As=As,
        Sigma_s=1.0 / (1.0 + lambda_plus * s),
        d=d,
    )


def _check_smoothing(lambda_plus: float, w: float) -> None:
    if not np.isfinite(lambda_plus) or lambda_plus < 0:
        raise InvalidArgumentError(f"lambda_plus must be finite and >= 0, got {lambda_plus}")
    if not 0.0 <= w <= 1.0:
        raise InvalidArgumentError(f"w must lie in [0, 1], got {w}")


def lemma1_components(
    basis: BSplineBasis,
    P1: ArrayLike,
    P2: ArrayLike,
    lambda_plus: float,
    w: float,
    grid: ArrayLike,
    d: int = 1,
) -> SmootherFit:
    """Factor the additive-penalty smoother as ``S = A_s Sigma_s A_s^T``.

    Parameters
    ----------
    basis : BSplineBasis
    P1, P2 : array_like, shape (c, c)
        Penalty matrices of orders ``l1`` and ``l2``.
    lambda_plus : float
        Overall smoothing level ``lambda_1 + lambda_2``.
    w : float
        Relative weight ``lambda_1 / lambda_plus`` in ``[0, 1]``.
    grid : array_like, shape (J,)
        Observation times; ``B`` is the basis evaluated there.
    d : int
        Derivative order the fit is intended for (stored, not used here).

    Returns
    -------
    SmootherFit
        Components with ``Theta`` unset.
    """
    _check_smoothing(lambda_plus, w)
    grid = np.asarray(grid, dtype=float)
    B, R = _design(basis, grid)
    return _components(basis, grid, B, R, psd_factor(P1), psd_factor(P2), lambda_plus, w, d)


def _gcv_column(s, C, residual_sq, J, lambdas, inflation=1.0):
    # all arguments but lambdas are fixed for one w
    x = lambdas[:, None] * s[None, :]
    shrink = (x / (1.0 + x)) ** 2
    numerator = shrink @ C + residual_sq
    denominator = 1.0 - inflation * (1.0 / (1.0 + x)).sum(axis=1) / J
    out = np.full(lambdas.shape, np.inf)
    ok = denominator > 0
    out[ok] = numerator[ok] / denominator[ok] ** 2
    return out


def gcv_score(
    fit: SmootherFit,
    Ys: ArrayLike,
    Y_frobsq: float,
    J: int,
    lambda_plus: float,
    residual_sq: float | None = None,
) -> float:
    """Fast GCV criterion at ``lambda_plus`` for the eigenbasis stored in ``fit``.

    ``Ys = A_s^T Y``.  The numerator is
    ``sum_k C_kk (lambda s_k)^2 / (1 + lambda s_k)^2 - ||Ys||_F^2 + ||Y||_F^2``.
    When the projection residual ``||Y||_F^2 - ||Ys||_F^2`` is already known
    (it does not depend on ``w`` or ``lambda_plus``) it can be passed as
    ``residual_sq`` to avoid cancellation on nearly noiseless data.
    """
    Ys = np.asarray(Ys, dtype=float)
    C = np.einsum("kn,kn->k", Ys, Ys)
    if residual_sq is None:
        residual_sq = float(Y_frobsq) - float(C.sum())
    x = lambda_plus * fit.s
    denominator = 1.0 - np.sum(1.0 / (1.0 + x)) / J
    if denominator <= 0:
        raise DegenerateSmootherError(
            f"trace of the smoother ({J * (1 - denominator):.3f}) reaches J={J}; GCV undefined"
        )
    numerator = np.sum(C * (x / (1.0 + x)) ** 2) + residual_sq
    return float(numerator / denominator**2)


def _tie_break(scores: NDArray[np.float64]) -> tuple[int, int]:
    """Index of the minimum, preferring larger lambda, then larger w, among ties."""
    best = np.min(scores)
    tied = scores <= best + _GCV_TIE_RTOL * abs(best)
    rows, cols = np.nonzero(tied)
    order = np.lexsort((cols, rows))
    pick = order[-1]
    return int(rows[pick]), int(cols[pick])


def _require_finite(sample: FunctionalSample) -> None:
    if not np.all(np.isfinite(sample.Y)):
        raise DataError("observations contain missing or non-finite values; fill them first")


def select_smoothing(
    sample: FunctionalSample,
    basis: BSplineBasis,
    P1: ArrayLike,
    P2: ArrayLike,
    grid_spec: GridSpec = DEFAULT_GRID,
) -> GcvGrid:
    """Two-dimensional GCV search over ``(lambda_plus, w)``.

    The search evaluates the grid exhaustively; the minimizer is returned
    with ties resolved toward the smoother fit (larger ``lambda_plus``, then
    larger ``w``).
    """
    if not sample.centered:
        raise InvalidArgumentError("sample must be centered before smoothing selection")
    _require_finite(sample)
    B, R = _design(basis, sample.grid)
    return _select(sample.Y, B, R, psd_factor(P1), psd_factor(P2), grid_spec)


def _select(Y, B, R, F1, F2, grid_spec, inflation=1.0):
    J = Y.shape[0]
    lambdas = np.asarray(grid_spec.lambda_values)
    ws = np.asarray(grid_spec.w_values)
    # projection residual onto span(B) is common to every grid point
    coef = R @ (R @ (B.T @ Y))
    residual_sq = float(np.sum((Y - B @ coef) ** 2))
    scores = np.empty((lambdas.size, ws.size))
    for j, w in enumerate(ws):
        U, s = _penalty_eigen(R, F1, F2, w)
        Ys = (B @ (R @ U)).T @ Y
        C = np.einsum("kn,kn->k", Ys, Ys)
        scores[:, j] = _gcv_column(s, C, residual_sq, J, lambdas, inflation)
    if not np.any(np.isfinite(scores)):
        raise DegenerateSmootherError("every point of the smoothing grid gives a degenerate smoother")
    i, j = _tie_break(scores)
    return GcvGrid(
        lambda_values=lambdas,
        w_values=ws,
        scores=scores,
        lambda_plus=float(lambdas[i]),
        w=float(ws[j]),
    )


def sample_covariance(sample: FunctionalSample | ArrayLike) -> NDArray[np.float64]:
    """``K_hat = Y Y^T / n`` for a (centered) ``J x n`` observation matrix."""
    Y = sample.Y if isinstance(sample, FunctionalSample) else np.atleast_2d(np.asarray(sample, float))
    n = Y.shape[1]
    if n == 0:
        raise DataError("sample covariance needs at least one curve")
    K = Y @ Y.T / n
    return 0.5 * (K + K.T)


def center_sample(
    sample: FunctionalSample,
    basis: BSplineBasis,
    grid_spec: GridSpec = DEFAULT_GRID,
    penalty_order: int = 2,
    gcv_inflation: float = MEAN_GCV_INFLATION,
) -> FunctionalSample:
    """Subtract a P-spline estimate of the mean curve from every curve.

    The pointwise mean is smoothed with a single order-``penalty_order``
    penalty whose level is chosen over ``grid_spec.lambda_values`` by GCV
    with the trace multiplied by ``gcv_inflation`` (1 gives plain GCV).
    The mean's spline coefficients are kept in ``mean_coeffs``.
    """
    if gcv_inflation < 1:
        raise InvalidArgumentError("gcv_inflation must be at least 1")
    _require_finite(sample)
    B, R = _design(basis, sample.grid)
    F = psd_factor(penalty_matrix(penalty_order, basis.c))
    ybar = sample.Y.mean(axis=1, keepdims=True)
    single = GridSpec(grid_spec.lambda_values, (1.0,))
    gcv = _select(ybar, B, R, F, F, single, gcv_inflation)
    fit = _components(basis, sample.grid, B, R, F, F, gcv.lambda_plus, 1.0, 0)
    beta = fit.coefficient_map() @ ybar[:, 0]
    return FunctionalSample(
        grid=sample.grid,
        Y=sample.Y - (B @ beta)[:, None],
        centered=True,
        mean_coeffs=beta,
    )


def estimate_theta(
    fit: SmootherFit,
    Khat: ArrayLike,
    basis: BSplineBasis | None = None,
    grid: ArrayLike | None = None,
) -> SmootherFit:
    """Coefficient matrix ``Theta = A0 Sigma_s A0^T B^T K_hat B A0 Sigma_s A0^T``.

    ``basis`` and ``grid`` are accepted for symmetry with the other FACE
    steps and, when given, must match the ones stored in ``fit``.
    """
    if basis is not None and basis != fit.basis:
        raise InvalidArgumentError("basis does not match the fitted smoother")
    if grid is not None and not np.array_equal(np.asarray(grid, float), fit.grid):
        raise GridMismatchError("grid does not match the fitted smoother")
    K = np.asarray(Khat, dtype=float)
    J = fit.grid.shape[0]
    if K.shape != (J, J):
        raise GridMismatchError(f"K_hat must be {J} x {J}, got {K.shape}")
    H = fit.coefficient_map()
    Theta = H @ K @ H.T
    Theta = 0.5 * (Theta + Theta.T)
    eig = sym_eigen(Theta)
    if eig.values.size and eig.values[-1] < 0:
        Theta = (eig.vectors * clamp_psd(eig.values)) @ eig.vectors.T
        Theta = 0.5 * (Theta + Theta.T)
    return replace(fit, Theta=Theta)


def _require_theta(fit: SmootherFit) -> NDArray[np.float64]:
    if fit.Theta is None:
        raise InvalidArgumentError("Theta has not been estimated for this fit")
    return fit.Theta


def covariance_surface(fit: SmootherFit, s_grid: ArrayLike, t_grid: ArrayLike | None = None) -> NDArray[np.float64]:
    """Smoothed covariance ``B(s)^T Theta B(t)`` on ``s_grid x t_grid``."""
    return derivative_covariance_surface(fit, 0, s_grid, t_grid)


def derivative_covariance_surface(
    fit: SmootherFit, d: int, s_grid: ArrayLike, t_grid: ArrayLike | None = None
) -> NDArray[np.float64]:
    """Mixed partial derivative ``B_der(s)^T Theta B_der(t)`` of the smoothed covariance."""
    Theta = _require_theta(fit)
    Bs = derivative_basis(fit.basis, d, np.atleast_1d(s_grid))
    if t_grid is None:
        out = Bs @ Theta @ Bs.T
        return 0.5 * (out + out.T)
    Bt = derivative_basis(fit.basis, d, np.atleast_1d(t_grid))
    return Bs @ Theta @ Bt.T


def fit_face(
    sample: FunctionalSample,
    basis: BSplineBasis,
    l1: int = 2,
    l2: int = 3,
    grid_spec: GridSpec = DEFAULT_GRID,
    d: int = 1,
) -> tuple[SmootherFit, GcvGrid]:
    """Run the whole additive-penalty FACE fit on a centered sample.

    Builds the penalties, selects ``(lambda_plus, w)`` by GCV, recomputes the
    smoother factors at the optimum and estimates ``Theta``.
    """
    if sample.J < basis.c:
        warnings.warn(
            f"only J={sample.J} grid points for c={basis.c} basis functions",
            RuntimeWarning,
            stacklevel=2,
        )
    P1 = penalty_matrix(l1, basis.c)
    P2 = penalty_matrix(l2, basis.c)
    gcv = select_smoothing(sample, basis, P1, P2, grid_spec)
    B, R = _design(basis, sample.grid)
    fit = _components(basis, sample.grid, B, R, psd_factor(P1), psd_factor(P2), gcv.lambda_plus, gcv.w, d)
    return estimate_theta(fit, sample_covariance(sample)), gcv
