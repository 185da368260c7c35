"""Error metrics, reference eigensystems from true derivatives, clustering support.

Univariate metrics for the first ``k`` components:

    RE_k    = |nu_k - nu_hat_k| / nu_k
    ISE_k   = int (phi_k - phi_hat_k)^2
    MSE_k   = mean_i (xi_ik - xi_hat_ik)^2 / Var(xi_k)
    RMISE   = mean_i  int (dX_i - dX_hat_i)^2 / int dX_i^2

The multivariate versions sum the ISE integrals over components, and
average per-component *ratios of sums* for RMISE:

    RMISE   = (1/P) sum_p  sum_i int (dX_i^p - dX_hat_i^p)^2 / sum_i int (dX_i^p)^2

The two RMISE forms genuinely differ; both are implemented as written.
Integrals use the composite trapezoid rule on the evaluation grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.optimize
import scipy.stats
from numpy.typing import ArrayLike, NDArray
from sklearn.cluster import KMeans

from .errors import DataError, DegenerateCovarianceError, GridMismatchError, InvalidArgumentError
from .numerics import clamp_psd, grid_quadrature, sym_eigen, trapezoid_weights

__all__ = [
    "ReferenceEigenSystem",
    "MultivariateReference",
    "ErrorReport",
    "reference_eigensystem",
    "reference_multivariate",
    "align_sign",
    "rmise_univariate",
    "rmise_multivariate",
    "error_report_univariate",
    "error_report_multivariate",
    "aggregate",
    "standardize",
    "permutation_accuracy",
    "ClusterResult",
    "kmeans_labels",
    "clopper_pearson",
]


@dataclass(frozen=True)
class ReferenceEigenSystem:
    """Eigencomponents of the sample covariance of known derivative curves."""

    grid: NDArray[np.float64]
    nu: NDArray[np.float64]
    phi: NDArray[np.float64] = field(repr=False)
    xi: NDArray[np.float64] = field(repr=False)
    mean: NDArray[np.float64] = field(repr=False)
    source: str = "TrueDerivativeFPCA"


@dataclass(frozen=True)
class MultivariateReference:
    """Multivariate analogue: ``psi[p]`` is ``J_p x r`` for component ``p``."""

    grids: tuple[NDArray[np.float64], ...]
    v: NDArray[np.float64]
    psi: tuple[NDArray[np.float64], ...] = field(repr=False)
    rho: NDArray[np.float64] = field(repr=False)
    means: tuple[NDArray[np.float64], ...] = field(repr=False)
    source: str = "TrueDerivativeMFPCA"


@dataclass(frozen=True)
class ErrorReport:
    re: NDArray[np.float64]
    ise: NDArray[np.float64]
    mse: NDArray[np.float64]
    rmise: float
    metadata: dict = field(default_factory=dict)

    def as_row(self) -> dict[str, float]:
        """Flat mapping ``{"re_1": .., "ise_1": .., "mse_1": .., "rmise": ..}``."""
        row: dict[str, float] = {}
        for name in ("re", "ise", "mse"):
            for k, val in enumerate(getattr(self, name), start=1):
                row[f"{name}_{k}"] = float(val)
        row["rmise"] = float(self.rmise)
        return row


def _weighted_eigen(curves: NDArray[np.float64], weights: NDArray[np.float64], ddof: int):
    n = curves.shape[1]
    if n <= ddof or n < 2:
        raise DataError("need at least two curves for a reference eigensystem")
    mean = curves.mean(axis=1)
    centered = curves - mean[:, None]
    root = np.sqrt(weights)
    K = (root[:, None] * centered) @ (root[:, None] * centered).T / (n - ddof)
    eig = sym_eigen(K)
    nu = clamp_psd(eig.values, scale=float(np.trace(K)))
    if nu[0] <= 0:
        raise DegenerateCovarianceError("true derivative curves have no variation")
    phi = eig.vectors / root[:, None]
    return nu, phi, mean, centered


def reference_eigensystem(
    dX_true: ArrayLike,
    grid: ArrayLike,
    n_components: int | None = None,
    ddof: int = 0,
) -> ReferenceEigenSystem:
    """Oracle eigensystem from true derivative curves (``J x n``).

    The centered sample covariance ``K`` is discretized with trapezoid
    weights ``W``; eigenvectors ``u`` of ``W^{1/2} K W^{1/2}`` give
    ``phi = W^{-1/2} u``, so the trapezoid integral of ``phi_j phi_k`` is
    exactly ``delta_jk``.  Scores are trapezoid projections of the centered
    curves.  ``ddof = 0`` matches the ``1/n`` covariance used by FACE.
    """
    X = np.asarray(dX_true, dtype=float)
    g = np.asarray(grid, dtype=float)
    if X.ndim != 2 or X.shape[0] != g.shape[0]:
        raise GridMismatchError("dX_true must be J x n on the given grid")
    w = trapezoid_weights(g)
    nu, phi, mean, centered = _weighted_eigen(X, w, ddof)
    r = phi.shape[1] if n_components is None else int(n_components)
    phi = phi[:, :r]
    xi = centered.T @ (w[:, None] * phi)
    return ReferenceEigenSystem(grid=g, nu=nu[:r], phi=phi, xi=xi, mean=mean)


def reference_multivariate(
    dX_true: Sequence[ArrayLike],
    grids: Sequence[ArrayLike],
    n_components: int | None = None,
    ddof: int = 1,
) -> MultivariateReference:
    """Oracle multivariate eigensystem: one weighted eigenproblem on stacked components."""
    if len(dX_true) != len(grids) or not dX_true:
        raise GridMismatchError("need one grid per component")
    Xs = [np.asarray(x, dtype=float) for x in dX_true]
    gs = [np.asarray(g, dtype=float) for g in grids]
    for X, g in zip(Xs, gs):
        if X.ndim != 2 or X.shape[0] != g.shape[0]:
            raise GridMismatchError("each dX_true must be J_p x n on its grid")
    if len({X.shape[1] for X in Xs}) != 1:
        raise DataError("components have different numbers of curves")
    w = np.concatenate([trapezoid_weights(g) for g in gs])
    stacked = np.vstack(Xs)
    v, psi, mean, centered = _weighted_eigen(stacked, w, ddof)
    r = psi.shape[1] if n_components is None else int(n_components)
    psi = psi[:, :r]
    rho = centered.T @ (w[:, None] * psi)
    cuts = np.cumsum([g.shape[0] for g in gs])[:-1]
    return MultivariateReference(
        grids=tuple(gs),
        v=v[:r],
        psi=tuple(np.split(psi, cuts, axis=0)),
        rho=rho,
        means=tuple(np.split(mean, cuts)),
    )


def align_sign(
    est: ArrayLike,
    ref: ArrayLike,
    grid: ArrayLike | None = None,
    weights: ArrayLike | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Flip each column of ``est`` whose inner product with ``ref`` is negative.

    ``est`` and ``ref`` are vectors or matrices with functions in columns.
    The inner product uses trapezoid weights on ``grid`` when given,
    explicit ``weights`` otherwise, or plain sums.  Returns the aligned
    functions and the applied signs, so matching score columns can be
    multiplied by the same signs.
    """
    E = np.asarray(est, dtype=float)
    R = np.asarray(ref, dtype=float)
    if E.shape != R.shape:
        raise GridMismatchError(f"estimate shape {E.shape} does not match reference {R.shape}")
    vector = E.ndim == 1
    E2, R2 = (E[:, None], R[:, None]) if vector else (E, R)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
    elif grid is not None:
        w = trapezoid_weights(grid)
    else:
        w = np.ones(E2.shape[0])
    if w.shape[0] != E2.shape[0]:
        raise GridMismatchError("weights do not match the function length")
    inner = np.einsum("j,jk,jk->k", w, E2, R2)
    signs = np.where(inner < 0, -1.0, 1.0)
    if np.any(inner == 0):
        warnings.warn("zero inner product with the reference; sign left unchanged", RuntimeWarning, stacklevel=2)
    aligned = E2 * signs
    return (aligned[:, 0] if vector else aligned), signs


def rmise_univariate(dX_true: ArrayLike, dX_hat: ArrayLike, grid: ArrayLike) -> float:
    """Mean over curves of ``int (dX - dX_hat)^2 / int dX^2``."""
    X = np.asarray(dX_true, dtype=float)
    Xh = np.asarray(dX_hat, dtype=float)
    if X.shape != Xh.shape:
        raise GridMismatchError("true and estimated derivatives differ in shape")
    num = grid_quadrature((X - Xh) ** 2, grid)
    den = grid_quadrature(X**2, grid)
    if np.any(den <= 0):
        raise DataError("a true derivative curve is identically zero; RMISE undefined")
    return float(np.mean(num / den))


def rmise_multivariate(
    dX_true: Sequence[ArrayLike],
    dX_hat: Sequence[ArrayLike],
    grids: Sequence[ArrayLike],
) -> float:
    """Average over components of ``sum_i int (dX - dX_hat)^2 / sum_i int dX^2``."""
    if not (len(dX_true) == len(dX_hat) == len(grids)) or not grids:
        raise GridMismatchError("need matching per-component inputs")
    ratios = []
    for X, Xh, g in zip(dX_true, dX_hat, grids):
        X = np.asarray(X, dtype=float)
        Xh = np.asarray(Xh, dtype=float)
        if X.shape != Xh.shape:
            raise GridMismatchError("true and estimated derivatives differ in shape")
        den = grid_quadrature(X**2, g).sum()
        if den <= 0:
            raise DataError("true derivatives of a component are identically zero; RMISE undefined")
        ratios.append(grid_quadrature((X - Xh) ** 2, g).sum() / den)
    return float(np.mean(ratios))


def _per_k(nu_ref, nu_hat, xi_ref, xi_hat, k):
    nu_ref = np.asarray(nu_ref, dtype=float)[:k]
    nu_hat = np.asarray(nu_hat, dtype=float)[:k]
    if np.any(nu_ref <= 0):
        raise InvalidArgumentError("reference eigenvalue is zero; relative error undefined")
    re = np.abs(nu_ref - nu_hat) / nu_ref
    var = np.var(xi_ref[:, :k], axis=0, ddof=1)
    if np.any(var <= 0):
        raise InvalidArgumentError("reference scores have zero variance; MSE undefined")
    mse = np.mean((xi_ref[:, :k] - xi_hat[:, :k]) ** 2, axis=0) / var
    return re, mse


def _check_k(k: int, *sizes: int) -> int:
    if k < 1 or k > min(sizes):
        raise InvalidArgumentError(f"number of compared components must be in [1, {min(sizes)}], got {k}")
    return int(k)


def error_report_univariate(
    nu_hat: ArrayLike,
    phi_hat: ArrayLike,
    xi_hat: ArrayLike,
    dX_hat: ArrayLike,
    ref: ReferenceEigenSystem,
    dX_true: ArrayLike,
    n_components: int = 2,
    metadata: dict | None = None,
) -> ErrorReport:
    """RE, ISE, MSE for the first ``n_components`` plus the curve RMISE.

    ``phi_hat`` (``J x K``) is evaluated on ``ref.grid``.  Estimated
    eigenfunctions are sign-aligned to the reference before comparison and
    their score columns flipped with them.
    """
    phi_hat = np.asarray(phi_hat, dtype=float)
    xi_hat = np.asarray(xi_hat, dtype=float)
    k = _check_k(n_components, phi_hat.shape[1], ref.phi.shape[1], xi_hat.shape[1])
    aligned, signs = align_sign(phi_hat[:, :k], ref.phi[:, :k], grid=ref.grid)
    ise = grid_quadrature((aligned - ref.phi[:, :k]) ** 2, ref.grid)
    re, mse = _per_k(ref.nu, nu_hat, ref.xi, xi_hat[:, :k] * signs, k)
    return ErrorReport(
        re=re,
        ise=np.atleast_1d(ise),
        mse=mse,
        rmise=rmise_univariate(dX_true, dX_hat, ref.grid),
        metadata=dict(metadata or {}),
    )


def error_report_multivariate(
    v_hat: ArrayLike,
    psi_hat: Sequence[ArrayLike],
    rho_hat: ArrayLike,
    dX_hat: Sequence[ArrayLike],
    ref: MultivariateReference,
    dX_true: Sequence[ArrayLike],
    n_components: int = 2,
    metadata: dict | None = None,
) -> ErrorReport:
    """Multivariate RE, ISE (summed over components), MSE and per-component RMISE.

    Signs are aligned with the product-space inner product
    ``sum_p int psi_hat^{[p]} psi^{[p]}``.
    """
    psi_hat = [np.asarray(p, dtype=float) for p in psi_hat]
    rho_hat = np.asarray(rho_hat, dtype=float)
    if len(psi_hat) != len(ref.psi):
        raise GridMismatchError("number of components differs from the reference")
    k = _check_k(n_components, rho_hat.shape[1], ref.rho.shape[1], *(p.shape[1] for p in psi_hat))
    w = np.concatenate([trapezoid_weights(g) for g in ref.grids])
    est = np.vstack([p[:, :k] for p in psi_hat])
    truth = np.vstack([p[:, :k] for p in ref.psi])
    aligned, signs = align_sign(est, truth, weights=w)
    ise = w @ (aligned - truth) ** 2
    re, mse = _per_k(ref.v, v_hat, ref.rho, rho_hat[:, :k] * signs, k)
    return ErrorReport(
        re=re,
        ise=np.atleast_1d(ise),
        mse=mse,
        rmise=rmise_multivariate(dX_true, dX_hat, ref.grids),
        metadata=dict(metadata or {}),
    )


def aggregate(values: ArrayLike) -> tuple[float, float]:
    """Mean and sample standard deviation (``n - 1`` denominator)."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DataError("nothing to aggregate")
    sd = float(np.std(v, ddof=1)) if v.size > 1 else float("nan")
    return float(v.mean()), sd


def standardize(scores: ArrayLike) -> NDArray[np.float64]:
    """Center each column and scale it to unit sample standard deviation.

    Constant columns are centered but left unscaled.
    """
    S = np.asarray(scores, dtype=float)
    if S.ndim != 2:
        raise DataError("scores must be a two-dimensional matrix")
    sd = S.std(axis=0, ddof=1) if S.shape[0] > 1 else np.ones(S.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    return (S - S.mean(axis=0)) / sd


def permutation_accuracy(predicted: ArrayLike, truth: ArrayLike) -> float:
    """Fraction of agreement under the best one-to-one matching of labels."""
    p = np.asarray(predicted)
    t = np.asarray(truth)
    if p.shape != t.shape or p.ndim != 1:
        raise DataError("label vectors must be one-dimensional and equally long")
    if p.size == 0:
        raise DataError("no labels to compare")
    pu, pi = np.unique(p, return_inverse=True)
    tu, ti = np.unique(t, return_inverse=True)
    table = np.zeros((pu.size, tu.size))
    np.add.at(table, (pi, ti), 1.0)
    rows, cols = scipy.optimize.linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / p.size)


@dataclass(frozen=True)
class ClusterResult:
    labels: NDArray[np.int64]
    centers: NDArray[np.float64] = field(repr=False)
    n_iter: int
    accuracy: float | None = None


def kmeans_labels(
    scores: ArrayLike,
    k: int,
    seed: int = 0,
    truth: ArrayLike | None = None,
    n_init: int = 10,
) -> ClusterResult:
    """K-means (k-means++ start, Lloyd iterations) on already standardized scores.

    Deterministic for a fixed ``seed``.  When ``truth`` labels are given the
    permutation-matched accuracy is reported.
    """
    S = np.asarray(scores, dtype=float)
    if S.ndim != 2:
        raise DataError("scores must be a two-dimensional matrix")
    if int(k) != k or k < 1:
        raise InvalidArgumentError(f"number of clusters must be a positive integer, got {k}")
    if k > S.shape[0]:
        raise InvalidArgumentError(f"cannot form {k} clusters from {S.shape[0]} rows")
    model = KMeans(
        n_clusters=int(k),
        init="k-means++",
        n_init=n_init,
        max_iter=300,
        tol=1e-8,
        algorithm="lloyd",
        random_state=seed,
    ).fit(S)
    labels = model.labels_.astype(np.int64)
    acc = None if truth is None else permutation_accuracy(labels, truth)
    return ClusterResult(labels=labels, centers=model.cluster_centers_, n_iter=int(model.n_iter_), accuracy=acc)


def clopper_pearson(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for a proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise InvalidArgumentError(f"need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}")
    if not 0 < level < 1:
        raise InvalidArgumentError("confidence level must lie in (0, 1)")
    alpha = 1.0 - level
    lo = 0.0 if successes == 0 else scipy.stats.beta.ppf(alpha / 2, successes, trials - successes + 1)
    hi = 1.0 if successes == trials else scipy.stats.beta.ppf(1 - alpha / 2, successes + 1, trials - successes)
    return float(lo), float(hi)
