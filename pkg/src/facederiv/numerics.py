"""Dense symmetric linear algebra and grid quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg.lapack import dpstrf

from .errors import GridMismatchError, NumericError, SingularMatrixError

__all__ = [
    "SymEigen",
    "sym_eigen",
    "clamp_psd",
    "sym_inv_sqrt",
    "sym_sqrt",
    "gram_inv_sqrt",
    "psd_factor",
    "trapezoid_weights",
    "grid_quadrature",
]

# eigenvalues below this fraction of the largest are treated as singular
SINGULAR_RTOL = 1e-10
# nominally PSD spectra may dip this far below zero (relative to the trace)
PSD_NEG_RTOL = 1e-10


@dataclass(frozen=True)
class SymEigen:
    """Eigendecomposition ``M = vectors @ diag(values) @ vectors.T``, values descending."""

    values: NDArray[np.float64]
    vectors: NDArray[np.float64]

    def reconstruct(self) -> NDArray[np.float64]:
        return (self.vectors * self.values) @ self.vectors.T


def _symmetrize(M: ArrayLike) -> NDArray[np.float64]:
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NumericError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericError("matrix has non-finite entries")
    return 0.5 * (A + A.T)


def sym_eigen(M: ArrayLike) -> SymEigen:
    """Eigendecomposition of a symmetric matrix with a fixed sign convention.

    The input is symmetrized first.  Eigenvalues are returned in descending
    order and each eigenvector is flipped so that its entry of largest
    magnitude is positive, which makes the output reproducible.
    """
    A = _symmetrize(M)
    values, vectors = np.linalg.eigh(A)
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    if vectors.size:
        pivot = np.argmax(np.abs(vectors), axis=0)
        signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
        signs[signs == 0] = 1.0
        vectors *= signs
    return SymEigen(values=values, vectors=vectors)


def clamp_psd(values: NDArray[np.float64], scale: float | None = None) -> NDArray[np.float64]:
    """Zero out slightly negative eigenvalues of a nominally PSD matrix.

    Values below ``-PSD_NEG_RTOL * scale`` (``scale`` defaults to the sum of
    absolute values, i.e. the trace for a PSD matrix) raise
    :class:`NumericError`.
    """
    values = np.asarray(values, dtype=float)
    if scale is None:
        scale = float(np.abs(values).sum())
    if values.size and values.min() < -PSD_NEG_RTOL * scale:
        raise NumericError(
            f"matrix is not positive semi-definite: eigenvalue {values.min():.3e} "
            f"(scale {scale:.3e})"
        )
    return np.maximum(values, 0.0)


def sym_inv_sqrt(M: ArrayLike, rtol: float = SINGULAR_RTOL) -> NDArray[np.float64]:
    """Symmetric inverse square root ``R`` with ``R @ M @ R = I``.

    Raises
    ------
    SingularMatrixError
        If an eigenvalue falls below ``rtol`` times the largest one.
    """
    eig = sym_eigen(M)
    top = eig.values[0] if eig.values.size else 0.0
    low = eig.values[-1] if eig.values.size else 0.0
    if top <= 0 or low < rtol * top:
        raise SingularMatrixError(
            f"matrix is singular to working precision: eigenvalue {low:.3e} "
            f"vs largest {top:.3e}"
        )
    return (eig.vectors / np.sqrt(eig.values)) @ eig.vectors.T


def sym_sqrt(M: ArrayLike) -> NDArray[np.float64]:
    """Symmetric PSD square root ``R`` with ``R @ R = M``."""
    eig = sym_eigen(M)
    vals = clamp_psd(eig.values)
    return (eig.vectors * np.sqrt(vals)) @ eig.vectors.T


def gram_inv_sqrt(B: ArrayLike, rtol: float = SINGULAR_RTOL) -> NDArray[np.float64]:
    """Symmetric inverse square root of ``B^T B``, computed from the SVD of ``B``.

    Working with ``B`` directly avoids squaring its condition number.

    Raises
    ------
    SingularMatrixError
        If an eigenvalue of ``B^T B`` falls below ``rtol`` times the largest one.
    """
    B = np.asarray(B, dtype=float)
    if not np.all(np.isfinite(B)):
        raise NumericError("matrix has non-finite entries")
    _, sv, Vt = np.linalg.svd(B, full_matrices=False)
    if sv.size < B.shape[1] or sv[0] <= 0 or sv[-1] ** 2 < rtol * sv[0] ** 2:
        low = sv[-1] ** 2 if sv.size == B.shape[1] else 0.0
        top = sv[0] ** 2 if sv.size else 0.0
        raise SingularMatrixError(
            f"matrix is singular to working precision: eigenvalue {low:.3e} vs largest {top:.3e}"
        )
    R = (Vt.T / sv) @ Vt
    return 0.5 * (R + R.T)


def psd_factor(M: ArrayLike) -> NDArray[np.float64]:
    """Rank-revealing factor ``F`` (``r x c``) with ``F.T @ F = M`` for PSD ``M``.

    Uses pivoted Cholesky, which keeps exact null directions (such as the
    polynomials annihilated by a difference penalty) at exactly zero.
    """
    A = _symmetrize(M)
    c = A.shape[0]
    if c == 0 or not np.any(A):
        return np.zeros((0, c))
    L, piv, rank, info = dpstrf(A, lower=1, tol=-1.0)
    if info < 0:  # pragma: no cover - LAPACK argument error
        raise NumericError(f"pivoted Cholesky failed (info={info})")
    F = np.zeros((rank, c))
    F[:, piv - 1] = np.tril(L)[:, :rank].T
    if np.max(np.abs(F.T @ F - A)) > 1e-8 * max(1.0, np.abs(A).max()):
        raise NumericError("matrix is not positive semi-definite")
    return F


def trapezoid_weights(grid: ArrayLike) -> NDArray[np.float64]:
    """Weights ``w`` such that ``w @ f`` is the composite trapezoid integral of ``f``."""
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise GridMismatchError("grid must be one-dimensional with at least two points")
    step = np.diff(g)
    if np.any(step <= 0):
        raise GridMismatchError("grid must be strictly increasing")
    w = np.zeros_like(g)
    w[:-1] += 0.5 * step
    w[1:] += 0.5 * step
    return w


def grid_quadrature(values: ArrayLike, grid: ArrayLike) -> float | NDArray[np.float64]:
    """Composite trapezoid integral of ``values`` over ``grid``.

    ``values`` may be two-dimensional with the grid along axis 0, in which case
    one integral per column is returned.
    """
    v = np.asarray(values, dtype=float)
    g = np.asarray(grid, dtype=float)
    if v.shape[0] != g.shape[0]:
        raise GridMismatchError(f"values have {v.shape[0]} points but grid has {g.shape[0]}")
    out = trapezoid_weights(g) @ v
    return float(out) if np.ndim(out) == 0 else out
