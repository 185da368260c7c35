"""Uniform B-spline bases, difference penalties, derivative bases and Gram matrices.

Knots follow the usual P-spline layout: ``c - q`` equal intervals of width
``h`` cover ``[domain_lo, domain_hi]`` and ``q`` further knots are appended on
each side, so a degree ``q`` basis has exactly ``c`` functions.  The uniform
spacing is what makes the derivative identity

    d^d/dt^d  B(t)^T theta  =  h^{-d}  B(t; q - d)^T  D_d theta

hold, with ``B(t; q - d)`` the reduced-degree functions on the same knots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, InvalidArgumentError

__all__ = [
    "BSplineBasis",
    "make_basis",
    "eval_basis",
    "difference_matrix",
    "penalty_matrix",
    "derivative_basis",
    "gram_matrix",
]

# slack allowed when checking evaluation points against the domain
_DOMAIN_RTOL = 1e-10


@dataclass(frozen=True)
class BSplineBasis:
    """A uniform B-spline basis of degree ``q`` with ``c`` functions.

    Use :func:`make_basis` to construct one with validated arguments.
    """

    domain_lo: float
    domain_hi: float
    c: int
    q: int
    knots: NDArray[np.float64] = field(repr=False, compare=False)
    h: float

    @property
    def n_intervals(self) -> int:
        return self.c - self.q

    @property
    def length(self) -> float:
        return self.domain_hi - self.domain_lo

    def __call__(self, t: ArrayLike, d: int = 0) -> NDArray[np.float64]:
        return derivative_basis(self, d, t) if d else eval_basis(self, t)


def make_basis(domain_lo: float, domain_hi: float, c: int, q: int) -> BSplineBasis:
    """Build a uniform basis on ``[domain_lo, domain_hi]``.

    Parameters
    ----------
    domain_lo, domain_hi : float
        Endpoints of the domain.
    c : int
        Number of basis functions, must exceed ``q``.
    q : int
        Degree (0 = piecewise constant, 3 = cubic).

    Returns
    -------
    BSplineBasis
        Basis with knot spacing ``h = (domain_hi - domain_lo) / (c - q)`` and
        ``c + q + 1`` knots.
    """
    if int(q) != q or q < 0:
        raise InvalidArgumentError(f"degree q must be a nonnegative integer, got {q}")
    if int(c) != c or c <= q:
        raise InvalidArgumentError(f"need c > q, got c={c}, q={q}")
    lo, hi = float(domain_lo), float(domain_hi)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise InvalidArgumentError(f"degenerate domain [{domain_lo}, {domain_hi}]")
    c, q = int(c), int(q)
    h = (hi - lo) / (c - q)
    knots = lo + h * np.arange(-q, c + 1, dtype=float)
    # pin the domain endpoints exactly so span lookup is exact at t = hi
    knots[q] = lo
    knots[c] = hi
    knots.setflags(write=False)
    return BSplineBasis(domain_lo=lo, domain_hi=hi, c=c, q=q, knots=knots, h=h)


def _as_points(basis: BSplineBasis, t: ArrayLike) -> tuple[NDArray[np.float64], bool]:
    arr = np.asarray(t, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr).ravel()
    if not np.all(np.isfinite(arr)):
        raise DomainError("evaluation points must be finite")
    slack = _DOMAIN_RTOL * basis.length
    if arr.size and (arr.min() < basis.domain_lo - slack or arr.max() > basis.domain_hi + slack):
        raise DomainError(
            f"points outside the basis domain [{basis.domain_lo}, {basis.domain_hi}]: "
            f"range [{arr.min()}, {arr.max()}]"
        )
    return np.clip(arr, basis.domain_lo, basis.domain_hi), scalar


def _spans(basis: BSplineBasis, t: NDArray[np.float64]) -> NDArray[np.intp]:
    # knot index m with knots[m] <= t < knots[m + 1], restricted to the domain
    m = np.searchsorted(basis.knots, t, side="right") - 1
    return np.clip(m, basis.q, basis.c - 1)


def _cox_de_boor(
    knots: NDArray[np.float64], p: int, t: NDArray[np.float64], span: NDArray[np.intp]
) -> NDArray[np.float64]:
    """Nonzero degree-``p`` B-splines at ``t``; column r is function ``span - p + r``."""
    nt = t.shape[0]
    values = np.ones((nt, 1))
    left = np.empty((nt, p + 1))
    right = np.empty((nt, p + 1))
    for j in range(1, p + 1):
        left[:, j] = t - knots[span + 1 - j]
        right[:, j] = knots[span + j] - t
        new = np.empty((nt, j + 1))
        saved = np.zeros(nt)
        for r in range(j):
            temp = values[:, r] / (right[:, r + 1] + left[:, j - r])
            new[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        new[:, j] = saved
        values = new
    return values


def _reduced_design(basis: BSplineBasis, t: NDArray[np.float64], d: int) -> NDArray[np.float64]:
    """Degree ``q - d`` functions on the full knot vector, keeping indices ``d .. c-1``."""
    p = basis.q - d
    span = _spans(basis, t)
    local = _cox_de_boor(basis.knots, p, t, span)
    n_full = basis.c + d
    out = np.zeros((t.shape[0], n_full))
    rows = np.arange(t.shape[0])
    for r in range(p + 1):
        out[rows, span - p + r] = local[:, r]
    return out[:, d : basis.c]


def eval_basis(basis: BSplineBasis, t: ArrayLike) -> NDArray[np.float64]:
    """Evaluate all ``c`` basis functions.

    A scalar ``t`` gives a vector of length ``c``; an array gives a matrix of
    shape ``(len(t), c)`` whose rows are ``B(t_j)^T``.
    """
    pts, scalar = _as_points(basis, t)
    out = _reduced_design(basis, pts, 0)
    return out[0] if scalar else out


def difference_matrix(l: int, c: int) -> NDArray[np.int64]:  # noqa: E741
    """Order-``l`` difference operator ``D_l`` of shape ``(c - l, c)``.

    ``l = 0`` returns the identity, which is convenient for ``d = 0``
    derivative bases.
    """
    if int(l) != l or l < 0:
        raise InvalidArgumentError(f"difference order must be a nonnegative integer, got {l}")
    if l >= c:
        raise InvalidArgumentError(f"difference order l={l} must be smaller than c={c}")
    return np.diff(np.eye(int(c), dtype=np.int64), n=int(l), axis=0)


def penalty_matrix(l: int, c: int) -> NDArray[np.float64]:  # noqa: E741
    """Difference penalty ``P_l = D_l^T D_l`` (``c x c``, PSD, rank ``c - l``)."""
    if l < 1:
        raise InvalidArgumentError(f"penalty order must be at least 1, got {l}")
    D = difference_matrix(l, c).astype(float)
    return D.T @ D


def _check_derivative_order(basis: BSplineBasis, d: int) -> None:
    if int(d) != d or d < 0:
        raise InvalidArgumentError(f"derivative order must be a nonnegative integer, got {d}")
    # degree must leave a continuously differentiable reduced basis
    if d > 0 and basis.q < d + 2:
        raise InvalidArgumentError(f"derivative order d={d} requires degree q >= {d + 2}, got q={basis.q}")


def derivative_basis(basis: BSplineBasis, d: int, t: ArrayLike) -> NDArray[np.float64]:
    """Derivative basis ``B_der(t) = h^{-d} D_d^T B(t; q - d)``.

    ``B_der(t)^T theta`` is the ``d``-th derivative of the spline with
    coefficients ``theta``.  Shapes follow :func:`eval_basis`.
    """
    _check_derivative_order(basis, d)
    pts, scalar = _as_points(basis, t)
    reduced = _reduced_design(basis, pts, d)
    if d == 0:
        out = reduced
    else:
        out = (reduced @ difference_matrix(d, basis.c)) / basis.h**d
    return out[0] if scalar else out


def gram_matrix(basis: BSplineBasis, d: int) -> NDArray[np.float64]:
    """``G = integral of B_der(t) B_der(t)^T dt`` over the domain.

    The integrand is piecewise polynomial of degree ``2(q - d)``, so
    per-interval Gauss-Legendre with ``q - d + 2`` nodes is exact.

    For ``d >= 1`` the result is only positive *semi*-definite: coefficient
    sequences that are polynomials of degree below ``d`` in the index give
    splines whose ``d``-th derivative vanishes, so ``G`` has exactly ``d``
    zero eigenvalues.
    """
    _check_derivative_order(basis, d)
    n_nodes = int(np.ceil((2 * (basis.q - d) + 2) / 2)) + 1
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    edges = basis.knots[basis.q : basis.c + 1]
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    Bd = derivative_basis(basis, d, nodes)
    G = Bd.T @ (weights[:, None] * Bd)
    return 0.5 * (G + G.T)
