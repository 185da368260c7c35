"""Multivariate derivative FPCA built from per-component derivative scores.

Each component ``p`` contributes ``K_p`` derivative-based scores.  Stacking
them gives an ``n x K_+`` matrix ``Xi`` whose covariance
``Z = Xi^T Xi / (n - 1)`` is eigendecomposed as ``Z c_k = v_k c_k``.  The
multivariate eigenfunctions are the rotations

    psi_k^{[p]}(t) = sum_l (c_k^{[p]})_l phi_l^{[p]}(t)

and the multivariate scores are ``rho = Xi C``.  The eigenfunctions are
orthonormal in the product space because each block of ``phi`` is
orthonormal and ``C`` has orthonormal columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .dfpca import (
    DEFAULT_THRESHOLD,
    DerivCurves,
    DerivEigenSystem,
    DfpcaResult,
    ScoreSet,
    run_dfpca,
    truncation_index,
)
from .errors import DataError, GridMismatchError, InvalidArgumentError
from .face import DEFAULT_GRID, FunctionalSample, GridSpec
from .numerics import clamp_psd, sym_eigen
from .splinebasis import BSplineBasis

__all__ = [
    "ComponentBlock",
    "ScoreStack",
    "MultivarEigenSystem",
    "DmfpcaResult",
    "stack_scores",
    "multivariate_eigensystem",
    "dmfpcs",
    "dmfpc_scores",
    "reconstruct_multivariate",
    "run_dmfpca",
]


@dataclass(frozen=True)
class ComponentBlock:
    """Columns ``offset .. offset + size - 1`` of the stacked scores belong to ``name``."""

    name: str
    offset: int
    size: int

    @property
    def columns(self) -> slice:
        return slice(self.offset, self.offset + self.size)


@dataclass(frozen=True)
class ScoreStack:
    """Stacked univariate scores; row ``i`` holds every score of curve ``i``."""

    Xi: NDArray[np.float64]
    blocks: tuple[ComponentBlock, ...]
    systems: tuple[DerivEigenSystem, ...] = field(repr=False)

    @property
    def n(self) -> int:
        return self.Xi.shape[0]

    @property
    def K_plus(self) -> int:
        return self.Xi.shape[1]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.blocks)


@dataclass(frozen=True)
class MultivarEigenSystem:
    """Eigenvalues ``v`` (descending) and eigenvectors ``C`` (``K_+ x K_+``) of ``Z``.

    Only the first ``M`` columns are used downstream by default.
    """

    v: NDArray[np.float64]
    C: NDArray[np.float64] = field(repr=False)
    M: int
    blocks: tuple[ComponentBlock, ...]
    per_component: tuple[DerivEigenSystem, ...] = field(repr=False)
    threshold: float = DEFAULT_THRESHOLD

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.blocks)

    def block(self, p: int | str) -> NDArray[np.float64]:
        """Rows of ``C`` belonging to component ``p`` (index or name)."""
        idx = self.names.index(p) if isinstance(p, str) else int(p)
        return self.C[self.blocks[idx].columns]


def stack_scores(
    components: Sequence[tuple[ScoreSet, DerivEigenSystem]] | Mapping[str, tuple[ScoreSet, DerivEigenSystem]],
    names: Sequence[str] | None = None,
) -> ScoreStack:
    """Concatenate per-component score matrices column-wise, component order preserved.

    ``components`` may be a sequence of ``(ScoreSet, DerivEigenSystem)`` pairs
    or a mapping from component name to such a pair.
    """
    if isinstance(components, Mapping):
        names = list(components.keys()) if names is None else list(names)
        pairs = [components[k] for k in names]
    else:
        pairs = list(components)
        names = [f"X{p + 1}" for p in range(len(pairs))] if names is None else list(names)
    if not pairs:
        raise InvalidArgumentError("need at least one component")
    if len(names) != len(pairs):
        raise InvalidArgumentError("one name per component is required")
    n = pairs[0][0].n
    blocks, mats = [], []
    offset = 0
    for name, (sc, sys) in zip(names, pairs):
        if sc.n != n:
            raise DataError(f"component {name!r} has {sc.n} curves, expected {n}")
        if sc.K > sys.nu.shape[0]:
            raise InvalidArgumentError(f"component {name!r}: scores exceed the eigen system size")
        blocks.append(ComponentBlock(str(name), offset, sc.K))
        mats.append(sc.xi)
        offset += sc.K
    return ScoreStack(Xi=np.hstack(mats), blocks=tuple(blocks), systems=tuple(p[1] for p in pairs))


def multivariate_eigensystem(stack: ScoreStack, threshold: float = DEFAULT_THRESHOLD) -> MultivarEigenSystem:
    """Eigendecompose ``Z = Xi^T Xi / (n - 1)`` and pick the minimal ``M``."""
    if stack.n < 2:
        raise DataError("need at least two curves for a score covariance")
    Z = stack.Xi.T @ stack.Xi / (stack.n - 1)
    eig = sym_eigen(Z)
    v = clamp_psd(eig.values, scale=float(np.trace(Z)))
    return MultivarEigenSystem(
        v=v,
        C=eig.vectors,
        M=truncation_index(v, threshold),
        blocks=stack.blocks,
        per_component=stack.systems,
        threshold=threshold,
    )


def _grids_for(sys: MultivarEigenSystem, t_grids) -> list[NDArray[np.float64]]:
    if isinstance(t_grids, Mapping):
        grids = [t_grids[name] for name in sys.names]
    else:
        grids = list(t_grids)
    if len(grids) != len(sys.blocks):
        raise GridMismatchError(f"need one grid per component ({len(sys.blocks)}), got {len(grids)}")
    return [np.asarray(g, dtype=float) for g in grids]


def dmfpcs(sys: MultivarEigenSystem, t_grids, M: int | None = None) -> list[NDArray[np.float64]]:
    """Multivariate eigenfunctions, one ``J_p x M`` matrix per component."""
    M = sys.M if M is None else int(M)
    if not 1 <= M <= sys.C.shape[1]:
        raise InvalidArgumentError(f"M must lie in [1, {sys.C.shape[1]}], got {M}")
    out = []
    for block, esys, grid in zip(sys.blocks, sys.per_component, _grids_for(sys, t_grids)):
        phi = esys.eigenfunctions(grid, block.size)
        out.append(phi @ sys.C[block.columns, :M])
    return out


def dmfpc_scores(sys: MultivarEigenSystem, stack: ScoreStack, M: int | None = None) -> NDArray[np.float64]:
    """Multivariate scores ``rho = Xi C`` restricted to the first ``M`` columns."""
    M = sys.M if M is None else int(M)
    if stack.K_plus != sys.C.shape[0]:
        raise InvalidArgumentError("score stack does not match the eigen system")
    return stack.Xi @ sys.C[:, :M]


def reconstruct_multivariate(
    sys: MultivarEigenSystem,
    rho: ArrayLike,
    t_grids,
    means: Sequence[ArrayLike | None] | None = None,
) -> list[DerivCurves]:
    """Per-component sums ``sum_k rho_ik psi_k^{[p]}(t)``, plus a mean derivative if given."""
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2:
        raise InvalidArgumentError("scores must be an n x M matrix")
    grids = _grids_for(sys, t_grids)
    psis = dmfpcs(sys, grids, rho.shape[1])
    means = [None] * len(grids) if means is None else list(means)
    out = []
    for grid, psi, mean in zip(grids, psis, means):
        curves = psi @ rho.T
        if mean is not None:
            curves = curves + np.asarray(mean, dtype=float)[:, None]
        out.append(DerivCurves(grid=grid, curves=curves))
    return out


@dataclass(frozen=True)
class DmfpcaResult:
    """Univariate fits per component together with the multivariate combination."""

    univariate: dict[str, DfpcaResult]
    stack: ScoreStack
    eigsys: MultivarEigenSystem
    rho: NDArray[np.float64]

    @property
    def names(self) -> tuple[str, ...]:
        return self.eigsys.names

    def grids(self) -> list[NDArray[np.float64]]:
        return [self.univariate[k].grid for k in self.names]

    def eigenfunctions(self) -> list[NDArray[np.float64]]:
        return dmfpcs(self.eigsys, self.grids(), self.rho.shape[1])

    def fitted_derivatives(self) -> dict[str, NDArray[np.float64]]:
        """Reconstructed derivatives per component, mean derivative included."""
        means = [self.univariate[k].mean_derivative for k in self.names]
        curves = reconstruct_multivariate(self.eigsys, self.rho, self.grids(), means)
        return {k: c.curves for k, c in zip(self.names, curves)}


def run_dmfpca(
    samples: Mapping[str, FunctionalSample],
    bases: BSplineBasis | Mapping[str, BSplineBasis],
    l1: int = 2,
    l2: int = 3,
    d: int = 1,
    grid_spec: GridSpec = DEFAULT_GRID,
    threshold: float = DEFAULT_THRESHOLD,
) -> DmfpcaResult:
    """Univariate derivative FPCA on every component, then the multivariate step."""
    if not samples:
        raise InvalidArgumentError("need at least one component")
    uni = {}
    for name, sample in samples.items():
        basis = bases[name] if isinstance(bases, Mapping) else bases
        uni[name] = run_dfpca(sample, basis, l1=l1, l2=l2, d=d, grid_spec=grid_spec, threshold=threshold)
    stack = stack_scores({k: (r.scores, r.eigsys) for k, r in uni.items()})
    esys = multivariate_eigensystem(stack, threshold)
    return DmfpcaResult(univariate=uni, stack=stack, eigsys=esys, rho=dmfpc_scores(esys, stack))
