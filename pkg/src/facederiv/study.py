"""Replicate studies on simulated data: fit, compare with truth, aggregate."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .dfpca import DEFAULT_THRESHOLD, run_dfpca
from .dmfpca import run_dmfpca
from .errors import InvalidArgumentError
from .face import DEFAULT_GRID, FunctionalSample, GridSpec
from .metrics import (
    ErrorReport,
    aggregate,
    error_report_multivariate,
    error_report_univariate,
    reference_eigensystem,
    reference_multivariate,
)
from .simulate import COMPONENTS, Setting, fill_sparse, make_replicate, replicate_seed
from .splinebasis import make_basis

__all__ = ["StudyConfig", "StudyResult", "run_replicate", "run_study", "default_components"]


@dataclass(frozen=True)
class StudyConfig:
    setting: Setting = Setting.DENSE_CLEAN
    replicates: int = 50
    seed: int = 0
    components: tuple[str, ...] = ("X1",)
    multivariate: bool = False
    n: int = 100
    J: int = 101
    c: int = 38
    q: int = 3
    d: int = 1
    l1: int = 2
    l2: int = 3
    threshold: float = DEFAULT_THRESHOLD
    n_compare: int = 2
    grid_spec: GridSpec = field(default=DEFAULT_GRID, repr=False)


@dataclass(frozen=True)
class StudyResult:
    config: StudyConfig
    reports: list[ErrorReport]

    def values(self, key: str) -> np.ndarray:
        return np.array([r.as_row()[key] for r in self.reports])

    def summary(self) -> dict[str, tuple[float, float]]:
        """``{metric: (mean, sd)}`` over replicates."""
        keys = self.reports[0].as_row().keys()
        return {k: aggregate(self.values(k)) for k in keys}


def run_replicate(cfg: StudyConfig, index: int) -> ErrorReport:
    """Simulate, fit and score replicate ``index``."""
    seed = replicate_seed(cfg.seed, index)
    rep = make_replicate(cfg.setting, n=cfg.n, J=cfg.J, seed=seed)
    basis = make_basis(0.0, 1.0, cfg.c, cfg.q)
    if rep.setting.sparse:
        rep = fill_sparse(rep, basis)
    meta = {"replicate": index, "seed": seed, "setting": rep.setting.value}
    samples = {k: FunctionalSample(rep.grids[k], rep.Y[k]) for k in cfg.components}
    if cfg.multivariate:
        res = run_dmfpca(samples, basis, cfg.l1, cfg.l2, cfg.d, cfg.grid_spec, cfg.threshold)
        truth = [rep.dX_true[k] for k in cfg.components]
        grids = [rep.grids[k] for k in cfg.components]
        k = min(cfg.n_compare, res.rho.shape[1])
        ref = reference_multivariate(truth, grids, n_components=k)
        fitted = res.fitted_derivatives()
        return error_report_multivariate(
            res.eigsys.v,
            res.eigenfunctions(),
            res.rho,
            [fitted[c] for c in cfg.components],
            ref,
            truth,
            n_components=k,
            metadata=dict(meta, M=res.eigsys.M),
        )
    if len(cfg.components) != 1:
        raise InvalidArgumentError("a univariate study uses exactly one component")
    name = cfg.components[0]
    res = run_dfpca(samples[name], basis, cfg.l1, cfg.l2, cfg.d, cfg.grid_spec, cfg.threshold)
    k = min(cfg.n_compare, res.eigsys.K)
    ref = reference_eigensystem(rep.dX_true[name], rep.grids[name], n_components=k)
    return error_report_univariate(
        res.eigsys.nu,
        res.eigenfunctions(),
        res.scores.xi,
        res.fitted_derivatives(),
        ref,
        rep.dX_true[name],
        n_components=k,
        metadata=dict(meta, K=res.eigsys.K, lambda_plus=res.fit.lambda_plus, w=res.fit.w),
    )


def run_study(cfg: StudyConfig, jobs: int = 1, indices: Sequence[int] | None = None) -> StudyResult:
    """Run every replicate, in parallel processes when ``jobs > 1``."""
    idx = list(range(cfg.replicates)) if indices is None else list(indices)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(partial(run_replicate, cfg), idx))
    else:
        reports = [run_replicate(cfg, i) for i in idx]
    return StudyResult(config=cfg, reports=reports)


def default_components(multivariate: bool) -> tuple[str, ...]:
    return COMPONENTS if multivariate else COMPONENTS[:1]
