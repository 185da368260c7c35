"""Command-line interface: ``facederiv simulate | fit | metrics | cluster | study``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .config import RunConfig, load_config
from .dfpca import DfpcaResult, run_dfpca
from .dmfpca import DmfpcaResult, run_dmfpca
from .errors import ConfigError, DataError, FaceDerivError, GridMismatchError, NumericError
from .face import FunctionalSample, derivative_covariance_surface
from .metrics import (
    aggregate,
    clopper_pearson,
    error_report_multivariate,
    error_report_univariate,
    kmeans_labels,
    reference_eigensystem,
    reference_multivariate,
    standardize,
)
from .simulate import Setting, fill_missing, make_replicate
from .splinebasis import make_basis
from .study import StudyConfig, run_study

__all__ = ["main", "build_parser"]

log = logging.getLogger("facederiv")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MULTI_DIR = "multivariate"


def _common(parser: argparse.ArgumentParser, fit_flags: bool = True) -> None:
    parser.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", required=True, help="output directory (metrics: output file)")
    parser.add_argument("--jobs", type=int)
    if fit_flags:
        parser.add_argument("--components", help="comma-separated component names, e.g. X1,X2")
        parser.add_argument("--c", type=int, help="number of B-spline basis functions")
        parser.add_argument("--q", type=int, help="spline degree")
        parser.add_argument("--d", type=int, help="derivative order")
        parser.add_argument("--l1", type=int, help="first penalty order")
        parser.add_argument("--l2", type=int, help="second penalty order")
        parser.add_argument("--threshold", type=float, help="variance fraction for truncation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facederiv", description="Derivative FPCA with additive-penalty FACE")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one replicate of the bivariate design")
    _common(p, fit_flags=False)
    p.add_argument("--setting", help="DenseClean, DenseNoisy or SparseNoisy")
    p.add_argument("--n", type=int)
    p.add_argument("--J", type=int)

    p = sub.add_parser("fit", help="fit univariate and multivariate derivative FPCA to a curves CSV")
    _common(p)
    p.add_argument("--input", required=True, help="curves CSV (component,curve_id,t,value)")
    p.add_argument("--multivariate", action="store_true", help="run the multivariate step even for one component")
    p.add_argument("--surface-points", type=int, default=101, help="grid size for derivative_covariance.csv")

    p = sub.add_parser("metrics", help="compare fit outputs with a truth CSV")
    _common(p, fit_flags=False)
    p.add_argument("--estimates", nargs="+", required=True, help="fit output directories")
    p.add_argument("--truth", nargs="+", required=True, help="truth CSVs, one per estimate directory or one shared")
    p.add_argument("--n-compare", type=int, default=2, help="number of leading components compared")

    p = sub.add_parser("cluster", help="K-means on standardized scores")
    _common(p, fit_flags=False)
    p.add_argument("--scores", required=True, help="scores CSV (curve_id,k,value)")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--labels", help="optional CSV (curve_id,label) of known groups")

    p = sub.add_parser("study", help="simulation study over replicates with metric tables")
    _common(p)
    p.add_argument("--setting")
    p.add_argument("--replicates", type=int)
    p.add_argument("--multivariate", action="store_true")
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    keys = ("seed", "jobs", "components", "c", "q", "d", "l1", "l2", "threshold", "setting", "n", "J", "replicates")
    return cfg.updated({k: getattr(args, k, None) for k in keys})


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- simulate ---------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    out = Path(args.out)
    rep = make_replicate(cfg.setting, n=cfg.n, J=cfg.J, seed=cfg.seed)
    io.write_curves(out / "curves.csv", {k: (rep.grids[k], rep.Y[k]) for k in rep.Y})
    io.write_curves(out / "truth.csv", {k: (rep.grids[k], rep.dX_true[k]) for k in rep.dX_true})
    _write_json(
        out / "manifest.json",
        {
            "setting": rep.setting.value,
            "seed": rep.seed,
            "n": rep.n,
            "J": cfg.J,
            "sigma": rep.metadata["sigma"],
            "rng": "numpy default_rng (PCG64)",
            "files": {"curves": "curves.csv", "truth": "truth.csv (analytic first derivatives)"},
        },
    )
    print(f"wrote {rep.setting.value} replicate (seed {rep.seed}) to {out}")
    return EXIT_OK


# -- fit --------------------------------------------------------------------


def _write_univariate(out: Path, name: str, res: DfpcaResult, filled: bool, surface_points: int) -> None:
    grid = res.grid
    K = res.eigsys.K
    nu = res.eigsys.nu
    io.write_table(out / "eigenvalues.csv", ("k", "value", "retained"), ((k + 1, nu[k], int(k < K)) for k in range(nu.size)))
    io.write_eigenfunctions(out / "eigenfunctions.csv", {name: (grid, res.eigenfunctions())})
    io.write_scores(out / "scores.csv", res.scores.xi)
    io.write_curves(out / "fitted_derivatives.csv", {name: (grid, res.fitted_derivatives())})
    gcv = res.gcv
    io.write_table(
        out / "gcv_surface.csv",
        ("lambda_plus", "w", "gcv"),
        ((lam, w, gcv.scores[i, j]) for i, lam in enumerate(gcv.lambda_values) for j, w in enumerate(gcv.w_values)),
    )
    s = np.linspace(res.fit.basis.domain_lo, res.fit.basis.domain_hi, surface_points)
    io.write_surface(out / "derivative_covariance.csv", s, s, derivative_covariance_surface(res.fit, res.eigsys.d, s))
    _write_json(
        out / "summary.json",
        {
            "component": name,
            "lambda_plus": res.fit.lambda_plus,
            "w": res.fit.w,
            "sigma2": res.scores.sigma2,
            "K": K,
            "n": res.sample.n,
            "J": res.sample.J,
            "missing_filled": filled,
        },
    )


def _write_multivariate(out: Path, res: DmfpcaResult) -> None:
    v = res.eigsys.v
    M = res.eigsys.M
    io.write_table(out / "eigenvalues.csv", ("k", "value", "retained"), ((k + 1, v[k], int(k < M)) for k in range(v.size)))
    grids = res.grids()
    io.write_eigenfunctions(
        out / "eigenfunctions.csv", {name: (g, psi) for name, g, psi in zip(res.names, grids, res.eigenfunctions())}
    )
    io.write_scores(out / "scores.csv", res.rho)
    fitted = res.fitted_derivatives()
    io.write_curves(out / "fitted_derivatives.csv", {name: (g, fitted[name]) for name, g in zip(res.names, grids)})
    _write_json(out / "summary.json", {"M": M, "K_plus": res.stack.K_plus, "components": list(res.names)})


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = _config(args)
    out = Path(args.out)
    requested = list(cfg.components) if args.components or args.config else None
    data = io.read_curves(args.input, requested)
    samples, filled, bases = {}, {}, {}
    for name, (grid, Y) in data.items():
        basis = make_basis(grid[0], grid[-1], cfg.c, cfg.q)
        filled[name] = bool(np.isnan(Y).any())
        if filled[name]:
            log.info("component %s: filling %d missing cells", name, int(np.isnan(Y).sum()))
            Y = fill_missing(Y, grid, basis, grid_spec=cfg.grid_spec)
        samples[name] = FunctionalSample(grid, Y)
        bases[name] = basis
    multi = args.multivariate or len(samples) > 1
    if multi:
        res = run_dmfpca(samples, bases, cfg.l1, cfg.l2, cfg.d, cfg.grid_spec, cfg.threshold)
        uni = res.univariate
    else:
        (name, sample), = samples.items()
        uni = {name: run_dfpca(sample, bases[name], cfg.l1, cfg.l2, cfg.d, cfg.grid_spec, cfg.threshold)}
    for name, r in uni.items():
        _write_univariate(out / name, name, r, filled[name], args.surface_points)
        print(f"{name}: lambda_plus={r.fit.lambda_plus:.4g} w={r.fit.w:.2f} K={r.eigsys.K} sigma2={r.scores.sigma2:.4g}")
    if multi:
        _write_multivariate(out / MULTI_DIR, res)
        print(f"multivariate: M={res.eigsys.M} of K+={res.stack.K_plus}")
    (out / "config.json").write_text(cfg.to_json() + "\n")
    return EXIT_OK


# -- metrics ----------------------------------------------------------------


def _load_fit(directory: Path):
    eig = io.read_table(directory / "eigenvalues.csv", ("k", "value"))
    values = np.array([float(r["value"]) for r in eig])
    funcs = io.read_eigenfunctions(directory / "eigenfunctions.csv")
    _, xi = io.read_scores(directory / "scores.csv")
    fitted = io.read_curves(directory / "fitted_derivatives.csv")
    return values, funcs, xi, fitted


def _same_grid(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape or not np.allclose(a, b, rtol=0, atol=1e-9):
        raise GridMismatchError(f"{what}: estimate and truth grids differ")


def _metrics_for(est_dir: Path, truth_path: Path, n_compare: int) -> list[dict]:
    truth = io.read_curves(truth_path)
    rows = []
    for comp_dir in sorted(p for p in est_dir.iterdir() if p.is_dir() and p.name != MULTI_DIR):
        name = comp_dir.name
        if name not in truth:
            raise DataError(f"truth file has no component {name!r}")
        grid, dX = truth[name]
        nu, funcs, xi, fitted = _load_fit(comp_dir)
        fgrid, phi = funcs[name]
        _same_grid(fgrid, grid, name)
        _same_grid(fitted[name][0], grid, name)
        k = min(n_compare, phi.shape[1])
        ref = reference_eigensystem(dX, grid, n_components=k)
        rep = error_report_univariate(nu, phi, xi, fitted[name][1], ref, dX, n_components=k)
        rows.append({"estimates": str(est_dir), "scope": name, **rep.as_row()})
    multi = est_dir / MULTI_DIR
    if multi.is_dir():
        v, funcs, rho, fitted = _load_fit(multi)
        names = list(funcs)
        for name in names:
            _same_grid(funcs[name][0], truth[name][0], name)
        k = min(n_compare, rho.shape[1])
        ref = reference_multivariate([truth[c][1] for c in names], [truth[c][0] for c in names], n_components=k)
        rep = error_report_multivariate(
            v, [funcs[c][1] for c in names], rho, [fitted[c][1] for c in names], ref, [truth[c][1] for c in names], k
        )
        rows.append({"estimates": str(est_dir), "scope": MULTI_DIR, **rep.as_row()})
    if not rows:
        raise DataError(f"{est_dir}: no fit outputs found")
    return rows


def _write_metric_rows(path: Path, rows: list[dict]) -> None:
    keys = sorted({k for r in rows for k in r if k not in ("estimates", "scope", "replicate", "seed")})
    lead = [k for k in ("replicate", "seed", "estimates", "scope") if any(k in r for r in rows)]
    header = lead + keys
    io.write_table(path, header, ([r.get(k, np.nan) for k in header] for r in rows))
    by_scope: dict[str, list[dict]] = {}
    for r in rows:
        by_scope.setdefault(r["scope"], []).append(r)
    summary = []
    for scope, group in by_scope.items():
        for key in keys:
            vals = [g[key] for g in group if key in g]
            mean, sd = aggregate(vals)
            summary.append((scope, key, len(vals), mean, sd, f"{mean:.4f} ({sd:.4f})" if len(vals) > 1 else f"{mean:.4f}"))
    io.write_table(path.with_name(path.stem + "_summary.csv"), ("scope", "metric", "count", "mean", "sd", "display"), summary)


def cmd_metrics(args: argparse.Namespace) -> int:
    truths = args.truth * len(args.estimates) if len(args.truth) == 1 else args.truth
    if len(truths) != len(args.estimates):
        raise ConfigError("give one truth file per estimate directory, or a single shared one")
    rows = []
    for est, truth in zip(args.estimates, truths):
        est_dir = Path(est)
        if not est_dir.is_dir():
            raise DataError(f"{est_dir} is not a directory")
        rows.extend(_metrics_for(est_dir, Path(truth), args.n_compare))
    out = Path(args.out)
    _write_metric_rows(out, rows)
    for r in rows:
        print(f"{r['estimates']} [{r['scope']}] RMISE={r['rmise']:.4f}")
    return EXIT_OK


# -- cluster ----------------------------------------------------------------


def cmd_cluster(args: argparse.Namespace) -> int:
    cfg = _config(args)
    ids, scores = io.read_scores(args.scores)
    truth = None
    if args.labels:
        rows = io.read_table(args.labels, ("curve_id", "label"))
        lookup = {int(float(r["curve_id"])): r["label"].strip() for r in rows}
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise DataError(f"labels file lacks curve ids {missing[:5]}")
        truth = np.array([lookup[i] for i in ids])
    res = kmeans_labels(standardize(scores), args.k, seed=cfg.seed, truth=truth)
    out = Path(args.out)
    io.write_table(out / "labels.csv", ("curve_id", "label"), zip(ids, res.labels))
    sizes = np.bincount(res.labels, minlength=args.k).tolist()
    report = {"k": args.k, "seed": cfg.seed, "sizes": sizes, "n_iter": res.n_iter}
    if res.accuracy is not None:
        correct = int(round(res.accuracy * len(ids)))
        lo, hi = clopper_pearson(correct, len(ids))
        report.update(
            accuracy=res.accuracy,
            ci_low=lo,
            ci_high=hi,
            display=f"accuracy of {res.accuracy:.2f} (95% CI: {lo:.2f}-{hi:.2f})",
        )
        print(report["display"])
    _write_json(out / "cluster.json", report)
    print(f"cluster sizes: {sizes}")
    return EXIT_OK


# -- study ------------------------------------------------------------------


def cmd_study(args: argparse.Namespace) -> int:
    cfg = _config(args)
    comps = cfg.components if (args.components or args.config) else (("X1", "X2") if args.multivariate else ("X1",))
    study = StudyConfig(
        setting=Setting.parse(cfg.setting),
        replicates=cfg.replicates,
        seed=cfg.seed,
        components=tuple(comps),
        multivariate=args.multivariate,
        n=cfg.n,
        J=cfg.J,
        c=cfg.c,
        q=cfg.q,
        d=cfg.d,
        l1=cfg.l1,
        l2=cfg.l2,
        threshold=cfg.threshold,
        grid_spec=cfg.grid_spec,
    )
    result = run_study(study, jobs=cfg.jobs)
    scope = MULTI_DIR if args.multivariate else comps[0]
    rows = [
        {"replicate": r.metadata["replicate"], "seed": r.metadata["seed"], "scope": scope, **r.as_row()}
        for r in result.reports
    ]
    out = Path(args.out)
    if out.suffix != ".csv":
        out = out / "metrics.csv"
    _write_metric_rows(out, rows)
    mean, sd = aggregate([r["rmise"] for r in rows])
    print(f"{study.setting.value} {scope} (l1, l2)=({cfg.l1}, {cfg.l2}): RMISE {mean:.4f} ({sd:.4f}) over {len(rows)} replicates")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "metrics": cmd_metrics,
    "cluster": cmd_cluster,
    "study": cmd_study,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FaceDerivError as exc:  # pragma: no cover - every subclass is handled above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
