"""Long-format CSV reading and writing.

Schemas (one header row each):

* curves       ``component,curve_id,t,value`` (empty value = missing)
* eigenfunctions ``component,k,t,value``
* scores       ``curve_id,k,value``
* surfaces     ``s,t,value``

Numbers are written with 12 significant digits.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DataError

__all__ = [
    "fmt",
    "write_table",
    "read_table",
    "write_curves",
    "read_curves",
    "write_eigenfunctions",
    "read_eigenfunctions",
    "write_scores",
    "read_scores",
    "write_surface",
]

CURVE_HEADER = ("component", "curve_id", "t", "value")
EIGENFUNCTION_HEADER = ("component", "k", "t", "value")
SCORE_HEADER = ("curve_id", "k", "value")
SURFACE_HEADER = ("s", "t", "value")


def fmt(value) -> str:
    """Format a number with 12 significant digits; NaN becomes an empty field."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, str):
        return value
    x = float(value)
    if math.isnan(x):
        return ""
    return f"{x:.12g}"


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_table(path: str | Path, header: Sequence[str] | None = None) -> list[dict[str, str]]:
    """Rows as dictionaries; ``header`` lists the columns that must be present."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: file is empty")
        if header is not None:
            missing = [h for h in header if h not in reader.fieldnames]
            if missing:
                raise DataError(f"{path}: missing columns {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows


def _number(text: str, path: Path, line: int, column: str, allow_empty: bool = False) -> float:
    if text is None:
        raise DataError(f"{path}:{line}: missing field {column!r}")
    text = text.strip()
    if text == "":
        if allow_empty:
            return math.nan
        raise DataError(f"{path}:{line}: empty field {column!r}")
    try:
        return float(text)
    except ValueError:
        raise DataError(f"{path}:{line}: cannot parse {column!r} value {text!r} as a number") from None


def _integer(text: str, path: Path, line: int, column: str) -> int:
    x = _number(text, path, line, column)
    if not float(x).is_integer():
        raise DataError(f"{path}:{line}: {column!r} must be an integer, got {text!r}")
    return int(x)


def write_curves(path: str | Path, curves: Mapping[str, tuple[ArrayLike, ArrayLike]]) -> Path:
    """``curves[component] = (grid, Y)`` with ``Y`` of shape ``J x n``."""

    def rows():
        for name, (grid, Y) in curves.items():
            grid = np.asarray(grid, dtype=float)
            Y = np.asarray(Y, dtype=float)
            for i in range(Y.shape[1]):
                for j, t in enumerate(grid):
                    yield (name, i, t, Y[j, i])

    return write_table(path, CURVE_HEADER, rows())


def read_curves(
    path: str | Path, components: Sequence[str] | None = None
) -> dict[str, tuple[NDArray[np.float64], NDArray[np.float64]]]:
    """Inverse of :func:`write_curves`; absent or empty cells become NaN.

    Each component's grid is the sorted set of its ``t`` values.  Curve ids
    are kept in ascending order.
    """
    path = Path(path)
    rows = read_table(path, CURVE_HEADER)
    parsed: dict[str, list[tuple[int, float, float]]] = {}
    for line, row in enumerate(rows, start=2):
        name = (row["component"] or "").strip()
        if not name:
            raise DataError(f"{path}:{line}: empty component name")
        parsed.setdefault(name, []).append(
            (
                _integer(row["curve_id"], path, line, "curve_id"),
                _number(row["t"], path, line, "t"),
                _number(row["value"], path, line, "value", allow_empty=True),
            )
        )
    names = list(parsed) if components is None else list(components)
    out = {}
    for name in names:
        if name not in parsed:
            raise DataError(f"{path}: component {name!r} not present")
        entries = parsed[name]
        ids = sorted({e[0] for e in entries})
        grid = np.array(sorted({e[1] for e in entries}))
        id_pos = {v: k for k, v in enumerate(ids)}
        t_pos = {v: k for k, v in enumerate(grid)}
        Y = np.full((grid.size, len(ids)), np.nan)
        seen = np.zeros(Y.shape, dtype=bool)
        for cid, t, v in entries:
            j, i = t_pos[t], id_pos[cid]
            if seen[j, i]:
                raise DataError(f"{path}: duplicate entry for component {name!r}, curve {cid}, t={t}")
            seen[j, i] = True
            Y[j, i] = v
        out[name] = (grid, Y)
    return out


def write_eigenfunctions(path: str | Path, funcs: Mapping[str, tuple[ArrayLike, ArrayLike]]) -> Path:
    """``funcs[component] = (grid, Phi)`` with eigenfunctions in the columns of ``Phi``."""

    def rows():
        for name, (grid, Phi) in funcs.items():
            Phi = np.asarray(Phi, dtype=float)
            for k in range(Phi.shape[1]):
                for j, t in enumerate(np.asarray(grid, dtype=float)):
                    yield (name, k + 1, t, Phi[j, k])

    return write_table(path, EIGENFUNCTION_HEADER, rows())


def read_eigenfunctions(path: str | Path) -> dict[str, tuple[NDArray[np.float64], NDArray[np.float64]]]:
    path = Path(path)
    rows = read_table(path, EIGENFUNCTION_HEADER)
    parsed: dict[str, dict[tuple[int, float], float]] = {}
    for line, row in enumerate(rows, start=2):
        key = (_integer(row["k"], path, line, "k"), _number(row["t"], path, line, "t"))
        parsed.setdefault(row["component"].strip(), {})[key] = _number(row["value"], path, line, "value")
    out = {}
    for name, table in parsed.items():
        ks = sorted({k for k, _ in table})
        grid = np.array(sorted({t for _, t in table}))
        Phi = np.full((grid.size, len(ks)), np.nan)
        for (k, t), v in table.items():
            Phi[np.searchsorted(grid, t), ks.index(k)] = v
        if np.isnan(Phi).any():
            raise DataError(f"{path}: component {name!r} has incomplete eigenfunctions")
        out[name] = (grid, Phi)
    return out


def write_scores(path: str | Path, xi: ArrayLike) -> Path:
    xi = np.asarray(xi, dtype=float)
    rows = ((i, k + 1, xi[i, k]) for i in range(xi.shape[0]) for k in range(xi.shape[1]))
    return write_table(path, SCORE_HEADER, rows)


def read_scores(path: str | Path) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Curve ids (ascending) and the ``n x K`` score matrix."""
    path = Path(path)
    rows = read_table(path, SCORE_HEADER)
    table = {}
    for line, row in enumerate(rows, start=2):
        key = (_integer(row["curve_id"], path, line, "curve_id"), _integer(row["k"], path, line, "k"))
        table[key] = _number(row["value"], path, line, "value")
    ids = sorted({i for i, _ in table})
    ks = sorted({k for _, k in table})
    xi = np.full((len(ids), len(ks)), np.nan)
    for (i, k), v in table.items():
        xi[ids.index(i), ks.index(k)] = v
    if np.isnan(xi).any():
        raise DataError(f"{path}: score table is incomplete")
    return np.array(ids, dtype=np.int64), xi


def write_surface(path: str | Path, s: ArrayLike, t: ArrayLike, values: ArrayLike) -> Path:
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    V = np.asarray(values, dtype=float)
    rows = ((s[a], t[b], V[a, b]) for a in range(s.size) for b in range(t.size))
    return write_table(path, SURFACE_HEADER, rows)
