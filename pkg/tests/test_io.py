"""Tests for the long-format CSV readers and writers."""

import numpy as np
import pytest

from facederiv.errors import DataError
from facederiv.io import (
    fmt,
    read_curves,
    read_eigenfunctions,
    read_scores,
    read_table,
    write_curves,
    write_eigenfunctions,
    write_scores,
    write_surface,
)


def test_fmt():
    assert fmt(3) == "3"
    assert fmt(np.nan) == ""
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt("inf") == "inf"


def test_curves_round_trip(tmp_path, rng):
    g1, g2 = np.linspace(0, 1, 11), np.linspace(0, 1, 6)
    Y1, Y2 = rng.normal(size=(11, 4)), rng.normal(size=(6, 3))
    Y1[2, 1] = np.nan
    path = write_curves(tmp_path / "c.csv", {"X1": (g1, Y1), "X2": (g2, Y2)})
    assert ",1,0.2," in path.read_text()
    assert path.read_text().count("\n") == 1 + 44 + 18
    out = read_curves(path)
    np.testing.assert_allclose(out["X1"][0], g1, atol=1e-12)
    np.testing.assert_allclose(out["X1"][1], Y1, rtol=1e-10, equal_nan=True)
    np.testing.assert_allclose(out["X2"][1], Y2, rtol=1e-10)
    assert list(read_curves(path, ["X2"])) == ["X2"]


def test_missing_component(tmp_path):
    path = write_curves(tmp_path / "c.csv", {"X1": (np.array([0.0, 1.0]), np.ones((2, 1)))})
    with pytest.raises(DataError, match="'X2' not present"):
        read_curves(path, ["X2"])


def test_line_numbered_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("component,curve_id,t,value\nX1,0,0.0,1.0\nX1,0,abc,2.0\n")
    with pytest.raises(DataError, match=r"bad.csv:3: cannot parse 't'"):
        read_curves(path)
    path.write_text("component,curve_id,t,value\nX1,1.5,0.0,1.0\n")
    with pytest.raises(DataError, match=r":2: 'curve_id' must be an integer"):
        read_curves(path)


def test_duplicates(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("component,curve_id,t,value\nX1,0,0.5,1\nX1,0,0.5,2\n")
    with pytest.raises(DataError, match="duplicate"):
        read_curves(path)


@pytest.mark.parametrize(
    "text, message",
    [("", "file is empty"), ("component,curve_id,t,value\n", "no data rows"), ("a,b\n1,2\n", "missing columns")],
)
def test_empty_or_malformed(tmp_path, text, message):
    path = tmp_path / "x.csv"
    path.write_text(text)
    with pytest.raises(DataError, match=message):
        read_curves(path)


def test_unreadable(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        read_table(tmp_path / "absent.csv")


def test_eigenfunctions_and_scores(tmp_path, rng):
    g = np.linspace(0, 1, 5)
    Phi = rng.normal(size=(5, 2))
    out = read_eigenfunctions(write_eigenfunctions(tmp_path / "e.csv", {"X1": (g, Phi)}))
    np.testing.assert_allclose(out["X1"][1], Phi, rtol=1e-10)
    xi = rng.normal(size=(7, 3))
    ids, back = read_scores(write_scores(tmp_path / "s.csv", xi))
    np.testing.assert_array_equal(ids, np.arange(7))
    np.testing.assert_allclose(back, xi, rtol=1e-10)


def test_incomplete_scores(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("curve_id,k,value\n0,1,1.0\n0,2,1.0\n1,1,0.5\n")
    with pytest.raises(DataError, match="incomplete"):
        read_scores(path)


def test_surface(tmp_path):
    s = np.array([0.0, 1.0])
    path = write_surface(tmp_path / "v.csv", s, s, np.array([[1.0, 2.0], [3.0, 4.0]]))
    rows = read_table(path)
    assert [r["value"] for r in rows] == ["1", "2", "3", "4"]
    assert rows[1]["s"] == "0" and rows[1]["t"] == "1"
