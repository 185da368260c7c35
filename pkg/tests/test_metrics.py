"""Tests for error metrics, reference eigensystems, sign alignment and clustering."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from facederiv.errors import DataError, InvalidArgumentError
from facederiv.metrics import (
    aggregate,
    align_sign,
    clopper_pearson,
    error_report_multivariate,
    error_report_univariate,
    kmeans_labels,
    permutation_accuracy,
    reference_eigensystem,
    reference_multivariate,
    rmise_multivariate,
    rmise_univariate,
    standardize,
)
from facederiv.numerics import grid_quadrature, trapezoid_weights

GRID = np.linspace(0, 1, 101)


def smooth_curves(seed, n=80, J=101):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, J)
    basis = np.column_stack([np.sqrt(2) * np.sin((k + 1) * np.pi * t) for k in range(3)])
    return basis @ (rng.normal(size=(3, n)) * np.array([[3.0], [1.5], [0.5]]))


def three_groups(seed, shift=2.0, per_group=40, dim=3):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(3), per_group)
    return rng.normal(size=(labels.size, dim)) + shift * labels[:, None], labels


class TestReference:
    def test_rank_one_recovery(self, rng):
        phi = np.sqrt(2) * np.sin(np.pi * GRID)
        phi /= np.sqrt(grid_quadrature(phi**2, GRID))
        X = np.outer(phi, rng.normal(size=500))
        ref = reference_eigensystem(X, GRID, 1)
        aligned, _ = align_sign(ref.phi[:, 0], phi, GRID)
        assert grid_quadrature((aligned - phi) ** 2, GRID) < 1e-4

    def test_orthonormal(self):
        ref = reference_eigensystem(smooth_curves(1), GRID, 5)
        W = trapezoid_weights(GRID)
        assert np.max(np.abs(ref.phi.T @ (W[:, None] * ref.phi) - np.eye(5))) < 1e-6

    def test_trace_identity(self):
        X = smooth_curves(2)
        ref = reference_eigensystem(X, GRID)
        centered = X - X.mean(axis=1, keepdims=True)
        total = grid_quadrature((centered**2).mean(axis=1), GRID)
        assert ref.nu.sum() == pytest.approx(total, rel=0.01)

    def test_scores_are_projections(self):
        X = smooth_curves(3)
        ref = reference_eigensystem(X, GRID, 2)
        centered = X - X.mean(axis=1, keepdims=True)
        np.testing.assert_allclose(ref.xi[:, 1], grid_quadrature(centered * ref.phi[:, [1]], GRID), atol=1e-12)

    def test_needs_two_curves(self):
        with pytest.raises(DataError):
            reference_eigensystem(np.ones((101, 1)), GRID)

    def test_multivariate_single_component(self):
        X = smooth_curves(4)
        uni = reference_eigensystem(X, GRID, 3, ddof=1)
        multi = reference_multivariate([X], [GRID], 3)
        np.testing.assert_allclose(multi.v, uni.nu, rtol=1e-12)
        np.testing.assert_allclose(np.abs(multi.psi[0]), np.abs(uni.phi), atol=1e-10)


class TestAlign:
    def test_flip(self):
        ref = np.sin(np.pi * GRID)
        out, signs = align_sign(-ref, ref, GRID)
        np.testing.assert_array_equal(out, ref)
        assert signs[0] == -1

    def test_keep(self):
        ref = np.cos(GRID)
        np.testing.assert_array_equal(align_sign(ref, ref, GRID)[0], ref)

    def test_zero_inner_product_warns(self):
        with pytest.warns(RuntimeWarning, match="zero inner product"):
            out, signs = align_sign(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert signs[0] == 1

    @given(arrays(np.float64, 101, elements=st.floats(-1, 1)), st.sampled_from([-1.0, 1.0]))
    def test_matches_brute_force(self, noise, sign):
        ref = np.sin(2 * np.pi * GRID)
        est = sign * ref + 0.8 * noise
        aligned, _ = align_sign(est, ref, GRID)
        best = min((-est, est), key=lambda f: grid_quadrature((f - ref) ** 2, GRID))
        np.testing.assert_array_equal(aligned, best)
        np.testing.assert_array_equal(align_sign(aligned, ref, GRID)[0], aligned)


class TestUnivariateReport:
    def test_exact_estimate(self):
        X = smooth_curves(5)
        ref = reference_eigensystem(X, GRID, 2)
        rpt = error_report_univariate(ref.nu, ref.phi, ref.xi, X, ref, X)
        assert np.all(rpt.re == 0) and np.all(rpt.mse == 0) and rpt.rmise == 0
        assert np.max(rpt.ise) < 1e-28

    def test_constant_offset(self):
        X = smooth_curves(6)
        ref = reference_eigensystem(X, GRID, 2)
        rpt = error_report_univariate(ref.nu, ref.phi + 0.01, ref.xi, X, ref, X)
        np.testing.assert_allclose(rpt.ise, 1e-4, rtol=1e-10)

    def test_sign_flip_carried_to_scores(self):
        X = smooth_curves(7)
        ref = reference_eigensystem(X, GRID, 2)
        rpt = error_report_univariate(ref.nu, -ref.phi, -ref.xi, X, ref, X)
        assert np.max(rpt.mse) < 1e-28

    def test_hand_values(self):
        # three grid points with trapezoid weights (1/4, 1/2, 1/4)
        g = np.array([0.0, 0.5, 1.0])
        dX = np.array([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])
        dXh = np.array([[1.0, 2.0], [3.0, 2.0], [1.0, 4.0]])
        # curve 1: int (0, 2, 0)^2 = 0.5 * 4 = 2 against int 1 = 1; curve 2: 0.25*4 = 1 against 4
        assert rmise_univariate(dX, dXh, g) == pytest.approx((2.0 + 0.25) / 2)
        # ratio of sums: (2 + 1) / (1 + 4)
        assert rmise_multivariate([dX], [dXh], [g]) == pytest.approx(0.6)

    def test_re_and_mse_hand_values(self):
        X = smooth_curves(8)
        ref = reference_eigensystem(X, GRID, 2)
        xi_hat = ref.xi.copy()
        xi_hat[:, 0] += 0.5
        rpt = error_report_univariate(ref.nu * np.array([1.1, 0.8]), ref.phi, xi_hat, X, ref, X)
        np.testing.assert_allclose(rpt.re, [0.1, 0.2])
        assert rpt.mse[0] == pytest.approx(0.25 / ref.xi[:, 0].var(ddof=1))
        assert rpt.as_row()["re_2"] == pytest.approx(0.2)

    def test_zero_reference_eigenvalue(self):
        X = smooth_curves(9)
        ref = reference_eigensystem(X, GRID, 2)
        bad = type(ref)(grid=ref.grid, nu=np.array([1.0, 0.0]), phi=ref.phi, xi=ref.xi, mean=ref.mean)
        with pytest.raises(InvalidArgumentError):
            error_report_univariate(ref.nu, ref.phi, ref.xi, X, bad, X)


class TestMultivariateReport:
    def test_exact_estimate(self):
        Xs = [smooth_curves(10), smooth_curves(11)[:51]]
        grids = [GRID, np.linspace(0, 1, 51)]
        ref = reference_multivariate(Xs, grids, 2)
        rpt = error_report_multivariate(ref.v, list(ref.psi), ref.rho, Xs, ref, Xs)
        assert np.all(rpt.re == 0) and rpt.rmise == 0 and np.max(rpt.ise) < 1e-28

    def test_single_component_matches_univariate(self):
        X = smooth_curves(12)
        Xh = X + 0.1 * np.cos(3 * GRID)[:, None]
        uref = reference_eigensystem(X, GRID, 2, ddof=1)
        mref = reference_multivariate([X], [GRID], 2)
        phi_hat = uref.phi + 0.01 * GRID[:, None]
        u = error_report_univariate(uref.nu * 1.05, phi_hat, uref.xi * 0.9, Xh, uref, X)
        m = error_report_multivariate(uref.nu * 1.05, [phi_hat], uref.xi * 0.9, [Xh], mref, [X])
        np.testing.assert_allclose(m.re, u.re, rtol=1e-10)
        np.testing.assert_allclose(m.ise, u.ise, rtol=1e-8)
        np.testing.assert_allclose(m.mse, u.mse, rtol=1e-8)
        # the two printed RMISE forms: mean of ratios vs ratio of sums
        assert u.rmise == pytest.approx(rmise_univariate(X, Xh, GRID))
        assert m.rmise == pytest.approx(rmise_multivariate([X], [Xh], [GRID]))
        assert m.rmise != pytest.approx(u.rmise, rel=1e-6)


class TestAggregation:
    def test_hand_values(self):
        assert aggregate([1.0, 2.0, 3.0]) == (2.0, 1.0)

    def test_single_value(self):
        mean, sd = aggregate([4.0])
        assert mean == 4.0 and math.isnan(sd)

    def test_standardize(self, rng):
        S = standardize(rng.normal(3, 2, size=(50, 3)))
        np.testing.assert_allclose(S.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(S.std(axis=0, ddof=1), 1)


class TestClustering:
    def test_separable(self):
        S, labels = three_groups(0, shift=20.0)
        res = kmeans_labels(standardize(S), 3, seed=1, truth=labels)
        assert res.accuracy == 1.0
        assert np.bincount(res.labels).sum() == 120

    def test_single_cluster(self):
        labels = np.array([0] * 6 + [1] * 3 + [2] * 1)
        res = kmeans_labels(np.random.default_rng(0).normal(size=(10, 2)), 1, truth=labels)
        assert res.accuracy == pytest.approx(0.6)

    def test_shifted_groups(self):
        S, labels = three_groups(3)
        assert kmeans_labels(standardize(S), 3, seed=0, truth=labels).accuracy >= 0.9

    def test_deterministic(self):
        S, _ = three_groups(4)
        a = kmeans_labels(S, 3, seed=5).labels
        np.testing.assert_array_equal(a, kmeans_labels(S, 3, seed=5).labels)

    def test_too_many_clusters(self):
        with pytest.raises(InvalidArgumentError):
            kmeans_labels(np.zeros((2, 2)), 3)

    def test_permutation_accuracy(self):
        assert permutation_accuracy([2, 2, 0, 0, 1], [0, 0, 1, 1, 1]) == pytest.approx(0.8)


def binomial_cdf(k, n, p):
    return sum(math.comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(k + 1))


def bisect(f, lo, hi):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
    return 0.5 * (lo + hi)


class TestClopperPearson:
    def test_frozen_oracle(self):
        lo, hi = clopper_pearson(115, 120)
        assert (round(lo, 2), round(hi, 2)) == (0.91, 0.99)
        assert lo == pytest.approx(0.905441, abs=1e-6)
        assert hi == pytest.approx(0.986335, abs=1e-6)

    def test_against_binomial_tails(self):
        k, n = 115, 120
        lo, hi = clopper_pearson(k, n)
        # P(X >= k | lo) = 0.025 and P(X <= k | hi) = 0.025
        lo_ref = bisect(lambda p: 0.025 - (1 - binomial_cdf(k - 1, n, p)), 0.0, 1.0)
        hi_ref = bisect(lambda p: binomial_cdf(k, n, p) - 0.025, 0.0, 1.0)
        assert lo == pytest.approx(lo_ref, abs=1e-9)
        assert hi == pytest.approx(hi_ref, abs=1e-9)

    def test_edges(self):
        assert clopper_pearson(120, 120)[1] == 1.0
        assert clopper_pearson(0, 10)[0] == 0.0
        with pytest.raises(InvalidArgumentError):
            clopper_pearson(5, 4)
