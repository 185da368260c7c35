"""Tests for the multivariate combination of derivative-based scores."""

from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import simpson

from facederiv.dfpca import ScoreSet, curve_derivatives, eigensystem, reconstruct, run_dfpca, scores
from facederiv.dmfpca import (
    dmfpc_scores,
    dmfpcs,
    multivariate_eigensystem,
    reconstruct_multivariate,
    run_dmfpca,
    stack_scores,
)
from facederiv.errors import DataError, InvalidArgumentError
from facederiv.face import FunctionalSample, estimate_theta, lemma1_components, sample_covariance
from facederiv.metrics import error_report_multivariate, reference_multivariate
from facederiv.splinebasis import eval_basis, penalty_matrix

GRID = np.linspace(0, 1, 101)
NAMES = ("X1", "X2")


def score_set(xi):
    xi = np.asarray(xi, dtype=float)
    return ScoreSet(xi=xi, nu_used=xi.var(axis=0), sigma2=0.0)


@pytest.fixture(scope="module")
def clean_multi(basis38, replicates):
    rep = replicates("DenseClean")
    return rep, run_dmfpca({k: FunctionalSample(GRID, rep.Y[k]) for k in NAMES}, basis38)


@pytest.fixture(scope="module")
def in_span_systems(basis38):
    """Full-rank univariate systems for two components that lie in the spline span."""
    rng = np.random.default_rng(7)
    out = {}
    for name in NAMES:
        theta = rng.normal(size=(38, 60)).cumsum(axis=0) / 4
        Y = eval_basis(basis38, GRID) @ theta
        sample = FunctionalSample(GRID, Y - Y.mean(axis=1, keepdims=True), centered=True)
        fit = lemma1_components(basis38, penalty_matrix(2, 38), penalty_matrix(3, 38), 0.0, 1.0, GRID)
        fit = estimate_theta(fit, sample_covariance(sample))
        sys = eigensystem(fit, 1)
        derivs = curve_derivatives(sample, fit, 1)
        out[name] = (scores(derivs, sys, n_components=37, sigma2=0.0), sys, derivs)
    return out


class TestStack:
    def test_single_component(self, clean_multi):
        uni = clean_multi[1].univariate["X1"]
        stack = stack_scores([(uni.scores, uni.eigsys)])
        np.testing.assert_array_equal(stack.Xi, uni.scores.xi)

    def test_block_offsets(self, clean_multi):
        sys = clean_multi[1].univariate["X1"].eigsys
        rng = np.random.default_rng(0)
        stack = stack_scores({"A": (score_set(rng.normal(size=(10, 2))), sys), "B": (score_set(rng.normal(size=(10, 3))), sys)})
        assert stack.K_plus == 5
        assert [b.offset for b in stack.blocks] == [0, 2]
        assert stack.names == ("A", "B")

    def test_simulated_shape(self, clean_multi):
        res = clean_multi[1]
        K = [res.univariate[k].eigsys.K for k in NAMES]
        assert res.stack.Xi.shape == (100, sum(K))

    def test_mismatched_curves(self, clean_multi):
        sys = clean_multi[1].univariate["X1"].eigsys
        with pytest.raises(DataError):
            stack_scores([(score_set(np.ones((5, 1))), sys), (score_set(np.ones((6, 1))), sys)])


class TestEigensystem:
    def test_diagonal_covariance(self, clean_multi):
        sys = clean_multi[1].univariate["X1"].eigsys
        Xi = np.zeros((8, 2))
        Xi[:4, 0] = [2 * np.sqrt(7 / 4) * s for s in (1, -1, 1, -1)]
        Xi[4:, 1] = [np.sqrt(7 / 4) * s for s in (1, -1, 1, -1)]
        stack = stack_scores([(score_set(Xi), sys)])
        out = multivariate_eigensystem(stack)
        np.testing.assert_allclose(out.v, [4.0, 1.0], rtol=1e-12)
        np.testing.assert_allclose(np.abs(out.C), np.eye(2), atol=1e-12)

    def test_trace_and_orthonormality(self, clean_multi):
        res = clean_multi[1]
        Z = res.stack.Xi.T @ res.stack.Xi / 99
        assert res.eigsys.v.sum() == pytest.approx(np.trace(Z), rel=1e-10)
        assert np.max(np.abs(res.eigsys.C.T @ res.eigsys.C - np.eye(res.stack.K_plus))) < 1e-10

    def test_truncation(self, clean_multi):
        res = clean_multi[1]
        ratio = np.cumsum(res.eigsys.v) / res.eigsys.v.sum()
        M = res.eigsys.M
        assert ratio[M - 1] >= 0.95 and (M == 1 or ratio[M - 2] < 0.95)
        assert M < res.stack.K_plus

    def test_needs_two_curves(self, clean_multi):
        sys = clean_multi[1].univariate["X1"].eigsys
        with pytest.raises(DataError):
            multivariate_eigensystem(stack_scores([(score_set(np.ones((1, 2))), sys)]))


class TestEigenfunctions:
    def test_identity_rotation(self, clean_multi):
        uni = clean_multi[1].univariate["X1"]
        sys = multivariate_eigensystem(stack_scores([(uni.scores, uni.eigsys)]))
        K = uni.eigsys.K
        sys = replace(sys, C=np.eye(K), M=K)
        np.testing.assert_array_equal(dmfpcs(sys, [GRID])[0], uni.eigenfunctions())

    def test_product_space_orthonormality(self, clean_multi):
        res = clean_multi[1]
        fine = np.linspace(0, 1, 1001)
        psi = dmfpcs(res.eigsys, [fine, fine])
        gram = sum(simpson(p[:, :, None] * p[:, None, :], x=fine, axis=0) for p in psi)
        assert np.max(np.abs(gram - np.eye(res.eigsys.M))) < 1e-6

    def test_single_component_matches_univariate(self, clean_multi):
        uni = clean_multi[1].univariate["X1"]
        single = run_dmfpca({"X1": uni.sample}, uni.fit.basis)
        psi = single.eigenfunctions()[0]
        phi = uni.eigenfunctions()[:, : psi.shape[1]]
        signs = np.sign(np.sum(psi * phi, axis=0))
        assert np.max(np.abs(psi * signs - phi)) < 1e-3

    def test_invalid_M(self, clean_multi):
        with pytest.raises(InvalidArgumentError):
            dmfpcs(clean_multi[1].eigsys, [GRID, GRID], M=0)


class TestScores:
    def test_identity_rotation(self, clean_multi):
        res = clean_multi[1]
        sys = replace(res.eigsys, C=np.eye(res.stack.K_plus))
        np.testing.assert_array_equal(dmfpc_scores(sys, res.stack, res.stack.K_plus), res.stack.Xi)

    def test_variance_is_eigenvalue(self, clean_multi):
        res = clean_multi[1]
        cov = res.rho.T @ res.rho / (res.rho.shape[0] - 1)
        M = res.eigsys.M
        np.testing.assert_allclose(cov, np.diag(res.eigsys.v[:M]), atol=1e-10 * res.eigsys.v[0])

    def test_noiseless_scores_close_to_oracle(self, clean_multi):
        rep, res = clean_multi
        truth = [rep.dX_true[k] for k in NAMES]
        ref = reference_multivariate(truth, [GRID, GRID], n_components=2)
        fitted = res.fitted_derivatives()
        rpt = error_report_multivariate(
            res.eigsys.v, res.eigenfunctions(), res.rho, [fitted[k] for k in NAMES], ref, truth, 2
        )
        assert rpt.mse[0] < 0.01


class TestReconstruct:
    def test_zero_scores(self, clean_multi):
        res = clean_multi[1]
        out = reconstruct_multivariate(res.eigsys, np.zeros_like(res.rho), [GRID, GRID])
        assert all(np.all(c.curves == 0) for c in out)

    def test_full_rank_matches_univariate(self, in_span_systems):
        stack = stack_scores({k: v[:2] for k, v in in_span_systems.items()})
        sys = multivariate_eigensystem(stack)
        rho = dmfpc_scores(sys, stack, stack.K_plus)
        multi = reconstruct_multivariate(sys, rho, [GRID, GRID])
        for name, out in zip(NAMES, multi):
            sc, esys, derivs = in_span_systems[name]
            uni = reconstruct(sc, esys, GRID).curves
            np.testing.assert_allclose(out.curves, uni, atol=1e-8 * np.max(np.abs(uni)))
            np.testing.assert_allclose(out.curves, derivs.curves, atol=1e-6)

    def test_rotation_consistency_on_fit(self, clean_multi):
        res = clean_multi[1]
        Kp = res.stack.K_plus
        rho = dmfpc_scores(res.eigsys, res.stack, Kp)
        multi = reconstruct_multivariate(res.eigsys, rho, [GRID, GRID])
        for name, out in zip(NAMES, multi):
            uni = res.univariate[name]
            ref = uni.eigenfunctions() @ uni.scores.xi.T
            np.testing.assert_allclose(out.curves, ref, atol=1e-8 * np.max(np.abs(ref)))

    def test_mean_included(self, clean_multi):
        res = clean_multi[1]
        base = reconstruct_multivariate(res.eigsys, res.rho, res.grids())
        fitted = res.fitted_derivatives()
        for name, b in zip(NAMES, base):
            np.testing.assert_allclose(fitted[name], b.curves + res.univariate[name].mean_derivative[:, None])


def test_bases_per_component(basis38, replicates):
    rep = replicates("DenseClean")
    res = run_dmfpca({k: FunctionalSample(GRID, rep.Y[k]) for k in NAMES}, {k: basis38 for k in NAMES})
    assert res.names == NAMES
    direct = run_dfpca(FunctionalSample(GRID, rep.Y["X2"]), basis38)
    np.testing.assert_array_equal(res.univariate["X2"].scores.xi, direct.scores.xi)
