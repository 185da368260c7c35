"""Tests for symmetric eigendecomposition, matrix roots and trapezoid quadrature."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from facederiv.errors import GridMismatchError, NumericError, SingularMatrixError
from facederiv.numerics import (
    clamp_psd,
    gram_inv_sqrt,
    grid_quadrature,
    psd_factor,
    sym_eigen,
    sym_inv_sqrt,
    sym_sqrt,
    trapezoid_weights,
)
from facederiv.splinebasis import difference_matrix, eval_basis, gram_matrix, make_basis, penalty_matrix


def random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


class TestSymEigen:
    def test_identity(self):
        np.testing.assert_array_equal(sym_eigen(np.eye(3)).values, [1, 1, 1])

    def test_diagonal(self):
        eig = sym_eigen(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_array_equal(eig.values, [3, 2, 1])
        np.testing.assert_array_equal(np.abs(eig.vectors), np.eye(3)[:, [0, 2, 1]])

    def test_reconstruction(self, rng):
        A = rng.normal(size=(8, 8))
        M = A + A.T
        eig = sym_eigen(M)
        assert np.linalg.norm(eig.reconstruct() - M) / np.linalg.norm(M) < 1e-10
        assert np.max(np.abs(eig.vectors.T @ eig.vectors - np.eye(8))) < 1e-10
        assert np.all(np.diff(eig.values) <= 0)

    def test_sign_convention(self, rng):
        A = rng.normal(size=(6, 6))
        eig = sym_eigen(A + A.T)
        pivot = np.argmax(np.abs(eig.vectors), axis=0)
        assert np.all(eig.vectors[pivot, np.arange(6)] > 0)
        again = sym_eigen(A + A.T)
        np.testing.assert_array_equal(eig.vectors, again.vectors)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            sym_eigen([[1.0, np.nan], [np.nan, 1.0]])

    @given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)))
    def test_reconstruction_property(self, A):
        M = A + A.T
        eig = sym_eigen(M)
        assert np.linalg.norm(eig.reconstruct() - M) <= 1e-9 * max(1.0, np.linalg.norm(M))


class TestRoots:
    def test_inv_sqrt_diag(self):
        np.testing.assert_allclose(sym_inv_sqrt(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]), atol=1e-15)
        np.testing.assert_allclose(sym_inv_sqrt(np.eye(3)), np.eye(3), atol=1e-15)

    def test_inv_sqrt_identity(self, rng):
        M = random_spd(rng, 10)
        R = sym_inv_sqrt(M)
        assert np.max(np.abs(R @ M @ R - np.eye(10))) < 1e-9

    def test_inv_sqrt_singular(self):
        with pytest.raises(SingularMatrixError, match="eigenvalue"):
            sym_inv_sqrt(np.diag([1.0, 1e-12]))

    def test_sqrt(self):
        np.testing.assert_allclose(sym_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)
        np.testing.assert_array_equal(sym_sqrt(np.zeros((3, 3))), np.zeros((3, 3)))

    def test_sqrt_of_gram(self):
        G = gram_matrix(make_basis(0, 1, 10, 3), 0)
        R = sym_sqrt(G)
        assert np.max(np.abs(R @ R - G)) < 1e-10

    def test_roots_compose(self, rng):
        M = random_spd(rng, 7)
        assert np.max(np.abs(sym_inv_sqrt(M) @ sym_sqrt(M) - np.eye(7))) < 1e-8


class TestClamp:
    def test_tiny_negative(self):
        np.testing.assert_array_equal(clamp_psd(np.array([2.0, 1.0, -1e-14])), [2.0, 1.0, 0.0])

    def test_clearly_negative(self):
        with pytest.raises(NumericError):
            clamp_psd(np.array([1.0, -0.1]))


class TestQuadrature:
    grid = np.linspace(0, 1, 101)

    def test_constant(self):
        assert grid_quadrature(np.ones(101), self.grid) == pytest.approx(1.0, abs=1e-14)

    def test_linear(self):
        assert grid_quadrature(self.grid, self.grid) == pytest.approx(0.5, abs=1e-14)

    def test_square(self):
        # trapezoid error h^2/12 * (f'(1) - f'(0)) = 1e-4/6
        assert grid_quadrature(self.grid**2, self.grid) == pytest.approx(0.33335, abs=2e-5)

    def test_columns(self):
        V = np.column_stack([np.ones(101), self.grid])
        np.testing.assert_allclose(grid_quadrature(V, self.grid), [1.0, 0.5])

    def test_length_mismatch(self):
        with pytest.raises(GridMismatchError):
            grid_quadrature(np.ones(5), self.grid)

    def test_weights_need_increasing_grid(self):
        with pytest.raises(GridMismatchError):
            trapezoid_weights([0.0, 0.5, 0.5, 1.0])


class TestGramInvSqrt:
    def test_whitens(self, rng):
        B = rng.normal(size=(30, 6))
        R = gram_inv_sqrt(B)
        np.testing.assert_allclose(R, R.T, atol=0)
        np.testing.assert_allclose(R @ B.T @ B @ R, np.eye(6), atol=1e-12)
        np.testing.assert_allclose(R, sym_inv_sqrt(B.T @ B), atol=1e-10)

    def test_rank_deficient(self):
        with pytest.raises(SingularMatrixError):
            gram_inv_sqrt(np.ones((5, 2)))
        with pytest.raises(SingularMatrixError):
            gram_inv_sqrt(np.ones((1, 2)))

    def test_ill_conditioned_design(self):
        # a crowded grid makes B^T B badly conditioned; the SVD route stays accurate
        grid = np.concatenate([np.linspace(0, 1e-3, 20), np.linspace(0.01, 1, 20)])
        B = eval_basis(make_basis(0, 1, 15, 3), grid)
        R = gram_inv_sqrt(B)
        np.testing.assert_allclose(R @ B.T @ B @ R, np.eye(15), atol=1e-9)


class TestPsdFactor:
    @pytest.mark.parametrize("l", [1, 2, 3])
    def test_difference_penalty(self, l):
        P = penalty_matrix(l, 12)
        F = psd_factor(P)
        assert F.shape == (12 - l, 12)
        np.testing.assert_allclose(F.T @ F, P, atol=1e-12)
        # null space of the difference operator is kept exactly
        D = difference_matrix(l, 12).astype(float)
        null = np.linalg.svd(D)[2][-l:]
        assert np.max(np.abs(F @ null.T)) < 1e-12

    def test_zero(self):
        assert psd_factor(np.zeros((3, 3))).shape == (0, 3)

    def test_indefinite(self):
        with pytest.raises(NumericError):
            psd_factor(np.diag([1.0, -1.0]))
