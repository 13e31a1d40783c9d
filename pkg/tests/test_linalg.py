import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from solid_angle.errors import AsymmetricMatrix, DimensionMismatch
from solid_angle.linalg import (
    SymTridiag,
    determinant,
    gram,
    is_positive_definite,
    is_tridiagonal,
    smallest_eigenvalue_dense,
    sturm_count,
    tridiag_lambda_min,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


class TestGram:
    def test_identity(self):
        np.testing.assert_array_equal(gram(np.eye(3)), np.eye(3))

    def test_orthonormal_columns_in_r3(self):
        V = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_array_equal(gram(V), np.eye(2))

    def test_diagonal_direction(self):
        V = np.column_stack([[1.0, 0.0], [1 / math.sqrt(2), 1 / math.sqrt(2)]])
        c = 1 / math.sqrt(2)
        np.testing.assert_allclose(gram(V), [[1, c], [c, 1]], atol=1e-15)

    def test_more_columns_than_rows(self):
        with pytest.raises(DimensionMismatch):
            gram(np.ones((1, 2)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6).flatmap(
        lambda r: arrays(np.float64, st.tuples(st.just(r), st.integers(1, r)), elements=finite)))
    def test_symmetric_and_psd(self, V):
        G = gram(V)
        np.testing.assert_array_equal(G, G.T)
        scale = max(1.0, float(np.max(np.abs(G))))
        assert np.linalg.eigvalsh(G)[0] >= -1e-9 * scale


class TestDeterminant:
    def test_identity(self):
        assert determinant(np.eye(4)) == 1.0

    def test_permutation(self):
        assert determinant([[0, 1], [1, 0]]) == pytest.approx(-1.0, abs=1e-12)

    def test_equal_columns(self):
        M = np.array([[1.0, 1.0, 2.0], [3.0, 3.0, 1.0], [0.5, 0.5, 4.0]])
        assert abs(determinant(M)) <= 1e-12

    def test_non_square(self):
        with pytest.raises(DimensionMismatch):
            determinant(np.ones((2, 3)))


class TestPositiveDefinite:
    def test_identity(self):
        assert is_positive_definite(np.eye(5))

    def test_singular_limit(self):
        assert not is_positive_definite([[1, -1], [-1, 1]])

    def test_half_coupling(self):
        assert is_positive_definite([[1, -0.5], [-0.5, 1]])

    def test_rejects_asymmetric(self):
        with pytest.raises(AsymmetricMatrix):
            is_positive_definite([[1, 0.5], [0.0, 1]])

    def test_agrees_with_smallest_eigenvalue(self, rng):
        for _ in range(1000):
            n = int(rng.integers(1, 6))
            A = rng.uniform(-1, 1, (n, n))
            M = (A + A.T) / 2 + np.eye(n) * rng.uniform(0, 1.5)
            lam = smallest_eigenvalue_dense(M)
            if abs(lam - 1e-10) < 1e-8:
                continue
            assert is_positive_definite(M) == (lam > 1e-10)


class TestLambdaMin:
    def test_zero_couplings(self):
        assert tridiag_lambda_min(SymTridiag.unit([0.0, 0.0, 0.0])) == pytest.approx(1.0, abs=1e-12)

    def test_two_by_two(self):
        assert tridiag_lambda_min(SymTridiag.unit([0.5])) == pytest.approx(0.5, abs=1e-12)

    def test_three_by_three(self):
        expected = 1 - 0.5 * math.sqrt(2)
        T = SymTridiag.unit([0.5, 0.5])
        assert tridiag_lambda_min(T) == pytest.approx(expected, abs=1e-12)
        assert np.linalg.eigvalsh(T.dense())[0] == pytest.approx(expected, abs=1e-12)

    def test_dense_examples(self):
        assert smallest_eigenvalue_dense(np.eye(3)) == pytest.approx(1.0, abs=1e-12)
        assert smallest_eigenvalue_dense([[1, -0.5], [-0.5, 1]]) == pytest.approx(0.5, abs=1e-12)

    def test_dense_matches_tridiagonal(self, rng):
        for _ in range(50):
            beta = rng.uniform(-0.6, 0.6, 3)
            T = SymTridiag.unit(beta)
            assert smallest_eigenvalue_dense(T.dense()) == pytest.approx(tridiag_lambda_min(T), abs=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=7))
    def test_sturm_bracket(self, beta):
        T = SymTridiag.unit(beta)
        r = tridiag_lambda_min(T)
        assert sturm_count(T, r - 1e-10) == 0
        assert sturm_count(T, r + 1e-10) >= 1

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=7))
    def test_strictly_inside_unit_interval(self, beta):
        T = SymTridiag.unit(beta)
        if np.linalg.eigvalsh(T.dense())[0] <= 1e-9:
            return
        lam = tridiag_lambda_min(T)
        if any(abs(b) > 1e-6 for b in beta):
            assert 0.0 < lam < 1.0
        else:
            assert lam == pytest.approx(1.0, abs=1e-6)


class TestTridiagonalTest:
    def test_detects_far_entries(self):
        G = np.eye(4)
        G[0, 2] = G[2, 0] = 1e-6
        assert not is_tridiagonal(G)
        G[0, 2] = G[2, 0] = 1e-12
        assert is_tridiagonal(G)
