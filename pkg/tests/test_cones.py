import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solid_angle import (
    BOUNDARY,
    INSIDE,
    OUTSIDE,
    Cone,
    associated_matrix,
    contains_point,
    contains_points,
    dual,
    lineality_split,
    make_simplicial,
    measure,
    triangulate,
)
from solid_angle.errors import DimensionMismatch, EmptyCone, NotFullDim, RankDeficient, ZeroVector
from solid_angle.oracles import McConfig, mc_estimate

from conftest import random_cone


def _same_rays(A: np.ndarray, B: np.ndarray, tol: float = 1e-9) -> bool:
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    B = B / np.linalg.norm(B, axis=1, keepdims=True)
    return all(np.min(np.linalg.norm(B - a, axis=1)) <= tol for a in A) and len(A) == len(B)


class TestMakeSimplicial:
    def test_scaling(self):
        K = make_simplicial([[2, 0], [0, 3]])
        np.testing.assert_array_equal(K.V, np.eye(2))
        assert K.abs_det == 1.0

    def test_orthant(self):
        K = make_simplicial(np.eye(3))
        np.testing.assert_array_equal(K.gram, np.eye(3))

    def test_parallel_generators(self):
        with pytest.raises(RankDeficient):
            make_simplicial([[1, 0], [2, 0]])

    def test_zero_generator(self):
        with pytest.raises(ZeroVector):
            make_simplicial([[1, 0], [0, 0]])

    def test_wrong_count(self):
        with pytest.raises(DimensionMismatch):
            make_simplicial([[1, 0, 0], [0, 1, 0]])

    def test_columns_are_unit(self, rng):
        K = random_cone(rng, 5)
        np.testing.assert_allclose(np.linalg.norm(K.V, axis=0), 1.0, atol=1e-12)

    def test_empty_cone(self):
        with pytest.raises(EmptyCone):
            Cone([[0.0, 0.0]])


class TestTriangulate:
    def test_simplicial_input(self):
        K = make_simplicial([[1, 0.2, 0], [0, 1, 0.3], [0.1, 0, 1]])
        out = triangulate(K.as_cone())
        assert len(out) == 1
        assert _same_rays(out[0].generators, K.generators)

    def test_half_plane_fan(self):
        out = triangulate(Cone([[1, 0], [0, 1], [-1, 0]]))
        assert len(out) == 2
        got = sorted(sorted(map(tuple, np.round(S.generators, 12))) for S in out)
        assert got == [[(-1.0, 0.0), (0.0, 1.0)], [(0.0, 1.0), (1.0, 0.0)]]

    def test_square_cone(self):
        G = np.array([[1, 1, 1], [1, -1, 1], [-1, -1, 1], [-1, 1, 1]]) / math.sqrt(3)
        C = Cone(G)
        pieces = triangulate(C)
        assert len(pieces) == 2
        total = sum(measure(S.as_cone(), tol=1e-10).value for S in pieces)
        p, se = mc_estimate(C, McConfig(samples=10**6, seed=3))
        assert abs(total - p) <= 3 * se

    def test_not_full_dimensional(self):
        with pytest.raises(NotFullDim):
            triangulate(Cone([[1, 0, 0], [0, 1, 0]]))

    def test_pieces_partition_the_cone(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(n, 2 * n + 1))
            G = rng.standard_normal((m, n))
            C = Cone(G)
            if not C.is_full_dimensional:
                continue
            pieces = triangulate(C)
            X = rng.standard_normal((1000, n))
            whole = contains_points(C, X)
            codes = np.array([contains_points(S, X) for S in pieces])
            clean = (whole != 0) & np.all(codes != 0, axis=0)
            inside = np.sum(codes == 1, axis=0)
            assert np.all(inside[clean] == (whole[clean] == 1))


class TestDual:
    def test_orthant_self_dual(self):
        K = make_simplicial(np.eye(3))
        np.testing.assert_allclose(dual(K), np.eye(3), atol=1e-15)

    def test_two_dimensional(self):
        c = 1 / math.sqrt(2)
        K = make_simplicial([[1, 0], [c, c]])
        W = dual(K)
        w1 = W[:, 0] / np.linalg.norm(W[:, 0])
        w2 = W[:, 1] / np.linalg.norm(W[:, 1])
        np.testing.assert_allclose(w1, np.array([1, -1]) / math.sqrt(2), atol=1e-12)
        np.testing.assert_allclose(w2, [0, 1], atol=1e-12)
        assert np.all(np.sum(W * K.V, axis=0) > 0)

    def test_biorthogonal(self, rng):
        K = random_cone(rng, 4)
        np.testing.assert_allclose(dual(K).T @ K.V, np.eye(4), atol=1e-9)

    def test_double_dual(self, rng):
        for _ in range(20):
            K = random_cone(rng, int(rng.integers(2, 6)))
            D = make_simplicial(dual(K).T)
            DD = make_simplicial(dual(D).T)
            assert _same_rays(DD.generators, K.generators)


class TestContainsPoint:
    orthant = make_simplicial(np.eye(3))

    def test_inside(self):
        assert contains_point(self.orthant, [1, 1, 1]) is INSIDE

    def test_outside(self):
        assert contains_point(self.orthant, [1, -1, 0], tol=1e-9) is OUTSIDE

    def test_boundary(self):
        assert contains_point(self.orthant, [1, 0, 1]) is BOUNDARY

    def test_general_cone_matches_simplicial(self, rng):
        K = random_cone(rng, 3)
        C = K.as_cone()
        X = rng.standard_normal((500, 3))
        np.testing.assert_array_equal(contains_points(K, X), contains_points(C, X))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            contains_point(self.orthant, [1, 1])


class TestLinealitySplit:
    def test_upper_half_plane(self):
        C = Cone([[1, 0], [-1, 0], [0, 1]])
        split = lineality_split(C)
        assert split.dim == 1
        assert abs(abs(split.basis[0, 0]) - 1) < 1e-12
        assert split.reduced is not None
        assert measure(C).value == pytest.approx(0.5, abs=1e-15)

    def test_pointed(self, rng):
        K = random_cone(rng, 3)
        split = lineality_split(K.as_cone())
        assert split.dim == 0
        assert split.reduced is K.as_cone() or _same_rays(split.reduced.generators, K.generators)

    def test_full_plane(self):
        C = Cone([[1, 0], [-1, 0], [0, 1], [0, -1]])
        split = lineality_split(C)
        assert split.dim == 2 and split.reduced is None
        assert measure(C).value == 1.0

    def test_basis_vectors_are_in_both_directions(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 5))
            G = rng.standard_normal((n, n))
            line = rng.standard_normal(n)
            C = Cone(np.vstack([G, line, -line]))
            split = lineality_split(C)
            assert split.dim >= 1
            for b in split.basis.T:
                assert contains_point(C, b) is not OUTSIDE
                assert contains_point(C, -b) is not OUTSIDE


class TestAssociatedMatrix:
    def test_orthant(self):
        np.testing.assert_array_equal(associated_matrix(make_simplicial(np.eye(4))), np.eye(4))

    def test_obtuse_pair(self):
        K = make_simplicial([[1, 0], [-0.8, 0.6]])
        np.testing.assert_allclose(associated_matrix(K), [[1, -0.8], [-0.8, 1]], atol=1e-15)

    def test_chain_gram(self):
        from conftest import chain_generators

        beta = [0.3, -0.5, 0.2]
        K = make_simplicial(chain_generators(beta))
        M = associated_matrix(K)
        expected = np.eye(4) - np.diag(np.abs(beta), 1) - np.diag(np.abs(beta), -1)
        np.testing.assert_allclose(M, expected, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1))
    def test_structure(self, n, seed):
        K = random_cone(np.random.default_rng(seed), n)
        M = associated_matrix(K)
        np.testing.assert_array_equal(M, M.T)
        np.testing.assert_array_equal(np.diag(M), 1.0)
        off = M[~np.eye(n, dtype=bool)]
        assert np.all((off <= 0) & (off >= -1))
