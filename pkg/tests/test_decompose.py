import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solid_angle import (
    Cone,
    Form,
    HyperplaneSpec,
    Method,
    bv_hyperplane,
    bv_mod_lower_dim,
    check_pieces,
    decomp1,
    decomp2,
    decompose_any,
    is_positive_definite,
    make_simplicial,
    max_pieces,
    measure,
    measure_dim3,
    sign_table,
)
from solid_angle.cones import associated_matrix
from solid_angle.linalg import smallest_eigenvalue_dense
from solid_angle.decompose import signs_from_delta, signing_vector
from solid_angle.errors import AllOrthogonal, DegenerateHyperplane
from solid_angle.oracles import McConfig, mc_estimate

from conftest import random_cone, signed_indicator_mismatches


class TestSignTable:
    def test_all_orthogonal(self):
        K = make_simplicial(np.eye(3))
        assert sign_table(K).delta == (0, 0, 0)

    def test_positive_run(self):
        t = signs_from_delta((1, 1, 0))
        assert t.s[:2] == (1, -1)

    def test_negative_run(self):
        t = signs_from_delta((-1, -1, 0))
        assert t.s[:2] == (-1, 1)

    def test_eps_rule(self):
        t = signs_from_delta((1, 1, -1, -1, 0))
        assert t.eps[1][0] == -1 and t.eps[0][1] == 1
        assert t.eps[2][3] == -1 and t.eps[3][2] == 1
        assert t.eps[0][2] == 1

    def test_snapping(self):
        K = make_simplicial([[1, 0, 0], [1e-12, 1, 0], [0, 0.5, 1]])
        assert sign_table(K).delta[0] == 0


class TestHyperplane:
    def test_one_side(self, rng):
        K = make_simplicial(np.eye(3) + 0.1)
        out = bv_hyperplane(K, HyperplaneSpec.from_normal([1, 1, 1]), corrections=False)
        assert len(out) == 3
        assert all(p.sign == 1 for p in out)

    def test_quadrant_split_by_diagonal(self, rng):
        K = make_simplicial(np.eye(2))
        # normal (1, -1): e1 on the positive side, e2 on the negative side
        L = HyperplaneSpec.from_normal([1, -1])
        out = bv_hyperplane(K, L)
        simp = [p for p in out if p.form is not Form.CONTAINS_LINE]
        assert sorted(p.sign for p in simp) == [-1, 1]
        plus = next(p for p in simp if p.sign == 1)
        minus = next(p for p in simp if p.sign == -1)
        assert any(np.allclose(g, [1, 0]) for g in plus.generators)
        assert any(np.allclose(g, [0, -1]) for g in minus.generators)
        checked, bad = signed_indicator_mismatches(K, out, rng.standard_normal((1000, 2)))
        assert checked > 900 and bad == 0

    def test_generator_in_hyperplane_is_skipped(self):
        K = make_simplicial([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
        out = bv_hyperplane(K, HyperplaneSpec.from_normal([1, 1, 0]), corrections=False)
        assert len(out) == 2

    def test_degenerate(self):
        # a planar cone inside R^3 sitting in the hyperplane z = 0
        flat = make_simplicial(np.eye(2)).__class__(
            V=np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), gram=np.eye(2), abs_det=1.0)
        with pytest.raises(DegenerateHyperplane):
            bv_hyperplane(flat, HyperplaneSpec.from_normal([0, 0, 1]))

    def test_normal_must_be_orthogonal(self):
        with pytest.raises(DegenerateHyperplane):
            HyperplaneSpec(basis=[[1, 0, 0]], normal=[1, 1, 0])


class TestLineIdentity:
    def test_planar_cone_is_itself(self):
        c = 1 / math.sqrt(2)
        K = make_simplicial([[1, 0], [c, c]])
        out = bv_mod_lower_dim(K)
        assert len(out) == 1 and out[0].sign == 1
        np.testing.assert_allclose(out[0].generators, K.generators, atol=1e-15)

    def test_orthogonal_input(self):
        with pytest.raises(AllOrthogonal):
            bv_mod_lower_dim(make_simplicial(np.eye(3)))

    @pytest.mark.parametrize("n", [3, 4])
    def test_signed_indicator(self, rng, n):
        for _ in range(100):
            K = random_cone(rng, n)
            out = bv_mod_lower_dim(K)
            checked, bad = signed_indicator_mismatches(K, out, rng.standard_normal((1000, n)))
            assert bad == 0 and checked > 0

    def test_pieces_keep_pivot_pair(self, rng):
        K = random_cone(rng, 4)
        W = K.V
        for p in bv_mod_lower_dim(K):
            rows = p.generators
            np.testing.assert_allclose(rows[-1], W[:, -1], atol=1e-15)
            assert any(np.allclose(rows[-2], W[:, i], atol=1e-15) for i in range(3))


class TestDecomp1:
    def test_planar_cone(self):
        K = make_simplicial([[1, 0], [-0.9, 0.2]])
        d = decomp1(K)
        assert len(d) == 1 and d.pieces[0].form is Form.PD_FULL

    def test_orthant(self):
        d = decomp1(make_simplicial(np.eye(4)))
        assert len(d) == 1 and d.pieces[0].sign == 1

    def test_three_dimensional_closed_form(self, rng):
        # about 1% of random cones give decomp1 pieces with lambda_min near 1e-8,
        # far beyond what any series budget can sum; those are skipped here
        seen = 0
        while seen < 10:
            K = random_cone(rng, 3)
            if is_positive_definite(associated_matrix(K)):
                continue
            lams = [smallest_eigenvalue_dense(associated_matrix(p.cone))
                    for p in decomp1(K).pieces if p.form is Form.PD_FULL]
            if min(lams) < 1e-4:
                continue
            seen += 1
            r = measure(K.as_cone(), method="decomp1", tol=1e-10)
            assert r.value == pytest.approx(measure_dim3(K), abs=1e-6)

    def test_pieces_are_pd_or_contain_lines(self, rng):
        for _ in range(20):
            d = decomp1(random_cone(rng, 4))
            for p in d.pieces:
                assert p.form in (Form.PD_FULL, Form.CONTAINS_LINE)


class TestDecomp2:
    def test_orthant(self):
        d = decomp2(make_simplicial(np.eye(3)), tridiagonal=True)
        assert len(d) == 1 and d.pieces[0].sign == 1

    def test_three_dimensional_piece_bound(self, rng):
        for _ in range(50):
            assert len(decomp2(random_cone(rng, 3))) <= 2

    def test_four_dimensional_against_monte_carlo(self, rng):
        for seed in range(3):
            K = random_cone(rng, 4)
            r = measure(K.as_cone(), method="decomp2", tol=1e-9)
            p, se = mc_estimate(K, McConfig(samples=10**6, seed=seed))
            assert abs(r.value - p) <= 3 * se

    @pytest.mark.parametrize("tridiagonal", [False, True])
    def test_piece_count_bound(self, rng, tridiagonal):
        for n in (3, 4, 5):
            for _ in range(10):
                d = decomp2(random_cone(rng, n), tridiagonal=tridiagonal)
                assert len(d) <= max_pieces(n)

    def test_signing_vector(self):
        G = np.array([[1, 0.3, 0], [0.3, 1, -0.2], [0, -0.2, 1]])
        e = signing_vector(G)
        assert e is not None
        for i in range(3):
            for j in range(3):
                if i != j:
                    assert e[i] * e[j] * G[i, j] == -abs(G[i, j])
        triangle = np.array([[1, 0.3, 0.3], [0.3, 1, 0.3], [0.3, 0.3, 1]])
        assert signing_vector(triangle) is None


class TestStructure:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 2**32 - 1),
           st.sampled_from(["decomp1", "decomp2", "decomp2-tridiag"]))
    def test_piece_properties(self, n, seed, method):
        K = random_cone(np.random.default_rng(seed), n)
        d = decomp1(K) if method == "decomp1" else decomp2(K, tridiagonal=method.endswith("tridiag"))
        assert all(check_pieces(K, d).values())

    def test_tridiagonal_grams(self, rng):
        for _ in range(30):
            d = decomp2(random_cone(rng, 5), tridiagonal=True)
            for p in d.pieces:
                G = p.cone.gram
                far = np.abs(np.triu(G, 2))
                assert np.max(far) <= 1e-9

    def test_basis_independence(self, rng):
        for _ in range(5):
            K = random_cone(rng, 4)
            Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
            a = measure(K.as_cone(), tol=1e-10).value
            b = measure(Cone(K.generators @ Q.T), tol=1e-10).value
            assert abs(a - b) < 1e-8


class TestDecomposeAny:
    def test_half_plane_in_space(self):
        C = Cone([[1, 0, 0], [0, 1, 0], [-1, 0, 0]])
        assert measure(C).value == 0.0
        assert measure(C, span_relative=True).value == pytest.approx(0.5, abs=1e-12)
        d = decompose_any(C)
        assert d.lineality.shape[1] == 1

    def test_full_space(self):
        C = Cone(np.vstack([np.eye(3), -np.eye(3)]))
        assert measure(C).value == 1.0
        assert len(decompose_any(C)) == 0

    def test_half_space(self):
        C = Cone([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]])
        d = decompose_any(C)
        assert d.lineality.shape[1] == 2
        assert measure(C).value == pytest.approx(0.5, abs=1e-15)

    def test_method_names(self):
        C = Cone(np.eye(3))
        assert decompose_any(C, "decomp2-tridiag").method is Method.DECOMP2_TRIDIAG
        assert decompose_any(C, "decomp1").method is Method.DECOMP1
