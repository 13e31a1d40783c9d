import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solid_angle import Cone, MeasureConfig, chain_measure, make_simplicial, measure, measure_dim3
from solid_angle.measure import flip_vertex, measure_simplicial, project_vertex
from solid_angle.series import TruncationSpec, t_beta

from conftest import chain_generators, random_chain, random_cone

# Reference values from scipy's Genz integrator for the Gaussian orthant
# probability P(Y >= 0), Y ~ N(0, (V^T V)^-1), averaged over three runs at
# abseps 1e-10 (run-to-run spread below 1e-9).
GENZ = {
    "n4": ([[1, 0.2, -0.3, 0.1], [0.4, 1, 0.5, 0], [-0.2, 0.3, 1, 0.6], [0.1, -0.5, 0.2, 1]],
           0.0070848992),
    "n4_wide": ([[1, 2, 0, -1], [0, 1, -1, 3], [2, -1, 1, 0], [-1, 0, 2, 1]], 0.0875978301),
    "n5": ([[1, 0.3, 0, -0.2, 0.1], [0.2, 1, 0.4, 0, -0.3], [0, -0.1, 1, 0.5, 0.2],
            [0.3, 0, -0.4, 1, 0.1], [-0.2, 0.1, 0.3, -0.2, 1]], 0.0185240424),
}


class TestReferenceValues:
    @pytest.mark.parametrize("name", sorted(GENZ))
    def test_default_method(self, name):
        gens, expected = GENZ[name]
        assert measure(Cone(gens), tol=1e-10).value == pytest.approx(expected, abs=5e-9)

    @pytest.mark.parametrize("method", ["decomp1", "decomp2"])
    def test_other_methods(self, method):
        gens, expected = GENZ["n4"]
        assert measure(Cone(gens), method=method, tol=1e-10).value == pytest.approx(expected, abs=5e-9)

    def test_closed_form_method(self, rng):
        for _ in range(20):
            K = random_cone(rng, 3)
            a = measure(K.as_cone(), method="closed-form").value
            b = measure(K.as_cone(), tol=1e-10).value
            assert a == pytest.approx(measure_dim3(K), abs=1e-15)
            assert abs(a - b) <= 1e-9


class TestFlipIdentity:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(3, 5), st.integers(0, 2**32 - 1), st.data())
    def test_projection_minus_neighbor(self, n, seed, data):
        beta = random_chain(np.random.default_rng(seed), n, scale=0.6)
        j = data.draw(st.integers(0, n - 1))
        spec = TruncationSpec(target_tol=1e-12)
        whole = t_beta(beta, spec=spec).value
        proj = t_beta(project_vertex(beta, j), spec=spec).value
        other = t_beta(flip_vertex(beta, j), spec=spec).value
        assert whole == pytest.approx(proj - other, abs=1e-10)

    def test_projection_is_geometric(self, rng):
        beta = random_chain(rng, 5)
        V = chain_generators(beta)
        for j in range(5):
            v = V[j]
            rest = np.delete(V, j, axis=0)
            P = rest - np.outer(rest @ v, v)
            P /= np.linalg.norm(P, axis=1, keepdims=True)
            G = P @ P.T
            np.testing.assert_allclose(np.diag(G, 1), project_vertex(beta, j), atol=1e-12)
            assert np.max(np.abs(np.triu(G, 2))) < 1e-12

    def test_flip_signs(self):
        np.testing.assert_array_equal(flip_vertex(np.array([0.1, 0.2, 0.3]), 1), [-0.1, -0.2, 0.3])
        np.testing.assert_array_equal(flip_vertex(np.array([0.1, 0.2, 0.3]), 0), [-0.1, 0.2, 0.3])
        np.testing.assert_array_equal(flip_vertex(np.array([0.1, 0.2, 0.3]), 3), [0.1, 0.2, -0.3])

    def test_heavy_positive_coupling(self):
        # summing directly needs many more terms than the flipped evaluation
        beta = [-0.2, 0.09, 0.95, 0.29, -0.05]
        direct = t_beta(beta, spec=TruncationSpec(target_tol=1e-9, max_terms=10**9))
        flipped = chain_measure(beta, None, 1e-9, 10**8)
        assert flipped.value == pytest.approx(direct.value, abs=2e-9)
        assert flipped.terms_used < direct.terms_used


class TestPipeline:
    def test_simplicial_input(self, rng):
        K = random_cone(rng, 4)
        assert measure(K).value == measure(K.as_cone()).value
        assert measure_simplicial(K).value == measure(K.as_cone()).value

    def test_half_line(self):
        assert measure(Cone([[2.0]])).value == 0.5
        assert measure(Cone([[1.0], [-3.0]])).value == 1.0

    def test_not_full_dimensional(self):
        C = Cone([[1, 0, 0], [0, 1, 0]])
        assert measure(C).value == 0.0
        assert measure(C, span_relative=True).value == pytest.approx(0.25, abs=1e-15)

    def test_redundant_generators(self, rng):
        K = random_cone(rng, 3)
        inner = K.generators.sum(axis=0)
        a = measure(K.as_cone(), tol=1e-10).value
        b = measure(Cone(np.vstack([K.generators, inner])), tol=1e-10).value
        assert a == pytest.approx(b, abs=1e-9)

    def test_non_simplicial(self):
        G = np.array([[1, 1, 1], [1, -1, 1], [-1, -1, 1], [-1, 1, 1]], dtype=float)
        # the cone over a face of a cube seen from its centre: 1/6 by symmetry
        value = measure(Cone(G), tol=1e-10).value
        assert value == pytest.approx(1 / 6, abs=1e-9)
        assert value == pytest.approx(measure(Cone(G), method="closed-form").value, abs=1e-9)

    def test_monte_carlo_method(self, rng):
        K = random_cone(rng, 3)
        r = measure(K.as_cone(), method="mc", samples=200_000, seed=3)
        assert r.method == "mc" and r.abs_error_estimate > 0
        assert abs(r.value - measure_dim3(K)) <= 4 * r.abs_error_estimate

    def test_orthant_is_exact(self):
        for n in range(2, 9):
            r = measure(Cone(np.eye(n)))
            assert r.value == 0.5**n and r.abs_error_estimate == 0.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MeasureConfig(method="nope")
        with pytest.raises(ValueError):
            MeasureConfig(tol=0.0)
