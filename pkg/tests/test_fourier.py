import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from credband.fourier import (
    Grid,
    basis_eval,
    default_grid_size,
    grid_bias_bound,
    sup_norm_on_grid,
    synthesize,
    synthesize_direct,
    synthesize_many,
)
from credband.sequence import CoefficientSequence

SQRT2 = math.sqrt(2)


def direct(theta, G):
    """Pointwise summation with basis_eval; slow but independent of the FFT path."""
    xs = np.arange(G) / G
    return np.array([sum(t * basis_eval(i + 1, x) for i, t in enumerate(theta)) for x in xs])


class TestBasis:
    def test_values(self):
        assert basis_eval(1, 0.37) == 1.0
        assert basis_eval(2, 0.0) == pytest.approx(SQRT2, abs=1e-12)
        assert basis_eval(3, 0.25) == pytest.approx(SQRT2, abs=1e-12)
        assert basis_eval(5, 0.125) == pytest.approx(SQRT2, abs=1e-12)

    @pytest.mark.parametrize("x", [-0.1, 1.0, 1.5])
    def test_domain(self, x):
        with pytest.raises(ValueError):
            basis_eval(2, x)

    def test_grid(self):
        g = Grid(8)
        np.testing.assert_array_equal(g.points, np.arange(8) / 8)
        assert np.allclose(np.diff(g.points), 1 / 8)
        with pytest.raises(ValueError):
            Grid(1)


class TestSynthesize:
    def test_constant(self):
        np.testing.assert_allclose(synthesize(CoefficientSequence.unit(1), Grid(16)), 1.0, atol=1e-15)

    def test_zero(self):
        assert np.all(synthesize(np.zeros(9), Grid(16)) == 0.0)

    def test_cos_plus_sin(self):
        g = Grid(8)
        x = g.points
        expected = SQRT2 * (np.cos(2 * np.pi * x) + np.sin(2 * np.pi * x))
        got = synthesize(np.array([0.0, 1.0, 1.0]), g)
        np.testing.assert_allclose(got, expected, atol=1e-14)
        np.testing.assert_allclose(got, direct([0.0, 1.0, 1.0], 8), atol=1e-14)

    @pytest.mark.parametrize(
        "N,G", [(1, 4), (6, 4), (7, 8), (9, 8), (40, 8), (37, 9), (100, 16), (513, 64)]
    )
    def test_matches_pointwise_oracle_with_aliasing(self, N, G):
        theta = np.random.default_rng(N * 1000 + G).standard_normal(N)
        np.testing.assert_allclose(synthesize(theta, Grid(G)), direct(theta, G), atol=1e-11)

    def test_batch_rows_independent(self):
        rng = np.random.default_rng(4)
        c = rng.standard_normal((5, 33))
        many = synthesize_many(c, Grid(32))
        for k in range(5):
            np.testing.assert_allclose(many[k], synthesize(c[k], Grid(32)), atol=1e-13)

    def test_direct_matches_basis_eval(self):
        theta = np.random.default_rng(1).standard_normal(11)
        x = np.array([0.0, 0.3, 0.71])
        ref = [sum(t * basis_eval(i + 1, xx) for i, t in enumerate(theta)) for xx in x]
        np.testing.assert_allclose(synthesize_direct(theta, x), ref, atol=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=60), st.integers(2, 64))
    def test_uniform_bound(self, c, G):
        c = np.array(c)
        assert sup_norm_on_grid(synthesize(c, Grid(G))) <= SQRT2 * np.sum(np.abs(c)) * (1 + 1e-12) + 1e-12

    def test_periodicity(self):
        theta = np.random.default_rng(2).standard_normal(21)
        at0 = synthesize_direct(theta, [0.0])[0]
        near1 = synthesize_direct(theta, [1.0 - 1e-10])[0]
        assert at0 == pytest.approx(near1, abs=1e-6)
        assert synthesize(theta, Grid(64))[0] == pytest.approx(at0, abs=1e-12)

    def test_discrete_orthonormality(self):
        # (1/G) sum_grid phi_i phi_k = delta_ik while both frequencies < G/2
        G = 64
        from credband.fourier import basis_matrix

        B = basis_matrix(63, Grid(G).points)  # frequencies up to 31 < 32
        np.testing.assert_allclose(B.T @ B / G, np.eye(63), atol=1e-12)


class TestSupNorm:
    def test_values(self):
        assert sup_norm_on_grid([0, -3, 2]) == 3.0
        assert sup_norm_on_grid(np.zeros(5)) == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            sup_norm_on_grid([])

    def test_analytic_sup(self):
        vals = synthesize(CoefficientSequence.unit(2), Grid(4096))
        assert sup_norm_on_grid(vals) == pytest.approx(SQRT2, abs=1e-5)


class TestGridBias:
    def test_halving_mesh_halves_bound(self):
        b1 = grid_bias_bound(1.0, 1e4, 4096)
        assert grid_bias_bound(1.0, 1e4, 8192) == pytest.approx(b1 / 2, rel=1e-14)

    def test_decreasing_in_alpha(self):
        b = [grid_bias_bound(a, 1e4, 4096, 2048) for a in (0.5, 1.0, 1.5, 2.0, 4.0)]
        assert all(y < x for x, y in zip(b, b[1:]))

    def test_matches_direct_summation(self):
        N = 2048
        s = math.fsum(8 * math.pi**2 * i * i / (i**3 + 1e4) for i in range(1, N + 1))
        assert grid_bias_bound(1.0, 1e4, 4096, N) == pytest.approx(math.sqrt(s) / 4096, rel=1e-12)

    def test_default_policy(self):
        n, a = 1e4, 1.0
        G = default_grid_size(a, n)
        target = 1e-3 * n ** (-a / (2 * a + 1))
        assert G >= 4096 and G & (G - 1) == 0
        assert grid_bias_bound(a, n, G) <= target
        assert G == 4096 or grid_bias_bound(a, n, G // 2) > target

    def test_cap(self):
        assert default_grid_size(1.0, 1e4, cap=16384) == 16384
        assert default_grid_size(8.0, 10.0, n_trunc=4, floor=1 << 20) == 1 << 20
