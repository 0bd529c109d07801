import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd
from latentclass import GpParams, MeanBasis, NumericalError, build_cov, conditional_normal, mean_vector, sq_exp_corr
from latentclass.core_gp import factorize


def block_inverse_conditional(mu, S, obs, vals, tgt):
    """Conditional via the precision matrix of the (target, observed) block."""
    idx = np.concatenate([tgt, obs])
    P = np.linalg.inv(S[np.ix_(idx, idx)])
    k = len(tgt)
    Ptt, Pto = P[:k, :k], P[:k, k:]
    cov = np.linalg.inv(Ptt)
    mean = mu[tgt] - cov @ Pto @ (vals - mu[obs])
    return mean, cov


class TestSqExpCorr:
    def test_zero_distance(self):
        assert sq_exp_corr([0.3, -1.2], [0.3, -1.2], 1.0) == 1.0

    def test_unit_gap(self):
        assert sq_exp_corr([0.0], [1.0], 2.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
        assert sq_exp_corr([0.0], [1.0], 2.0) == pytest.approx(0.606531, abs=1e-6)

    def test_three_four_five(self):
        assert sq_exp_corr([0, 0], [3, 4], 25.0) == pytest.approx(0.367879, abs=1e-6)

    def test_errors(self):
        with pytest.raises(ValueError):
            sq_exp_corr([0.0], [1.0, 2.0], 1.0)
        with pytest.raises(ValueError):
            sq_exp_corr([0.0], [1.0], 0.0)
        with pytest.raises(ValueError):
            sq_exp_corr([0.0], [1.0], -1.0)

    @given(
        st.lists(st.floats(-5, 5), min_size=2, max_size=2),
        st.lists(st.floats(-5, 5), min_size=2, max_size=2),
        st.floats(0.01, 10),
    )
    def test_symmetric_and_bounded(self, a, b, delta):
        c = sq_exp_corr(a, b, delta)
        assert c == sq_exp_corr(b, a, delta)
        assert 0 <= c <= 1

    @given(st.floats(0.0, 3.0), st.floats(1e-3, 3.0), st.floats(0.1, 5.0))
    def test_strictly_decreasing(self, r, dr, delta):
        assert sq_exp_corr([0.0], [r + dr], delta) < sq_exp_corr([0.0], [r], delta) or (
            sq_exp_corr([0.0], [r], delta) == 0.0
        )

    def test_one_iff_equal(self):
        assert sq_exp_corr([1.0], [1.0 + 1e-3], 1.0) < 1.0


class TestMeanVector:
    def test_constant(self):
        X = np.random.default_rng(0).random((5, 3))
        np.testing.assert_array_equal(mean_vector(X, MeanBasis.CONSTANT, [2.5]), np.full(5, 2.5))

    def test_linear_1d(self):
        assert mean_vector([[2.0]], MeanBasis.LINEAR, [1.5, -0.5])[0] == 1.5 + 2 * -0.5

    def test_linear_2d(self):
        assert mean_vector([[1.0, 1.0]], MeanBasis.LINEAR, [1, 2, 3])[0] == 6.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mean_vector([[1.0, 1.0]], MeanBasis.LINEAR, [1, 2])
        with pytest.raises(ValueError):
            mean_vector([[1.0]], MeanBasis.CONSTANT, [1, 2])


class TestGpParams:
    def test_invariants(self):
        with pytest.raises(ValueError):
            GpParams([0.0], 0.0, 1.0)
        with pytest.raises(ValueError):
            GpParams([0.0], 1.0, -1.0)

    def test_hashable(self):
        assert hash(GpParams([1.0, 2.0], 1.0, 0.5)) == hash(GpParams([1.0, 2.0], 1.0, 0.5))
        assert GpParams([1.0], 1.0, 0.5) != GpParams([1.0], 1.0, 0.6)


class TestBuildCov:
    def test_single_point(self):
        cov = build_cov([[0.4]], GpParams([0.0], 4.0, 1.0), jitter=0.0)
        np.testing.assert_array_equal(cov.entries, [[4.0]])

    def test_duplicate_points(self):
        cov = build_cov([[0.2], [0.2]], GpParams([0.0], 3.0, 1.0), jitter=1e-8)
        assert cov.entries[0, 1] == 3.0
        assert cov.entries[0, 0] == 3.0 + 1e-8
        assert cov.jitter == 1e-8

    def test_elementwise_oracle(self):
        X = [[0.1], [0.45], [0.9]]
        p = GpParams([0.0], 1.7, 0.3)
        cov = build_cov(X, p, jitter=0.0)
        for i in range(3):
            for j in range(3):
                assert cov.entries[i, j] == pytest.approx(1.7 * sq_exp_corr(X[i], X[j], 0.3), abs=1e-14)

    def test_jitter_escalates(self):
        # Nearly duplicated points make K singular at zero jitter.
        X = np.linspace(0, 1e-9, 6).reshape(-1, 1)
        cov = build_cov(X, GpParams([0.0], 1.0, 1.0))
        assert 1e-8 <= cov.jitter <= 1e-4
        np.testing.assert_allclose(cov.chol @ cov.chol.T, cov.entries, atol=1e-12)

    def test_failure_reports_jitter(self):
        K = -np.eye(3)
        with pytest.raises(NumericalError, match="jitter"):
            factorize(K, 1.0)

    @pytest.mark.parametrize("n", [2, 20, 200])
    def test_symmetric_and_factorizable(self, n):
        rng = np.random.default_rng(n)
        X = rng.random((n, 2))
        cov = build_cov(X, GpParams([0.0], 1.3, 0.5))
        assert np.max(np.abs(cov.entries - cov.entries.T)) <= 1e-12 * np.max(np.abs(cov.entries))
        assert np.all(np.isfinite(cov.chol))


class TestConditionalNormal:
    def test_independent(self):
        m, c = conditional_normal([1.0, -2.0], np.diag([2.0, 3.0]), [0], [5.0], [1])
        assert m[0] == -2.0 and c[0, 0] == 3.0

    def test_bivariate(self):
        m, c = conditional_normal([0.0, 0.0], [[1, 0.5], [0.5, 1]], [0], [1.0], [1])
        assert m[0] == pytest.approx(0.5, abs=1e-15)
        assert c[0, 0] == pytest.approx(0.75, abs=1e-15)

    def test_four_dim_oracle(self):
        rng = np.random.default_rng(4)
        S = random_spd(rng, 4)
        mu = rng.standard_normal(4)
        obs, tgt = np.array([0, 2]), np.array([1, 3])
        vals = rng.standard_normal(2)
        m, c = conditional_normal(mu, S, obs, vals, tgt)
        mo, co = block_inverse_conditional(mu, S, obs, vals, tgt)
        np.testing.assert_allclose(m, mo, atol=1e-10)
        np.testing.assert_allclose(c, co, atol=1e-10)

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            conditional_normal([0, 0], np.eye(2), [0], [1.0], [0])

    def test_singular_observed_block(self):
        S = np.ones((3, 3))
        with pytest.raises(NumericalError):
            conditional_normal(np.zeros(3), S, [0, 1], [0.0, 0.0], [2])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 6), st.integers(0, 10_000))
    def test_sequential_equals_joint(self, n, seed):
        rng = np.random.default_rng(seed)
        S = random_spd(rng, n)
        mu = rng.standard_normal(n)
        y = rng.standard_normal(n - 1)
        obs = np.arange(n - 1)
        m_all, c_all = conditional_normal(mu, S, obs, y, [n - 1])
        # one coordinate at a time: condition everything remaining on the next value
        cur_mu, cur_S, remaining = mu.copy(), S.copy(), list(range(n))
        for k in range(n - 1):
            rest = [r for r in remaining if r != k]
            pos = {r: i for i, r in enumerate(remaining)}
            m, c = conditional_normal(cur_mu, cur_S, [pos[k]], [y[k]], [pos[r] for r in rest])
            cur_mu, cur_S, remaining = m, c, rest
        np.testing.assert_allclose(cur_mu, m_all, atol=1e-8)
        np.testing.assert_allclose(cur_S, c_all, atol=1e-8)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 10_000))
    def test_variance_never_increases(self, n, seed):
        rng = np.random.default_rng(seed)
        S = random_spd(rng, n)
        _, c = conditional_normal(np.zeros(n), S, np.arange(1, n), np.zeros(n - 1), [0])
        assert c[0, 0] <= S[0, 0] + 1e-12
