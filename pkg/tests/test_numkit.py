import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from regenci import numkit
from regenci.errors import AsymmetricInput, NotPositiveDefinite, OutOfRange
from regenci.numkit import RngStream


class TestCholesky:
    def test_identity(self):
        assert np.allclose(numkit.cholesky_factor(np.eye(2)), np.eye(2))

    def test_diagonal_square_roots(self):
        out = numkit.cholesky_factor(np.diag([4.0, 9.0]))
        assert np.allclose(out, np.diag([2.0, 3.0]))

    def test_reconstruction(self):
        sigma = np.array([[4.0, 2.0], [2.0, 3.0]])
        lower = numkit.cholesky_factor(sigma)
        assert np.max(np.abs(lower @ lower.T - sigma)) < 1e-9
        assert np.all(np.diag(lower) >= 0)
        assert np.allclose(lower, np.linalg.cholesky(sigma))

    def test_asymmetric_rejected(self):
        with pytest.raises(AsymmetricInput):
            numkit.cholesky_factor(np.array([[1.0, 0.5], [0.2, 1.0]]))
        with pytest.raises(AsymmetricInput):
            numkit.cholesky_factor(np.ones((2, 3)))

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            numkit.cholesky_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_semidefinite_ok(self):
        sigma = np.zeros((3, 3))
        assert np.allclose(numkit.cholesky_factor(sigma), 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=10_000))
    def test_random_psd_reconstruction(self, dim, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((dim, dim))
        sigma = a.T @ a
        lower = numkit.cholesky_factor(sigma)
        assert np.max(np.abs(lower @ lower.T - sigma)) < 1e-9


class TestNormalQuantile:
    def test_median_is_zero(self):
        assert numkit.std_normal_quantile(0.5) == 0.0

    def test_z975(self):
        # oracle: scipy.stats.norm.ppf(0.975) = 1.959964
        assert numkit.std_normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-5)

    def test_z995(self):
        assert numkit.std_normal_quantile(0.995) == pytest.approx(2.575829, abs=1e-5)

    def test_out_of_range(self):
        for bad in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(OutOfRange):
                numkit.std_normal_quantile(bad)

    def test_monotone_and_antisymmetric(self):
        grid = np.linspace(0.01, 0.99, 33)
        vals = [numkit.std_normal_quantile(q) for q in grid]
        assert np.all(np.diff(vals) > 0)
        for q in (0.6, 0.8, 0.95):
            assert numkit.std_normal_quantile(q) == pytest.approx(
                -numkit.std_normal_quantile(1.0 - q), abs=1e-8)

    def test_cdf_quantile_round_trip(self):
        for q in np.linspace(0.001, 0.999, 25):
            x = numkit.std_normal_quantile(q)
            assert numkit.normal_cdf(x) == pytest.approx(q, abs=1e-8)

    def test_against_scipy_grid(self):
        for q in (0.025, 0.2, 0.7, 0.9995):
            assert numkit.std_normal_quantile(q) == pytest.approx(
                stats.norm.ppf(q), abs=1e-8)


class TestNoncentralChisq:
    def test_central_matches_squared_normal_quantile(self):
        z = numkit.std_normal_quantile(0.975)
        assert numkit.noncentral_chisq1_quantile(0.95, 0.0) == pytest.approx(
            z * z, abs=1e-3)
        assert numkit.noncentral_chisq1_quantile(0.95, 0.0) == pytest.approx(
            3.8415, abs=1e-3)

    def test_median_central(self):
        # oracle: scipy.stats.chi2.ppf(0.5, 1) = 0.454936
        assert numkit.noncentral_chisq1_quantile(0.5, 0.0) == pytest.approx(
            0.4549, abs=1e-3)

    def test_monotone_in_noncentrality(self):
        assert (numkit.noncentral_chisq1_quantile(0.95, 4.0)
                > numkit.noncentral_chisq1_quantile(0.95, 0.0))

    def test_against_scipy(self):
        for q, lam in [(0.9, 0.0), (0.95, 1.0), (0.95, 4.0), (0.5, 9.0), (0.99, 2.5)]:
            assert numkit.noncentral_chisq1_quantile(q, lam) == pytest.approx(
                stats.ncx2.ppf(q, 1, lam) if lam > 0 else stats.chi2.ppf(q, 1),
                rel=1e-7, abs=1e-8)

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            numkit.noncentral_chisq1_quantile(0.95, -1.0)
        with pytest.raises(OutOfRange):
            numkit.noncentral_chisq1_quantile(1.2, 0.0)


class TestRngStream:
    def test_replay_identical(self):
        a = RngStream(42, 7).uniform01(10_000)
        b = RngStream(42, 7).uniform01(10_000)
        assert np.array_equal(a, b)

    def test_distinct_ids_differ(self):
        a = RngStream(42, 7).uniform01(100)
        b = RngStream(42, 8).uniform01(100)
        assert not np.array_equal(a, b)

    def test_substream_reproducible(self):
        a = RngStream(1, 2).substream(3).standard_normal(50)
        b = RngStream(1, 2).substream(3).standard_normal(50)
        assert np.array_equal(a, b)

    def test_bernoulli_degenerate(self):
        s = RngStream(0, 0)
        assert numkit.rng_draw(s, "bernoulli", p=1.0) == 1.0
        assert numkit.rng_draw(s, "bernoulli", p=0.0) == 0.0

    def test_laplace_variance(self):
        draws = RngStream(9, 9).laplace(math.sqrt(2.0) / 2.0, 100_000)
        assert np.var(draws) == pytest.approx(1.0, abs=0.05)

    def test_draw_kinds(self):
        s = RngStream(3, 1)
        assert 0.0 <= numkit.rng_draw(s, "uniform01") < 1.0
        assert np.isfinite(numkit.rng_draw(s, "standard_normal"))
        with pytest.raises(OutOfRange):
            numkit.rng_draw(s, "laplace", scale=-1.0)
        with pytest.raises(OutOfRange):
            numkit.rng_draw(s, "nope")
