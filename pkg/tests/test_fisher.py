import numpy as np
import pytest

from conftest import all_patterns, pattern_weights
from regenci import fisher
from regenci.errors import TooLarge
from regenci.estimators import Dataset
from regenci.numkit import RngStream
from regenci.regen import RegenOutput


def _ds(z, y):
    return Dataset.for_ate(z, np.zeros((len(z), 1)), y)


def _regen_from_vectors(vectors):
    return RegenOutput(propensity_vectors=np.atleast_2d(np.asarray(vectors,
                                                                   dtype=float)))


class TestStatistics:
    def test_diff_means_basic(self):
        stat = fisher.abs_difference_in_means()
        assert stat.fn(np.array([1, 0]), np.array([3.0, 1.0])) == pytest.approx(2.0)

    def test_diff_means_degenerate_assignments_are_zero(self):
        stat = fisher.abs_difference_in_means()
        assert stat.fn(np.ones(3, dtype=int), np.arange(3.0)) == 0.0
        assert stat.fn(np.zeros(3, dtype=int), np.arange(3.0)) == 0.0

    def test_treated_sum(self):
        stat = fisher.treated_sum()
        assert stat.fn(np.array([1, 0, 1]), np.array([2.0, 5.0, 3.0])) == 5.0

    def test_custom_statistic_batch_fallback(self):
        stat = fisher.custom_statistic("max_treated",
                                       lambda z, y: float(np.max(z * y)))
        zmat = np.array([[1, 0], [0, 1]])
        out = stat.batch(zmat, np.array([2.0, 7.0]))
        assert np.allclose(out, [2.0, 7.0])


class TestExact:
    def test_degenerate_design_pvalue_one(self):
        ds = _ds([1, 1], [1.0, 2.0])
        stat = fisher.treated_sum()
        assert fisher.fisher_p_exact(ds, [1.0, 1.0], stat) == pytest.approx(1.0)

    def test_two_unit_enumeration(self):
        ds = _ds([1, 0], [1.0, 0.0])
        stat = fisher.treated_sum()
        assert fisher.fisher_p_exact(ds, [0.5, 0.5], stat) == pytest.approx(0.5)

    def test_maximal_statistic_uniform_design(self):
        ds = _ds([1, 1, 1, 1], [1.0, 1.0, 1.0, 1.0])
        stat = fisher.treated_sum()
        assert fisher.fisher_p_exact(ds, [0.5] * 4, stat) == pytest.approx(1 / 16)

    def test_constant_statistic_pvalue_one(self):
        ds = _ds([1, 0, 1], [1.0, 2.0, 3.0])
        stat = fisher.custom_statistic("const", lambda z, y: 1.0)
        assert fisher.fisher_p_exact(ds, [0.4, 0.5, 0.6], stat) == pytest.approx(1.0)

    def test_size_guard(self):
        n = 21
        ds = _ds(np.ones(n, dtype=int), np.zeros(n))
        with pytest.raises(TooLarge):
            fisher.fisher_p_exact(ds, np.full(n, 0.5), fisher.treated_sum())

    @pytest.mark.parametrize("n,seed", [(4, 0), (6, 1), (8, 2)])
    def test_validity_by_enumeration(self, n, seed):
        # under the sharp null, P(p <= alpha) <= alpha over the assignment law
        stream = RngStream(300 + seed, 0)
        y = stream.standard_normal(n)
        p = 0.2 + 0.6 * stream.uniform01(n)
        stat = fisher.abs_difference_in_means()
        patterns = all_patterns(n)
        weights = pattern_weights(patterns, p)
        stats_all = stat.batch(patterns, y)
        pvals = np.array([
            float(weights[stats_all >= t_obs].sum()) for t_obs in stats_all
        ])
        for alpha in (0.01, 0.05, 0.1, 0.25):
            assert float(weights[pvals <= alpha].sum()) <= alpha + 1e-12


class TestMonteCarlo:
    def test_constant_statistic_pvalue_one(self):
        ds = _ds([1, 0], [1.0, 2.0])
        stat = fisher.custom_statistic("const", lambda z, y: 0.0)
        out = fisher.fisher_p_value(ds, [0.5, 0.5], stat, 999, RngStream(1, 0))
        assert out == pytest.approx(1.0)

    def test_matches_enumeration(self):
        ds = _ds([1, 0], [1.0, 0.0])
        stat = fisher.treated_sum()
        mc = fisher.fisher_p_value(ds, [0.5, 0.5], stat, 100_000, RngStream(2, 0))
        assert mc == pytest.approx(0.5, abs=0.01)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_three_sigma_against_exact(self, seed):
        stream = RngStream(400 + seed, 0)
        n = 6
        y = stream.standard_normal(n)
        z = (stream.uniform01(n) < 0.5).astype(int)
        p = 0.3 + 0.4 * stream.uniform01(n)
        ds = _ds(z, y)
        stat = fisher.abs_difference_in_means()
        exact = fisher.fisher_p_exact(ds, p, stat)
        draws = 20_000
        mc = fisher.fisher_p_value(ds, p, stat, draws, RngStream(401, seed))
        assert abs(mc - exact) <= 3.0 * np.sqrt(0.25 / draws) + 1.0 / draws


class TestPropagate:
    def test_single_run_equals_plain_pvalue(self):
        ds = _ds([1, 0, 1, 0], [2.0, 1.0, 3.0, 0.0])
        p = np.array([0.4, 0.5, 0.6, 0.5])
        stat = fisher.abs_difference_in_means()
        direct = fisher.fisher_p_value(ds, p, stat, 2000, RngStream(5, 0))
        combined = fisher.fisher_propagate(ds, _regen_from_vectors([p]), stat,
                                           2000, RngStream(5, 0))
        assert combined.p_value == pytest.approx(direct)
        assert combined.per_run_p_values == (direct,)

    def test_identical_vectors_collapse(self):
        ds = _ds([1, 0, 1, 0], [2.0, 1.0, 3.0, 0.0])
        p = np.array([0.4, 0.5, 0.6, 0.5])
        stat = fisher.abs_difference_in_means()
        stacked = _regen_from_vectors([p, p, p])
        out = fisher.fisher_propagate(ds, stacked, stat, 2000, RngStream(6, 0))
        assert len(set(out.per_run_p_values)) == 1
        single = fisher.fisher_propagate(ds, _regen_from_vectors([p]), stat,
                                         2000, RngStream(6, 0))
        assert out.p_value == pytest.approx(single.p_value)

    def test_max_over_runs_structure(self):
        ds = _ds([1, 0, 1, 0], [2.0, 1.0, 3.0, 0.0])
        vectors = np.array([
            [0.3, 0.5, 0.7, 0.5],
            [0.6, 0.4, 0.5, 0.5],
            [0.5, 0.5, 0.5, 0.5],
        ])
        stat = fisher.abs_difference_in_means()
        out = fisher.fisher_propagate(ds, _regen_from_vectors(vectors), stat,
                                      3000, RngStream(7, 0))
        assert out.p_value == max(out.per_run_p_values)
        assert all(out.p_value >= pv for pv in out.per_run_p_values)

    def test_monotone_in_appended_runs(self):
        ds = _ds([1, 0, 1, 0], [2.0, 1.0, 3.0, 0.0])
        vecs = np.array([[0.3, 0.5, 0.7, 0.5], [0.6, 0.4, 0.5, 0.5]])
        stat = fisher.abs_difference_in_means()
        small = fisher.fisher_propagate(ds, _regen_from_vectors(vecs[:1]), stat,
                                        2000, RngStream(8, 0))
        big = fisher.fisher_propagate(ds, _regen_from_vectors(vecs), stat,
                                      2000, RngStream(8, 0))
        assert big.p_value >= small.p_value

    def test_shift_pvalues_peak_near_truth(self):
        stream = RngStream(9, 0)
        n = 60
        z = (stream.uniform01(n) < 0.5).astype(int)
        y = np.where(z == 1, 2.0, 0.0) + 0.3 * stream.standard_normal(n)
        ds = _ds(z, y)
        vectors = np.full((2, n), 0.5)
        grid = np.array([-1.0, 0.0, 2.0])
        pv = fisher.shift_pvalues(ds, _regen_from_vectors(vectors),
                                  fisher.abs_difference_in_means(), grid, 2000,
                                  RngStream(10, 0))
        assert pv[2] > 0.05  # the true shift is not rejected
        assert pv[0] < 0.05 and pv[1] < 0.05  # wrong shifts are rejected
