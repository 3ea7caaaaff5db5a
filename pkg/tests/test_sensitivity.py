import numpy as np
import pytest

from regenci import glm, sensitivity as sens
from regenci.errors import NotRejectedAtGammaOne, TooLarge
from regenci.estimators import Dataset, ipw_estimate, wald_interval
from regenci.numkit import RngStream
from regenci.sensitivity import SensitivityConfig


def _toy(seed=1, n=8, effect=1.5):
    stream = RngStream(seed, 55)
    z = (stream.uniform01(n) < 0.5).astype(int)
    if z.min() == z.max():
        z[0] = 1 - z[0]
    y = effect * z + stream.standard_normal(n)
    ds = Dataset.for_ate(z, np.zeros((n, 1)), y)
    g = 0.5 * stream.standard_normal(n)
    return ds, g


class TestShiftedEstimate:
    def test_unit_tilt_recovers_ipw(self):
        ds, g = _toy(seed=2, n=30)
        p = glm._sigmoid(g)
        tilted = sens.shifted_estimate(ds, g, np.ones(30))
        plain = ipw_estimate(ds, p)
        assert tilted.point == pytest.approx(plain.point, abs=1e-12)
        assert tilted.variance == pytest.approx(plain.variance, abs=1e-12)

    def test_single_treated_unit_hand_value(self):
        ds = Dataset.for_ate([1], np.zeros((1, 1)), [1.0])
        out = sens.shifted_estimate(ds, np.zeros(1), np.array([2.0]))
        assert out.per_unit[0] == pytest.approx(3.0)

    def test_inverse_propensity_identity(self):
        g = np.linspace(-2, 2, 9)
        p = glm._sigmoid(g)
        assert np.allclose(1.0 / p, 1.0 + np.exp(-g))
        assert np.allclose(1.0 / (1.0 - p), 1.0 + np.exp(g))


class TestSensitivityInterval:
    def test_gamma_one_equals_wald(self):
        ds, g = _toy(seed=3, n=40)
        cfg = SensitivityConfig(gamma=1.0, alpha=0.05)
        interval = sens.sensitivity_interval(ds, g, cfg)
        wald = wald_interval(sens.shifted_estimate(ds, g, np.ones(40)), 0.05)
        assert interval[0] == pytest.approx(wald[0], abs=1e-12)
        assert interval[1] == pytest.approx(wald[1], abs=1e-12)

    def test_nesting_in_gamma(self):
        for seed in range(20):
            ds, g = _toy(seed=600 + seed, n=10)
            cfg1 = SensitivityConfig(gamma=1.3, alpha=0.05)
            cfg2 = SensitivityConfig(gamma=2.0, alpha=0.05)
            i1 = sens.sensitivity_interval(ds, g, cfg1)
            i2 = sens.sensitivity_interval(ds, g, cfg2)
            assert i2[0] <= i1[0] + 1e-6
            assert i2[1] >= i1[1] - 1e-6

    def test_contains_wald_interval(self):
        ds, g = _toy(seed=4, n=25)
        cfg = SensitivityConfig(gamma=1.5, alpha=0.05)
        interval = sens.sensitivity_interval(ds, g, cfg)
        wald = wald_interval(sens.shifted_estimate(ds, g, np.ones(25)), 0.05)
        assert interval[0] <= wald[0] and interval[1] >= wald[1]

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_matches_grid_oracle_small_n(self, seed):
        ds, g = _toy(seed=700 + seed, n=7)
        cfg = SensitivityConfig(gamma=1.6, alpha=0.1)
        fast = sens.sensitivity_interval(ds, g, cfg)
        slow = sens.grid_oracle_interval(ds, g, cfg)
        assert fast[0] == pytest.approx(slow[0], abs=1e-4)
        assert fast[1] == pytest.approx(slow[1], abs=1e-4)

    def test_oracle_size_guard(self):
        ds, g = _toy(seed=5, n=20)
        with pytest.raises(TooLarge):
            sens.grid_oracle_interval(ds, g, SensitivityConfig(gamma=1.5,
                                                               alpha=0.05))


class TestOptimizerSoundness:
    def test_projected_gradient_stationarity(self):
        ds, g = _toy(seed=6, n=15)
        cfg = SensitivityConfig(gamma=1.8, alpha=0.05)
        a, b = sens._tilt_terms(ds, g)
        zq = 1.959963984540054
        lo, hi = 1 / cfg.gamma, cfg.gamma

        def value(t):
            mean, var = sens._batch_moments(a, b, t[None, :])
            return float(mean[0] - zq * np.sqrt(var[0]))

        def grad(t):
            mean, var, d_mean, d_var = sens._moment_grads(a, b, t)
            sd = max(np.sqrt(var), 1e-15)
            return d_mean - zq * d_var / (2.0 * sd)

        t_star, _, converged = sens._pgd(value, grad, np.ones(15), lo, hi,
                                         500, 1e-10)
        assert converged
        assert np.all(t_star >= lo - 1e-12) and np.all(t_star <= hi + 1e-12)
        step = 1e-6
        projected_move = np.clip(t_star - step * grad(t_star), lo, hi) - t_star
        assert np.linalg.norm(projected_move) / step < 1e-4


class TestMembership:
    def test_point_estimate_is_member(self):
        ds, g = _toy(seed=7, n=30)
        p = glm._sigmoid(g)
        tau_hat = ipw_estimate(ds, p).point
        cfg = SensitivityConfig(gamma=1.0, alpha=0.05, tau0=tau_hat)
        member, d_stars = sens.test_tau0(ds, [g], cfg)
        assert member and d_stars[0] < 0

    def test_far_hypothesis_excluded(self):
        ds, g = _toy(seed=8, n=30)
        p = glm._sigmoid(g)
        est = ipw_estimate(ds, p)
        lo, hi = wald_interval(est, 0.05)
        far = hi + 10.0 * (hi - lo)
        cfg = SensitivityConfig(gamma=1.05, alpha=0.05, tau0=far)
        member, _ = sens.test_tau0(ds, [g], cfg)
        assert not member

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_agrees_with_grid_oracle(self, seed):
        ds, g = _toy(seed=800 + seed, n=8)
        for tau0 in (-1.0, 0.5, 2.0):
            cfg = SensitivityConfig(gamma=1.5, alpha=0.1, tau0=tau0)
            member, d_stars = sens.test_tau0(ds, [g], cfg)
            oracle_val = sens.grid_oracle_qp(ds, g, cfg)
            assert member == (oracle_val < -1e-10) or abs(oracle_val) < 1e-6
            assert d_stars[0] == pytest.approx(oracle_val, abs=1e-4)

    def test_membership_monotone_in_gamma(self):
        ds, g = _toy(seed=9, n=20, effect=2.5)
        cfg1 = SensitivityConfig(gamma=1.0, alpha=0.05, tau0=0.0)
        member1, _ = sens.test_tau0(ds, [g], cfg1)
        if not member1:
            flags = []
            for gamma in (1.2, 1.6, 2.2, 3.0, 4.0):
                cfg = SensitivityConfig(gamma=gamma, alpha=0.05, tau0=0.0)
                member, _ = sens.test_tau0(ds, [g], cfg)
                flags.append(member)
            # once inside, stays inside
            first_in = flags.index(True) if True in flags else len(flags)
            assert all(flags[first_in:])


class TestSensitivityValue:
    def test_not_rejected_at_gamma_one(self):
        ds, g = _toy(seed=10, n=30, effect=0.0)
        p = glm._sigmoid(g)
        tau_hat = ipw_estimate(ds, p).point
        with pytest.raises(NotRejectedAtGammaOne):
            sens.sensitivity_value(ds, [g], 0.05, tau_hat)

    def test_bisection_matches_grid_scan(self):
        ds, g = _toy(seed=11, n=25, effect=3.0)
        tau0 = 0.0
        gamma_star = sens.sensitivity_value(ds, [g], 0.05, tau0, tol=1e-3)
        grid = np.arange(1.0, 6.01, 0.01)
        scanned = sens.sensitivity_value(ds, [g], 0.05, tau0, gamma_grid=grid)
        assert abs(gamma_star - scanned) <= 0.01 + 1e-3

    def test_union_over_runs(self):
        ds, g = _toy(seed=12, n=30)
        g2 = g + 0.2
        cfg = SensitivityConfig(gamma=1.4, alpha=0.05)
        union = sens.sensitivity_union(ds, [g, g2], cfg)
        i1 = sens.sensitivity_interval(ds, g, cfg,
                                       RngStream(cfg.seed, 0).substream(0))
        assert union.covers_interval(*i1)
