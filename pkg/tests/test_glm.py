import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from regenci import glm
from regenci.errors import DimensionMismatch, RankDeficient, Separation
from regenci.numkit import RngStream


def _random_problem(seed, n=120, p=3, link=None):
    rng = RngStream(seed, 17)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    beta = 0.5 * rng.standard_normal(p)
    link = link or glm.logistic_link()
    probs = link.psi(X @ beta)
    z = (rng.uniform01(n) < probs).astype(int)
    return X, z, beta, link


class TestFitClosedForms:
    def test_intercept_only_balanced(self):
        fit = glm.fit_glm(np.ones((10, 1)), np.array([1] * 5 + [0] * 5),
                          glm.logistic_link())
        assert fit.beta_hat[0] == pytest.approx(0.0, abs=1e-10)

    def test_intercept_only_seven_of_ten(self):
        fit = glm.fit_glm(np.ones((10, 1)), np.array([1] * 7 + [0] * 3),
                          glm.logistic_link())
        assert fit.beta_hat[0] == pytest.approx(np.log(7 / 3), abs=1e-8)

    def test_perfect_separation_raises(self):
        x = np.linspace(-1, 1, 10).reshape(-1, 1)
        z = (x.ravel() > 0).astype(int)
        with pytest.raises(Separation):
            glm.fit_glm(x, z, glm.logistic_link())

    def test_rank_deficient_design(self):
        X = np.column_stack([np.ones(20), np.ones(20)])
        z = np.array([0, 1] * 10)
        with pytest.raises(RankDeficient):
            glm.fit_glm(X, z, glm.logistic_link())

    def test_matches_sklearn(self):
        X, z, _, link = _random_problem(4, n=400)
        fit = glm.fit_glm(X, z, link)
        ref = LogisticRegression(penalty=None, fit_intercept=False, tol=1e-10,
                                 max_iter=500).fit(X, z)
        assert np.allclose(fit.beta_hat, ref.coef_.ravel(), atol=1e-5)


class TestFisherInformation:
    def test_intercept_only_logistic_at_zero(self):
        info = glm.fisher_information(np.ones((7, 1)), np.zeros(1),
                                      glm.logistic_link())
        assert np.allclose(info, [[0.25]])

    def test_zero_design_annihilates(self):
        info = glm.fisher_information(np.zeros((5, 2)), np.ones(2),
                                      glm.logistic_link())
        assert np.allclose(info, 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            glm.fisher_information(np.ones((5, 2)), np.zeros(3),
                                   glm.logistic_link())

    @pytest.mark.parametrize("link_name", ["logistic", "probit"])
    def test_matches_numerical_hessian(self, link_name):
        # oracle: central-difference Hessian of the expected average
        # log-likelihood, whose curvature is the information at every link
        link = glm.get_link(link_name)
        X, _, beta, _ = _random_problem(9, n=80, link=link)
        n = X.shape[0]
        info = glm.fisher_information(X, beta, link)
        p0 = np.clip(link.psi(X @ beta), 1e-12, 1 - 1e-12)

        def expected_avg_loglik(b):
            pb = np.clip(link.psi(X @ b), 1e-12, 1 - 1e-12)
            return float(np.sum(p0 * np.log(pb) + (1 - p0) * np.log(1 - pb))) / n

        h = 1e-4
        p = len(beta)
        hess = np.zeros((p, p))
        for i in range(p):
            for j in range(p):
                bpp = beta.copy(); bpp[i] += h; bpp[j] += h
                bpm = beta.copy(); bpm[i] += h; bpm[j] -= h
                bmp = beta.copy(); bmp[i] -= h; bmp[j] += h
                bmm = beta.copy(); bmm[i] -= h; bmm[j] -= h
                hess[i, j] = (expected_avg_loglik(bpp) - expected_avg_loglik(bpm)
                              - expected_avg_loglik(bmp) + expected_avg_loglik(bmm)
                              ) / (4 * h * h)
        assert np.allclose(info, -hess, atol=1e-5)


class TestScoreGradient:
    def test_score_matches_finite_differences(self):
        failures = 0
        for seed in range(20):
            link = glm.probit_link() if seed % 3 == 0 else glm.logistic_link()
            X, z, beta, _ = _random_problem(seed, n=60, link=link)
            analytic = glm.score_vector(X, z, beta, link)
            h = 1e-6
            numeric = np.zeros_like(beta)
            for k in range(len(beta)):
                bp = beta.copy(); bp[k] += h
                bm = beta.copy(); bm[k] -= h
                numeric[k] = (glm.log_likelihood(X, z, bp, link)
                              - glm.log_likelihood(X, z, bm, link)) / (2 * h)
            scale = max(1.0, np.max(np.abs(analytic)))
            if np.max(np.abs(analytic - numeric)) / scale > 1e-6:
                failures += 1
        assert failures == 0

    def test_score_vanishes_at_fit(self):
        X, z, _, link = _random_problem(2, n=200)
        fit = glm.fit_glm(X, z, link)
        assert np.max(np.abs(glm.score_vector(X, z, fit.beta_hat, link))) < 1e-8

    def test_information_self_consistency_at_fit(self):
        X, z, _, link = _random_problem(5, n=150)
        fit = glm.fit_glm(X, z, link)
        n = X.shape[0]
        h = 1e-5
        p = len(fit.beta_hat)
        hess = np.zeros((p, p))

        def avg_loglik(b):
            return glm.log_likelihood(X, z, b, link) / n

        for i in range(p):
            for j in range(p):
                bpp = fit.beta_hat.copy(); bpp[i] += h; bpp[j] += h
                bpm = fit.beta_hat.copy(); bpm[i] += h; bpm[j] -= h
                bmp = fit.beta_hat.copy(); bmp[i] -= h; bmp[j] += h
                bmm = fit.beta_hat.copy(); bmm[i] -= h; bmm[j] -= h
                hess[i, j] = (avg_loglik(bpp) - avg_loglik(bpm)
                              - avg_loglik(bmp) + avg_loglik(bmm)) / (4 * h * h)
        info = glm.fisher_information(X, fit.beta_hat, link)
        assert np.allclose(info, -hess, atol=1e-5)


class TestPredict:
    def test_logistic_at_zero(self):
        fit = glm.fit_glm(np.ones((10, 1)), np.array([1] * 5 + [0] * 5),
                          glm.logistic_link())
        preds = glm.predict_propensity(fit, np.ones((4, 1)))
        assert np.allclose(preds, 0.5)

    def test_probit_at_zero(self):
        link = glm.probit_link()
        assert link.psi(np.zeros(1))[0] == pytest.approx(0.5)

    def test_logistic_at_minus_one(self):
        # oracle: 1 / (1 + e)
        link = glm.logistic_link()
        assert link.psi(np.array([-1.0]))[0] == pytest.approx(0.26894, abs=1e-5)

    def test_dimension_mismatch(self):
        fit = glm.fit_glm(np.ones((10, 1)), np.array([1] * 5 + [0] * 5),
                          glm.logistic_link())
        with pytest.raises(DimensionMismatch):
            glm.predict_propensity(fit, np.ones((4, 2)))


class TestRefitIdempotence:
    def test_refit_on_simulated_labels_recovers_coefficients(self):
        # statistical check at 3 standard errors
        X, _, _, link = _random_problem(13, n=4000, p=3)
        beta_true = np.array([0.3, -0.6, 0.4])
        stream = RngStream(77, 0)
        z = (stream.uniform01(4000) < link.psi(X @ beta_true)).astype(int)
        fit = glm.fit_glm(X, z, link)
        z2 = (stream.uniform01(4000) < link.psi(X @ fit.beta_hat)).astype(int)
        refit = glm.fit_glm(X, z2, link)
        se = np.sqrt(np.diag(fit.omega_hat) / fit.n_units)
        assert np.all(np.abs(refit.beta_hat - fit.beta_hat) < 3.0 * se + 1e-9)
