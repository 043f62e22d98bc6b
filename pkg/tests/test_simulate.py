"""Generators and oracles: conditional-model sampler, AR(1), orthant truth."""
import numpy as np
import pytest
from scipy.stats import kstest, multivariate_normal, norm

from extclust.simulate import (Ar1Spec, ExponentialMargin, GaussianMargin,
                               HtSimSpec, MixtureComponent,
                               ar1_exact_conditional_evaluator,
                               gaussian_residual_sd, ht_truth_gaussian,
                               sim_ar1, sim_ht, true_theta_ar1)

GAUSS = MixtureComponent(1.0, 0.0, 1.0, "gaussian")


class TestSimHt:
    def test_reduces_to_gaussian_regression_at_beta_zero(self):
        spec = HtSimSpec(alpha=0.6, beta=0.0, u=3.0, residual_mix=(GAUSS,),
                         n=200000)
        x, y = sim_ht(spec, seed=0)
        z = y - 0.6 * x
        assert abs(z.mean()) < 4 / np.sqrt(spec.n)
        assert abs(z.std() - 1.0) < 4 / np.sqrt(2 * spec.n)
        assert kstest(z, "norm").statistic < 0.01

    def test_residual_mean_converges_to_mixture_mean(self):
        mix = (MixtureComponent(0.3, -2.0, 0.5, "laplace"),
               MixtureComponent(0.7, 1.0, 0.5, "gaussian"))
        spec = HtSimSpec(alpha=0.5, beta=0.4, u=3.0, residual_mix=mix,
                         n=200000)
        x, y = sim_ht(spec, seed=1)
        z = (y - 0.5 * x) / x**0.4
        expected = 0.3 * -2.0 + 0.7 * 1.0
        assert abs(z.mean() - expected) < 0.02

    def test_bimodal_mixture_splits_into_two_clusters_at_large_x(self):
        mix = (MixtureComponent(0.5, -1.2, 0.3, "laplace"),
               MixtureComponent(0.5, 1.2, 0.3, "laplace"))
        spec = HtSimSpec(alpha=0.7, beta=0.3, u=3.0, residual_mix=mix, n=5000)
        x, y = sim_ht(spec, seed=2)
        big = x > np.quantile(x, 0.8)
        z = (y[big] - 0.7 * x[big]) / x[big] ** 0.3
        # clear bimodal gap around zero
        assert np.mean(np.abs(z) < 0.4) < 0.1
        assert 0.3 < np.mean(z > 0) < 0.7

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            HtSimSpec(alpha=0.5, beta=0.5, u=3.0,
                      residual_mix=(MixtureComponent(0.9, 0, 1),), n=10)


class TestSimAr1:
    def test_zero_rho_is_iid(self):
        series = sim_ar1(Ar1Spec(rho=0.0, n=100000, margins="gaussian"),
                         seed=3)
        x = series.values
        lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert abs(lag1) < 4 / np.sqrt(x.size)

    def test_gaussian_autocorrelation_is_rho_to_tau(self):
        rho = 0.6
        series = sim_ar1(Ar1Spec(rho=rho, n=200000, margins="gaussian"),
                         seed=4)
        x = series.values
        for tau in (1, 2, 3):
            got = np.corrcoef(x[:-tau], x[tau:])[0, 1]
            assert got == pytest.approx(rho**tau, abs=0.01)

    def test_exponential_margins_are_unit_exponential(self):
        series = sim_ar1(Ar1Spec(rho=0.5, n=100000, margins="exponential"),
                         seed=5)
        assert kstest(series.values, "expon").statistic < 0.01

    def test_negative_rho_supported(self):
        series = sim_ar1(Ar1Spec(rho=-0.5, n=50000, margins="gaussian"),
                         seed=6)
        x = series.values
        assert np.corrcoef(x[:-1], x[1:])[0, 1] < -0.45


class TestHtTruthGaussian:
    def test_reported_values(self):
        assert ht_truth_gaussian(0.5, 1) == pytest.approx((0.25, 0.5))
        assert ht_truth_gaussian(0.5, 2) == pytest.approx((0.0625, 0.5))

    def test_zero_rho(self):
        assert ht_truth_gaussian(0.0, 1) == (0.0, 0.5)

    def test_negative_rho_sign(self):
        alpha, beta = ht_truth_gaussian(-0.5, 1)
        assert alpha == pytest.approx(-0.25)

    def test_residual_sd(self):
        assert gaussian_residual_sd(0.5, 1) == pytest.approx(
            np.sqrt(0.25 * 0.75))


class TestTrueThetaAr1:
    def test_zero_rho_factorises_exactly(self):
        out = true_theta_ar1(0.0, 0.99, 3)
        assert out.value == pytest.approx(norm.cdf(norm.ppf(0.99)) ** 3)
        assert out.se == 0.0

    def test_m1_matches_bivariate_orthant_oracle(self):
        # independent oracle: closed-form bivariate normal CDF
        rho, q = 0.5, 0.99
        x = norm.ppf(q)
        joint = multivariate_normal(mean=[0, 0],
                                    cov=[[1, rho], [rho, 1]]).cdf([x, x])
        expected = (norm.cdf(x) - joint) / (1 - norm.cdf(x))
        out = true_theta_ar1(rho, q, 1, target_se=5e-5, seed=1)
        assert out.value == pytest.approx(expected, abs=5e-4)
        assert out.se < 5e-5

    def test_theta_decreases_with_dependence(self):
        values = [true_theta_ar1(r, 0.98, 1, target_se=5e-4).value
                  for r in (0.1, 0.4, 0.7, 0.9)]
        assert np.all(np.diff(values) < 0)

    def test_reported_se_bounds_repeat_run_spread(self):
        runs = [true_theta_ar1(0.5, 0.99, 2, target_se=1e-3, seed=s)
                for s in range(8)]
        values = np.array([r.value for r in runs])
        ses = np.array([r.se for r in runs])
        spread = np.abs(values - values.mean())
        assert np.mean(spread <= 2.5 * ses) >= 0.8


class TestExactMargins:
    def test_gaussian_roundtrip_and_tail_precision(self):
        marg = GaussianMargin()
        x = np.array([-3.0, -0.5, 0.0, 0.7, 3.0, 6.0])
        np.testing.assert_allclose(marg.from_laplace(marg.to_laplace(x)), x,
                                   rtol=1e-10)
        # deep tail: survival-side formulation keeps full precision
        y = marg.to_laplace(np.array([8.0]))
        assert np.isfinite(y).all() and y[0] > 25

    def test_exponential_roundtrip(self):
        marg = ExponentialMargin()
        x = np.array([0.01, 0.3, np.log(2.0), 2.0, 15.0])
        np.testing.assert_allclose(marg.from_laplace(marg.to_laplace(x)), x,
                                   rtol=1e-12)

    def test_exponential_upper_branch_is_shift(self):
        marg = ExponentialMargin()
        assert marg.to_laplace(5.0) == pytest.approx(5.0 - np.log(2.0),
                                                     abs=1e-12)

    def test_quantile_match_between_margins(self):
        g, e = GaussianMargin(), ExponentialMargin()
        q = 0.995
        xg, xe = norm.ppf(q), -np.log1p(-q)
        assert g.to_laplace(xg) == pytest.approx(e.to_laplace(xe), rel=1e-9)


class TestExactConditionalEvaluator:
    def test_matches_direct_gaussian_conditional(self):
        rho = 0.5
        G = ar1_exact_conditional_evaluator(rho)
        y = np.array([4.0, 5.5])
        z = np.array([[0.3], [-0.8]])
        got = G(z, y)
        marg = GaussianMargin()
        for i in range(2):
            y1 = 0.25 * y[i] + np.sqrt(y[i]) * z[i, 0]
            x1 = marg.from_laplace(y1)
            x0 = marg.from_laplace(y[i])
            expected = norm.cdf((x1 - rho * x0) / np.sqrt(1 - rho**2))
            assert got[i] == pytest.approx(expected, rel=1e-12)

    def test_theta_integration_identity_smoke(self):
        # theta_model with the exact conditional law reproduces the orthant
        # truth; tight version lives in the acceptance suite
        from extclust.functionals import theta_model
        from extclust.ht import HtParams

        rho, q = 0.5, 0.99
        G = ar1_exact_conditional_evaluator(rho)
        a, b = ht_truth_gaussian(rho, 1)
        p = HtParams(alpha=np.array([a]), beta=np.array([b]))
        marg = GaussianMargin()
        est = theta_model(G, p, marg, norm.ppf(q), 1, 200000,
                          np.random.default_rng(0))
        truth = true_theta_ar1(rho, q, 1, target_se=2e-5).value
        assert est == pytest.approx(truth, abs=2e-3)
