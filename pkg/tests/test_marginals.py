"""Marginal tail model: fitting, composite CDF, Laplace transform."""
import numpy as np
import pytest
from scipy.stats import genpareto

from extclust.errors import TooFewExceedancesError
from extclust.marginals import (GpdParams, MarginalModel, fit_gpd,
                                fit_marginal, from_laplace, gpd_neg_loglik,
                                gpd_quantile, gpd_survivor, to_laplace)


class TestGpdSurvivor:
    def test_closed_form(self):
        p = GpdParams(scale=1.0, shape=0.5, threshold=0.0)
        assert gpd_survivor(p, 1.0) == pytest.approx(1.5**-2, abs=1e-12)

    def test_exponential_limit(self):
        p = GpdParams(scale=1.0, shape=0.0, threshold=0.0)
        assert gpd_survivor(p, 1.0) == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_limit_continuity_near_zero_shape(self):
        near = GpdParams(scale=1.0, shape=1e-9, threshold=0.0)
        exact = GpdParams(scale=1.0, shape=0.0, threshold=0.0)
        assert gpd_survivor(near, 3.0) == pytest.approx(
            gpd_survivor(exact, 3.0), rel=1e-7)

    def test_beyond_upper_endpoint(self):
        p = GpdParams(scale=1.0, shape=-0.5, threshold=0.0)
        assert gpd_survivor(p, 3.0) == 0.0  # endpoint at 2

    def test_quantile_roundtrip(self):
        for shape in (-0.3, 0.0, 0.4):
            p = GpdParams(scale=2.0, shape=shape, threshold=1.0)
            probs = np.array([0.1, 0.5, 0.9, 0.999])
            x = gpd_quantile(p, probs)
            np.testing.assert_allclose(1.0 - gpd_survivor(p, x), probs,
                                       rtol=1e-12)


class TestFitGpd:
    def test_exponential_data_gives_unit_scale_zero_shape(self):
        rng = np.random.default_rng(42)
        draws = rng.exponential(size=40000)
        fit = fit_gpd(draws, 0.0)
        # asymptotic standard errors: sigma ~ sqrt(2/n), xi ~ sqrt(1/n)
        assert abs(fit.scale - 1.0) < 3 * np.sqrt(2.0 / draws.size)
        assert abs(fit.shape - 0.0) < 3 * np.sqrt(1.0 / draws.size)

    def test_recovers_simulated_gpd_within_three_se(self):
        # oracle: draws through the closed-form quantile function
        rng = np.random.default_rng(7)
        true = GpdParams(scale=2.0, shape=0.3, threshold=0.0)
        draws = gpd_quantile(true, rng.uniform(size=50000))
        fit = fit_gpd(draws, 0.0)
        n = draws.size
        se_scale = true.scale * np.sqrt(2.0 * (1 + true.shape) / n)
        se_shape = np.sqrt((1 + true.shape) ** 2 / n)
        assert abs(fit.scale - 2.0) < 3 * se_scale
        assert abs(fit.shape - 0.3) < 3 * se_shape

    def test_too_few_exceedances(self):
        with pytest.raises(TooFewExceedancesError):
            fit_gpd([1.0], 0.0)

    def test_mle_stationarity_by_finite_differences(self):
        rng = np.random.default_rng(3)
        true = GpdParams(scale=1.5, shape=-0.2, threshold=0.0)
        draws = gpd_quantile(true, rng.uniform(size=5000))
        fit = fit_gpd(draws, 0.0)
        x0 = np.array([np.log(fit.scale), fit.shape])
        h = 1e-6
        grad = np.zeros(2)
        for i in range(2):
            hi, lo = x0.copy(), x0.copy()
            hi[i] += h
            lo[i] -= h
            grad[i] = (gpd_neg_loglik(hi, draws, 0.0)[0]
                       - gpd_neg_loglik(lo, draws, 0.0)[0]) / (2 * h)
        assert np.linalg.norm(grad) < 1e-6


class TestFitMarginal:
    @pytest.fixture(scope="class")
    def model(self):
        rng = np.random.default_rng(11)
        return fit_marginal(rng.exponential(size=8000), 0.95)

    def test_branches_glue_continuously_at_threshold(self, model):
        u = model.threshold
        assert model.cdf(u) == pytest.approx(model.empirical_cdf(u), abs=1e-12)
        eps = 1e-9
        assert model.cdf(u + eps) >= model.cdf(u - eps) - 1e-9

    def test_tail_branch_matches_definition(self, model):
        x = model.threshold + 1.3
        expected = 1.0 - model.tail_fraction * gpd_survivor(model.gpd, x)
        assert model.cdf(x) == pytest.approx(expected, abs=1e-15)

    def test_tail_fraction_near_sample_fraction(self, model):
        frac = np.mean(model.sorted_values > model.threshold)
        assert model.tail_fraction == pytest.approx(frac, abs=2e-3)

    def test_exponential_q99_estimate(self, model):
        # oracle: the true exponential CDF
        q99 = -np.log(0.01)
        assert abs(model.cdf(q99) - 0.99) < 0.005

    def test_cdf_monotone(self, model):
        grid = np.linspace(model.sorted_values[0], model.sorted_values[-1] + 3,
                           4000)
        vals = model.cdf(grid)
        assert np.all(np.diff(vals) >= -1e-14)

    def test_rejects_short_series_and_bad_quantile(self):
        with pytest.raises(ValueError):
            fit_marginal(np.arange(50, dtype=float), 0.95)
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            fit_marginal(rng.exponential(size=500), 0.4)


class TestLaplaceTransform:
    @pytest.fixture(scope="class")
    def model(self):
        rng = np.random.default_rng(23)
        return fit_marginal(rng.gumbel(size=5000), 0.95)

    def test_branch_formulas(self, model):
        x50 = model.quantile(0.5)
        x75 = model.quantile(0.75)
        x25 = model.quantile(0.25)
        assert to_laplace(model, x50) == pytest.approx(0.0, abs=1e-9)
        assert to_laplace(model, x75) == pytest.approx(-np.log(0.5), abs=1e-9)
        assert to_laplace(model, x25) == pytest.approx(np.log(0.5), abs=1e-9)

    def test_monotone(self, model):
        grid = np.linspace(model.sorted_values[1], model.sorted_values[-1],
                           2000)
        y = to_laplace(model, grid)
        assert np.all(np.diff(y) >= 0)

    def test_roundtrip_gpd_branch(self, model):
        x = model.threshold + np.array([0.1, 0.5, 1.0, 2.5])
        back = from_laplace(model, to_laplace(model, x))
        np.testing.assert_allclose(back, x, rtol=1e-9)

    def test_roundtrip_empirical_branch(self, model):
        x = np.quantile(model.sorted_values, [0.2, 0.5, 0.8])
        back = from_laplace(model, to_laplace(model, x))
        np.testing.assert_allclose(back, x, atol=1e-6)
