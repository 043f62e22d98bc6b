"""Stepwise two-stage inference: profiling, recovery, conditional sampling."""
import numpy as np
import pytest

from extclust.ht import HtParams, LagData, forward_model
from extclust.simulate import HtSimSpec, MixtureComponent, sim_ht
from extclust.stepwise import (_profiled_nll, fit_stepwise, sample_conditional)

U = 3.0


def _pairs_from_model(alpha, beta, n, seed, mix=None):
    mix = mix or (MixtureComponent(1.0, 0.0, 1.0, "gaussian"),)
    x, y = sim_ht(HtSimSpec(alpha=alpha, beta=beta, u=U, residual_mix=mix,
                            n=n), seed=seed)
    return LagData(y0=x, lags=y[:, None], u=U)


class TestProfiledLikelihood:
    def test_profile_equals_sample_moments_at_beta_zero(self):
        rng = np.random.default_rng(1)
        y0 = U + rng.exponential(size=500)
        z = 0.7 + 1.3 * rng.standard_normal(500)
        alpha = 0.4
        yj = alpha * y0 + z  # beta = 0
        _, mu, psi = _profiled_nll(alpha, 0.0, y0, yj, np.log(y0))
        assert mu == pytest.approx(z.mean(), abs=1e-12)
        assert psi == pytest.approx(z.std(), abs=1e-12)

    def test_optimum_beats_random_feasible_restarts(self):
        d = _pairs_from_model(0.5, 0.4, 300, seed=2)
        fit = fit_stepwise(d, constraints_on=False)
        log_y0 = np.log(d.y0)
        best, _, _ = _profiled_nll(fit.params.alpha[0], fit.params.beta[0],
                                   d.y0, d.lags[:, 0], log_y0)
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b = rng.uniform(0, 1, size=2)
            nll, _, _ = _profiled_nll(a, b, d.y0, d.lags[:, 0], log_y0)
            assert nll >= best - 1e-8


class TestFitStepwise:
    def test_recovers_parameters_within_monte_carlo_error(self):
        # oracle: the exact conditional-model generator
        alphas, betas = [], []
        for seed in range(12):
            d = _pairs_from_model(0.7, 0.3, 400, seed=seed)
            fit = fit_stepwise(d)
            alphas.append(fit.params.alpha[0])
            betas.append(fit.params.beta[0])
        for estimates, truth in ((alphas, 0.7), (betas, 0.3)):
            estimates = np.array(estimates)
            se = estimates.std(ddof=1) / np.sqrt(len(estimates))
            assert abs(estimates.mean() - truth) < 3 * max(se, 1e-3)

    def test_too_few_points(self):
        d = _pairs_from_model(0.5, 0.5, 5, seed=0)
        with pytest.raises(ValueError):
            fit_stepwise(d)

    def test_residual_cloud_consistent_with_params(self):
        d = _pairs_from_model(0.6, 0.2, 200, seed=9)
        fit = fit_stepwise(d)
        rebuilt = forward_model(d.y0, fit.residual_cloud, fit.params)
        np.testing.assert_allclose(rebuilt, d.lags, rtol=1e-10)

    def test_unconstrained_fit_returns_on_boundary_style_data(self):
        # near-perfect dependence: constraints change the feasible region,
        # not the likelihood definition
        rng = np.random.default_rng(4)
        y0 = U + rng.exponential(size=200)
        lags = (y0 + 0.01 * rng.standard_normal(200))[:, None]
        d = LagData(y0=y0, lags=lags, u=U)
        fit = fit_stepwise(d, constraints_on=False)
        assert fit.params.alpha[0] > 0.9


class TestSampleConditional:
    def test_single_residual_row_is_shared(self):
        d = _pairs_from_model(0.5, 0.5, 100, seed=5)
        fit = fit_stepwise(d)
        single = fit.__class__(params=fit.params, mu=fit.mu, psi=fit.psi,
                               residual_cloud=fit.residual_cloud[:1], u=fit.u)
        sample = sample_conditional(single, x=4.0, R=50,
                                    rng=np.random.default_rng(0))
        z = (sample.lags - fit.params.alpha * sample.y0[:, None]) \
            / sample.y0[:, None] ** fit.params.beta
        np.testing.assert_allclose(z, np.broadcast_to(
            fit.residual_cloud[:1], z.shape), rtol=1e-10)

    def test_perfect_dependence_reproduces_conditioning_value(self):
        params = HtParams(alpha=np.array([1.0]), beta=np.array([0.0]))
        from extclust.stepwise import StepwiseFit

        fit = StepwiseFit(params=params, mu=np.zeros(1), psi=np.ones(1),
                          residual_cloud=np.zeros((40, 1)), u=U)
        sample = sample_conditional(fit, x=5.0, R=200,
                                    rng=np.random.default_rng(1))
        np.testing.assert_allclose(sample.lags[:, 0], sample.y0, rtol=1e-12)

    def test_lag_mean_matches_forward_model(self):
        # law of large numbers at a frozen conditioning value
        d = _pairs_from_model(0.6, 0.4, 300, seed=6)
        fit = fit_stepwise(d)
        y = 6.0
        rng = np.random.default_rng(2)
        rows = rng.integers(0, fit.residual_cloud.shape[0], size=200000)
        z = fit.residual_cloud[rows, 0]
        simulated = fit.params.alpha[0] * y + y ** fit.params.beta[0] * z
        expected = fit.params.alpha[0] * y \
            + y ** fit.params.beta[0] * fit.residual_cloud[:, 0].mean()
        se = y ** fit.params.beta[0] * fit.residual_cloud[:, 0].std() \
            / np.sqrt(200000)
        assert abs(simulated.mean() - expected) < 4 * se

    def test_joint_rows_preserve_cross_lag_correlation(self):
        rng = np.random.default_rng(7)
        n = 400
        y0 = U + rng.exponential(size=n)
        z1 = rng.standard_normal(n)
        z2 = 0.8 * z1 + 0.6 * rng.standard_normal(n)
        params = HtParams(alpha=np.array([0.3, 0.2]), beta=np.array([0.5, 0.5]))
        lags = forward_model(y0, np.column_stack([z1, z2]), params)
        d = LagData(y0=y0, lags=lags, u=U)
        fit = fit_stepwise(d)
        sample = sample_conditional(fit, x=4.0, R=100000,
                                    rng=np.random.default_rng(8))
        z = (sample.lags - fit.params.alpha * sample.y0[:, None]) \
            / sample.y0[:, None] ** fit.params.beta
        cloud_corr = np.corrcoef(fit.residual_cloud.T)[0, 1]
        sample_corr = np.corrcoef(z.T)[0, 1]
        assert abs(sample_corr - cloud_corr) < 0.02

    def test_level_below_threshold_rejected(self):
        d = _pairs_from_model(0.5, 0.5, 100, seed=5)
        fit = fit_stepwise(d)
        with pytest.raises(ValueError):
            sample_conditional(fit, x=1.0, R=10, rng=np.random.default_rng(0))
