"""Brute-force oracle gate for every Gibbs full conditional.

On a fixed 3-observation, 2-component, single-lag instance, each sampled
conditional density must match the numerically normalised product of
likelihood and prior, written out here from the raw model densities with
no reference to the sampler's algebra.  Sup-norm tolerance 1e-6.
"""
import numpy as np
import pytest
from scipy.stats import beta as beta_dist
from scipy.stats import gamma as gamma_dist
from scipy.stats import invgamma, norm

from extclust.dpmix import (MixtureState, Priors, alloc_log_probs,
                            gamma_posterior_params, mu_posterior_params,
                            psi_sq_posterior_params, weight_posterior_params)
from extclust.ht import HtParams, LagData

PRIORS = Priors(eta1=1.5, eta2=0.8, psi_mu_sq=4.0, nu1=2.0, nu2=1.5,
                gamma_floor=0.5, trunc=2)


@pytest.fixture()
def instance():
    data = LagData(y0=np.array([3.5, 4.2, 5.0]),
                   lags=np.array([[2.1], [0.4], [3.3]]), u=3.0)
    state = MixtureState(
        ht=HtParams(alpha=np.array([0.4]), beta=np.array([0.6])),
        mu=np.array([[0.5], [-0.8]]),
        psi_sq=np.array([[0.7], [1.5]]),
        w=np.array([0.6, 0.4]),
        log_w=np.log(np.array([0.6, 0.4])),
        v_breaks=np.array([0.6]),
        c=np.array([0, 1, 0]),
        gamma=1.2,
    )
    return data, state


def _obs_loglik(data, alpha, beta, mu_of_obs, psi_sq_of_obs):
    """Raw observation model: lag | y0 is normal with mean
    alpha*y0 + mu*y0**beta and variance y0**(2*beta) * psi_sq."""
    mean = alpha * data.y0 + mu_of_obs * data.y0**beta
    sd = data.y0**beta * np.sqrt(psi_sq_of_obs)
    return norm.logpdf(data.lags[:, 0], loc=mean, scale=sd)


def _normalise(grid, unnorm_log):
    unnorm = np.exp(unnorm_log - unnorm_log.max())
    return unnorm / np.trapezoid(unnorm, grid)


class TestGibbsConditionalOracles:
    def test_mu_conditional_matches_quadrature(self, instance):
        data, state = instance
        k = 0
        in_k = state.c == k
        grid = np.linspace(-12, 12, 12001)
        log_dens = np.empty(grid.size)
        for g, mu_val in enumerate(grid):
            mu_of_obs = np.where(in_k, mu_val, state.mu[state.c, 0])
            ll = _obs_loglik(data, 0.4, 0.6, mu_of_obs,
                             state.psi_sq[state.c, 0])[in_k].sum()
            log_dens[g] = ll + norm.logpdf(mu_val, 0.0, np.sqrt(4.0))
        oracle = _normalise(grid, log_dens)
        mean, var = mu_posterior_params(state, data, PRIORS)
        analytic = norm.pdf(grid, mean[k, 0], np.sqrt(var[k, 0]))
        assert np.max(np.abs(oracle - analytic)) < 1e-6

    def test_mu_conditional_empty_component_recovers_prior(self, instance):
        data, state = instance
        state.c = np.array([0, 0, 0])  # component 1 empty
        mean, var = mu_posterior_params(state, data, PRIORS)
        assert mean[1, 0] == pytest.approx(0.0, abs=1e-12)
        assert var[1, 0] == pytest.approx(4.0, abs=1e-12)

    def test_mu_flat_prior_limit_is_residual_mean(self, instance):
        data, state = instance
        state.c = np.array([0, 0, 0])
        state.ht = HtParams(alpha=np.array([0.4]), beta=np.array([0.0]))
        flat = Priors(eta1=1.5, eta2=0.8, psi_mu_sq=1e12, nu1=2.0, nu2=1.5,
                      gamma_floor=0.5, trunc=2)
        mean, _ = mu_posterior_params(state, data, flat)
        residual_mean = (data.lags[:, 0] - 0.4 * data.y0).mean()
        assert mean[0, 0] == pytest.approx(residual_mean, rel=1e-9)

    def test_psi_sq_conditional_matches_quadrature(self, instance):
        data, state = instance
        k = 0
        in_k = state.c == k
        grid = np.geomspace(1e-3, 1e3, 48001)
        log_dens = np.empty(grid.size)
        for g, psi_val in enumerate(grid):
            psi_of_obs = np.where(in_k, psi_val, state.psi_sq[state.c, 0])
            ll = _obs_loglik(data, 0.4, 0.6, state.mu[state.c, 0],
                             psi_of_obs)[in_k].sum()
            log_dens[g] = ll + invgamma.logpdf(psi_val, 2.0, scale=1.5)
        oracle = _normalise(grid, log_dens)
        shape, scale = psi_sq_posterior_params(state, data, PRIORS)
        analytic = invgamma.pdf(grid, shape[k, 0], scale=scale[k, 0])
        assert np.max(np.abs(oracle - analytic)) < 1e-6

    def test_psi_sq_zero_deviation_gives_prior_scale(self, instance):
        data, state = instance
        # residuals exactly equal to the component mean
        mu_val = 0.3
        state.mu = np.array([[mu_val], [mu_val]])
        lags = 0.4 * data.y0 + mu_val * data.y0**0.6
        data = LagData(y0=data.y0, lags=lags[:, None], u=3.0)
        _, scale = psi_sq_posterior_params(state, data, PRIORS)
        np.testing.assert_allclose(scale, 1.5, atol=1e-12)

    def test_alloc_conditional_matches_direct_density(self, instance):
        data, state = instance
        probs = np.exp(alloc_log_probs(state, data))
        for i in range(data.n):
            direct = np.empty(2)
            for k in range(2):
                ll = _obs_loglik(data, 0.4, 0.6,
                                 np.full(3, state.mu[k, 0]),
                                 np.full(3, state.psi_sq[k, 0]))[i]
                direct[k] = state.w[k] * np.exp(ll)
            direct /= direct.sum()
            assert np.max(np.abs(probs[i] - direct)) < 1e-6

    def test_alloc_identical_components_reduce_to_weights(self, instance):
        data, state = instance
        state.mu = np.array([[0.2], [0.2]])
        state.psi_sq = np.array([[0.9], [0.9]])
        probs = np.exp(alloc_log_probs(state, data))
        np.testing.assert_allclose(probs, np.broadcast_to(state.w, (3, 2)),
                                   rtol=1e-12)

    def test_alloc_log_space_survives_huge_density_ratio(self, instance):
        data, state = instance
        state.mu = np.array([[0.0], [200.0]])
        state.psi_sq = np.array([[1.0], [1e-4]])
        probs = np.exp(alloc_log_probs(state, data))
        assert np.all(np.isfinite(probs))
        np.testing.assert_allclose(probs[:, 0], 1.0, atol=1e-12)

    def test_weights_conditional_matches_quadrature(self, instance):
        data, state = instance
        counts = state.counts()
        grid = np.linspace(1e-6, 1 - 1e-6, 20001)
        # truncated stick prior at N=2: w1 ~ Beta(1, gamma)
        log_dens = (counts[0] * np.log(grid) + counts[1] * np.log1p(-grid)
                    + beta_dist.logpdf(grid, 1.0, state.gamma))
        oracle = _normalise(grid, log_dens)
        a, b = weight_posterior_params(counts, state.gamma)
        analytic = beta_dist.pdf(grid, a[0], b[0])
        assert np.max(np.abs(oracle - analytic)) < 1e-6

    def test_weights_formula_example(self):
        a, b = weight_posterior_params(np.array([3, 2, 1, 0]), 1.0)
        np.testing.assert_array_equal(a, [4, 3, 2])
        np.testing.assert_array_equal(b, [4, 2, 1])

    def test_weights_no_data_reduces_to_prior(self):
        a, b = weight_posterior_params(np.zeros(4, dtype=int), 2.5)
        np.testing.assert_array_equal(a, [1, 1, 1])
        np.testing.assert_array_equal(b, [2.5, 2.5, 2.5])

    def test_gamma_conditional_matches_quadrature(self, instance):
        data, state = instance
        grid = np.linspace(PRIORS.gamma_floor, 60.0, 30001)
        # breaks likelihood at N=2: Beta(V1; 1, gamma)
        v1 = state.v_breaks[0]
        log_dens = (beta_dist.logpdf(v1, 1.0, grid)
                    + gamma_dist.logpdf(grid, PRIORS.eta1, scale=PRIORS.eta2))
        oracle = _normalise(grid, log_dens)
        shape, scale = gamma_posterior_params(state, PRIORS)
        analytic = gamma_dist.pdf(grid, shape, scale=scale)
        analytic /= gamma_dist.sf(PRIORS.gamma_floor, shape, scale=scale)
        assert np.max(np.abs(oracle - analytic)) < 1e-6

    def test_gamma_posterior_formula_example(self, instance):
        data, state = instance
        pri = Priors(eta1=1.0, eta2=1.0, trunc=10, gamma_floor=0.5)
        state10 = MixtureState(
            ht=state.ht, mu=np.zeros((10, 1)), psi_sq=np.ones((10, 1)),
            w=np.full(10, 0.1), log_w=np.full(10, np.log(0.1)),
            v_breaks=np.full(9, 0.1), c=state.c, gamma=1.0)
        state10.log_w[-1] = -1.0
        shape, scale = gamma_posterior_params(state10, pri)
        assert shape == pytest.approx(10.0)
        assert scale == pytest.approx(0.5)
