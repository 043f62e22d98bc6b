"""Bayesian semiparametric sampler for the conditional tail model.

The lag-residual distribution is a truncated stick-breaking Dirichlet
process mixture of diagonal Gaussians, sampled jointly with the per-lag
regression parameters by a Gibbs sweep with conjugate updates for the
component means and variances, the allocations, the stick weights and the
concentration, an adaptive random-walk Metropolis step for (alpha, beta),
and a label-switching move to improve mixing across weight-ordered modes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr
from scipy.stats import gamma as gamma_dist

from .ht import (HtParams, LagData, ResidualEnvelope, TieStructure,
                 bound_references, default_reference_level, kpt_feasible,
                 residuals)

_PSI_SQ_FLOOR = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Priors:
    """Hyperparameters of the hierarchical model.

    ``eta1``/``eta2`` are the shape and scale of the concentration prior,
    ``psi_mu_sq`` the per-lag prior variance of component means,
    ``nu1``/``nu2`` the per-lag inverse-gamma shape/scale of component
    variances, ``gamma_floor`` the truncation point of the concentration
    posterior, and ``trunc`` the stick-breaking truncation level.
    """

    eta1: float = 1.0
    eta2: float = 1.0
    psi_mu_sq: float | np.ndarray = 25.0
    nu1: float | np.ndarray = 2.0
    nu2: float | np.ndarray = 2.0
    gamma_floor: float = 0.5
    trunc: int = 150

    def __post_init__(self):
        for name in ("eta1", "eta2", "gamma_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.trunc < 2:
            raise ValueError("truncation level must be at least 2")

    def per_lag(self, name: str, m: int) -> np.ndarray:
        value = np.asarray(getattr(self, name), dtype=float)
        out = np.broadcast_to(value, (m,)).copy()
        if np.any(out <= 0):
            raise ValueError(f"{name} must be positive")
        return out


def stick_break(v: np.ndarray) -> np.ndarray:
    """Weights from stick breaks: w_k = V_k * prod_{i<k}(1 - V_i), V_N = 1."""
    v = np.asarray(v, dtype=float)
    if np.any((v < 0) | (v > 1)):
        raise ValueError("breaks must lie in [0, 1]")
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - v)])
    return np.concatenate([v * remaining[:-1], [remaining[-1]]])


def _log_weights_from_breaks(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(w, log w) carried together; log w computed via log1p for stability."""
    v = np.clip(np.asarray(v, dtype=float), 1e-300, 1.0 - 1e-16)
    log_v = np.log(v)
    log_1mv = np.log1p(-v)
    prefix = np.concatenate([[0.0], np.cumsum(log_1mv)])
    log_w = np.concatenate([log_v + prefix[:-1], [prefix[-1]]])
    return np.exp(log_w), log_w


def truncation_error_bound(n: int, gamma: float, trunc: int) -> float:
    """L1 truncation error bound 4*n*exp(-(N-1)/gamma) for the finite stick."""
    if n <= 0 or gamma <= 0 or trunc < 1:
        raise ValueError("arguments must be positive")
    return 4.0 * n * math.exp(-(trunc - 1) / gamma)


@dataclass
class MixtureState:
    """Full sampler state.

    Component parameters are stored as (N, m) matrices indexed
    [component, lag]; ``v_breaks`` are the N-1 stick breaks behind ``w``
    and ``log_w`` is carried alongside to protect the concentration update
    from weight underflow.
    """

    ht: HtParams
    mu: np.ndarray
    psi_sq: np.ndarray
    w: np.ndarray
    log_w: np.ndarray
    v_breaks: np.ndarray
    c: np.ndarray
    gamma: float

    @property
    def trunc(self) -> int:
        return self.w.size

    def counts(self) -> np.ndarray:
        return np.bincount(self.c, minlength=self.trunc)

    def occupied(self) -> int:
        return int(np.count_nonzero(self.counts()))

    def copy(self) -> "MixtureState":
        return MixtureState(
            ht=self.ht, mu=self.mu.copy(), psi_sq=self.psi_sq.copy(),
            w=self.w.copy(), log_w=self.log_w.copy(),
            v_breaks=self.v_breaks.copy(), c=self.c.copy(), gamma=self.gamma,
        )

    def validate(self, n: int, gamma_floor: float):
        assert self.mu.shape == self.psi_sq.shape == (self.trunc, self.ht.m)
        assert abs(self.w.sum() - 1.0) < 1e-12
        assert np.all(self.psi_sq > 0)
        assert self.gamma >= gamma_floor
        assert self.c.shape == (n,)
        assert np.all((self.c >= 0) & (self.c < self.trunc))


def mu_posterior_params(state: MixtureState, data: LagData,
                        priors: Priors) -> tuple[np.ndarray, np.ndarray]:
    """Posterior (mean, variance) of every component mean; empty components
    revert to the prior."""
    n_comp, m = state.mu.shape
    r = residuals(data, state.ht)
    counts = state.counts()
    sums = np.zeros((n_comp, m))
    np.add.at(sums, state.c, r)
    psi_mu_sq = priors.per_lag("psi_mu_sq", m)
    s2 = 1.0 / (counts[:, None] / state.psi_sq + 1.0 / psi_mu_sq[None, :])
    return s2 * sums / state.psi_sq, s2


def gibbs_mu(state: MixtureState, data: LagData, priors: Priors, rng) -> np.ndarray:
    """Conjugate normal draw of every component mean."""
    mean, s2 = mu_posterior_params(state, data, priors)
    return mean + np.sqrt(s2) * rng.standard_normal(mean.shape)


def psi_sq_posterior_params(state: MixtureState, data: LagData,
                            priors: Priors) -> tuple[np.ndarray, np.ndarray]:
    """Posterior inverse-gamma (shape, scale) of every component variance."""
    n_comp, m = state.psi_sq.shape
    r = residuals(data, state.ht)
    counts = state.counts()
    ss = np.zeros((n_comp, m))
    np.add.at(ss, state.c, (r - state.mu[state.c]) ** 2)
    shape = counts[:, None] / 2.0 + priors.per_lag("nu1", m)[None, :]
    scale = ss / 2.0 + priors.per_lag("nu2", m)[None, :]
    return shape, scale


def gibbs_psi_sq(state: MixtureState, data: LagData, priors: Priors, rng) -> np.ndarray:
    """Conjugate inverse-gamma draw of every component variance."""
    shape, scale = psi_sq_posterior_params(state, data, priors)
    draw = scale / rng.gamma(shape)
    return np.maximum(draw, _PSI_SQ_FLOOR)


def alloc_log_probs(state: MixtureState, data: LagData) -> np.ndarray:
    """Normalised log allocation probabilities, one row per observation.

    Computed in log space with max-subtraction; the per-observation
    1/y0**beta Jacobian factors are constant across components and cancel.
    """
    r = residuals(data, state.ht)
    dev = r[:, None, :] - state.mu[None, :, :]
    log_like = -0.5 * np.sum(
        dev**2 / state.psi_sq[None, :, :] + np.log(state.psi_sq[None, :, :]),
        axis=2,
    )
    lp = state.log_w[None, :] + log_like
    lp -= lp.max(axis=1, keepdims=True)
    lp -= np.log(np.exp(lp).sum(axis=1, keepdims=True))
    return lp


def gibbs_alloc(state: MixtureState, data: LagData, rng) -> np.ndarray:
    """Categorical draw of every allocation from its full conditional."""
    probs = np.exp(alloc_log_probs(state, data))
    cum = np.cumsum(probs, axis=1)
    u = rng.random(data.n)
    return np.minimum((u[:, None] > cum).sum(axis=1), state.trunc - 1).astype(np.int64)


def weight_posterior_params(counts: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalised-Dirichlet break parameters a_k = 1 + n_k, b_k = gamma + sum_{j>k} n_j."""
    tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0]])
    a = 1.0 + counts[:-1]
    b = gamma + tail[:-1]
    return a, b


def gibbs_weights(state: MixtureState, priors: Priors, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw (w, log_w, breaks) from the generalised Dirichlet full conditional."""
    a, b = weight_posterior_params(state.counts(), state.gamma)
    v = rng.beta(a, b)
    w, log_w = _log_weights_from_breaks(v)
    return w, log_w, v


def gamma_posterior_params(state: MixtureState, priors: Priors) -> tuple[float, float]:
    """Posterior gamma (shape, scale) of the concentration parameter before
    truncation at the floor.  log w_N comes from the carried log-weights,
    never the rounded w_N."""
    shape = state.trunc + priors.eta1 - 1.0
    rate = 1.0 / priors.eta2 - state.log_w[-1]
    return float(shape), float(1.0 / rate)


def gibbs_gamma(state: MixtureState, priors: Priors, rng, max_rejections: int = 1000) -> float:
    """Truncated-gamma draw of the concentration parameter.

    The posterior is Gamma(N + eta1 - 1, eta2/(1 - eta2*log w_N)) restricted
    to [gamma_floor, inf); sampled by rejection from the untruncated gamma,
    with an inverse-CDF fallback if the floor captures nearly all mass.
    """
    shape, scale = gamma_posterior_params(state, priors)
    for _ in range(max_rejections):
        draw = rng.gamma(shape, scale)
        if draw >= priors.gamma_floor:
            return float(draw)
    lo = gamma_dist.cdf(priors.gamma_floor, shape, scale=scale)
    u = lo + (1.0 - lo) * rng.random()
    return float(max(gamma_dist.ppf(u, shape, scale=scale), priors.gamma_floor))


def loglik_alpha_beta(params: HtParams, state: MixtureState, data: LagData) -> float:
    """Gaussian log-likelihood of the data given allocations and components.

    Includes the y0**beta Jacobian terms, which vary with beta.
    """
    r = residuals(data, params)
    mu_c = state.mu[state.c]
    psi_sq_c = state.psi_sq[state.c]
    log_y0 = np.log(data.y0)
    return float(
        -0.5 * np.sum((r - mu_c) ** 2 / psi_sq_c)
        - 0.5 * np.sum(np.log(psi_sq_c))
        - np.sum(params.beta[None, :] * log_y0[:, None])
        - 0.5 * data.n * data.m * _LOG_2PI
    )


@dataclass
class AdaptState:
    """Per-parameter Robbins-Monro scale adaptation for the MH step.

    Targets 0.44 acceptance with diminishing step t**(-0.6); frozen after
    burn-in so recorded states come from a fixed kernel.
    """

    log_scale: np.ndarray
    t: np.ndarray
    target: float = 0.44
    decay: float = 0.6
    frozen: bool = False

    @classmethod
    def for_structure(cls, tie: TieStructure, initial_scale: float = 0.5) -> "AdaptState":
        k = tie.n_free
        return cls(log_scale=np.full(k, np.log(initial_scale)), t=np.zeros(k, dtype=int))

    def update(self, idx: int, accepted: bool):
        if self.frozen:
            return
        self.t[idx] += 1
        step = self.t[idx] ** (-self.decay)
        self.log_scale[idx] += step * ((1.0 if accepted else 0.0) - self.target)
        self.log_scale[idx] = float(np.clip(self.log_scale[idx], -8.0, 4.0))


def _logit(x):
    return math.log(x) - math.log1p(-x)


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def mh_alpha_beta(state: MixtureState, data: LagData, priors: Priors,
                  tie: TieStructure, adapt: AdaptState, rng,
                  constraints_on: bool = True, v: float | None = None,
                  bound_refs: tuple[np.ndarray, np.ndarray] | None = None,
                  ) -> tuple[HtParams, np.ndarray]:
    """Single-site random-walk update of the free (alpha, beta) parameters.

    Proposals live on the logit scale (uniform priors on (0,1) contribute a
    sigmoid Jacobian); proposals outside the quantile-ordering support are
    rejected outright.  Returns the updated parameters and a 0/1 acceptance
    vector aligned with the free-parameter order.
    """
    if v is None:
        v = default_reference_level(data)
    if bound_refs is None:
        bound_refs = bound_references(data)
    free = tie.collapse(state.ht)
    params = state.ht
    cur_loglik = loglik_alpha_beta(params, state, data)
    accepted = np.zeros(tie.n_free)
    for idx in range(tie.n_free):
        theta = free[idx]
        ell = _logit(theta)
        prop_ell = ell + math.exp(adapt.log_scale[idx]) * rng.standard_normal()
        prop_theta = _sigmoid(prop_ell)
        if not 0.0 < prop_theta < 1.0:
            adapt.update(idx, False)
            continue
        prop_free = free.copy()
        prop_free[idx] = prop_theta
        prop_params = tie.expand(prop_free)
        if constraints_on:
            z = residuals(data, prop_params)
            env = ResidualEnvelope(z_min=z.min(axis=0), z_max=z.max(axis=0),
                                   ad_max=bound_refs[0], nad_min=bound_refs[1])
            if not kpt_feasible(prop_params, env, v):
                adapt.update(idx, False)
                continue
        prop_loglik = loglik_alpha_beta(prop_params, state, data)
        log_ratio = (prop_loglik - cur_loglik
                     + math.log(prop_theta) + math.log1p(-prop_theta)
                     - math.log(theta) - math.log1p(-theta))
        if math.log(rng.random()) < log_ratio:
            free = prop_free
            params = prop_params
            cur_loglik = prop_loglik
            accepted[idx] = 1.0
            adapt.update(idx, True)
        else:
            adapt.update(idx, False)
    return params, accepted


def label_switch(state: MixtureState, rng) -> tuple[MixtureState, bool]:
    """One label-switching attempt on a uniformly chosen adjacent pair.

    Move 1 swaps the pair's means and variances and renumbers their
    allocations, leaving the weights untouched; move 2 additionally
    exchanges the pair's stick breaks.  Both leave the posterior invariant.
    Returns the (possibly updated) state and whether the move was accepted.
    """
    n_comp = state.trunc
    counts = state.counts()
    use_move_two = n_comp >= 3 and rng.random() < 0.5
    if use_move_two:
        k = int(rng.integers(0, n_comp - 2))
        log_ratio = (counts[k] * math.log1p(-state.v_breaks[k + 1])
                     - counts[k + 1] * math.log1p(-state.v_breaks[k]))
    else:
        k = int(rng.integers(0, n_comp - 1))
        log_ratio = (counts[k + 1] - counts[k]) * (state.log_w[k] - state.log_w[k + 1])
    if math.log(rng.random()) >= log_ratio:
        return state, False
    new = state.copy()
    new.mu[[k, k + 1]] = new.mu[[k + 1, k]]
    new.psi_sq[[k, k + 1]] = new.psi_sq[[k + 1, k]]
    in_k = state.c == k
    in_k1 = state.c == k + 1
    new.c[in_k] = k + 1
    new.c[in_k1] = k
    if use_move_two:
        new.v_breaks[[k, k + 1]] = new.v_breaks[[k + 1, k]]
        new.w, new.log_w = _log_weights_from_breaks(new.v_breaks)
    return new, True


def log_posterior(state: MixtureState, data: LagData, priors: Priors) -> float:
    """Joint log density of the state (flat alpha/beta prior), for traces."""
    m = data.m
    psi_mu_sq = priors.per_lag("psi_mu_sq", m)
    nu1 = priors.per_lag("nu1", m)
    nu2 = priors.per_lag("nu2", m)
    ll = loglik_alpha_beta(state.ht, state, data)
    lp_mu = -0.5 * np.sum(state.mu**2 / psi_mu_sq[None, :]
                          + np.log(2.0 * np.pi * psi_mu_sq[None, :]))
    lp_psi = np.sum(
        nu1[None, :] * np.log(nu2[None, :])
        - np.vectorize(math.lgamma)(nu1)[None, :]
        - (nu1[None, :] + 1.0) * np.log(state.psi_sq)
        - nu2[None, :] / state.psi_sq
    )
    lp_alloc = float(state.log_w[state.c].sum())
    n_comp = state.trunc
    lp_breaks = (n_comp - 1) * math.log(state.gamma) \
        + (state.gamma - 1.0) * float(np.log1p(-np.clip(state.v_breaks, 0, 1 - 1e-16)).sum())
    lp_gamma = ((priors.eta1 - 1.0) * math.log(state.gamma)
                - state.gamma / priors.eta2)
    return float(ll + lp_mu + lp_psi + lp_alloc + lp_breaks + lp_gamma)


@dataclass
class Chain:
    """Thinned posterior states plus acceptance diagnostics and config echo."""

    states: list
    acceptance: dict
    priors: Priors
    tie: TieStructure
    iters: int
    burn_in: int
    thin: int
    seed: int
    constraints_on: bool
    notes: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)


def _draw_truncated_gamma_prior(priors: Priors, rng) -> float:
    for _ in range(1000):
        g = rng.gamma(priors.eta1, priors.eta2)
        if g >= priors.gamma_floor:
            return float(g)
    return float(priors.gamma_floor)


def initial_state(data: LagData, priors: Priors, tie: TieStructure, rng,
                  constraints_on: bool = True, v: float | None = None) -> MixtureState:
    """Prior-drawn starting state with a feasible (alpha, beta)."""
    if v is None:
        v = default_reference_level(data)
    m = data.m
    n_comp = priors.trunc
    gamma0 = _draw_truncated_gamma_prior(priors, rng)
    v_breaks = rng.beta(1.0, gamma0, size=n_comp - 1)
    w, log_w = _log_weights_from_breaks(v_breaks)
    mu = rng.standard_normal((n_comp, m)) * np.sqrt(priors.per_lag("psi_mu_sq", m))[None, :]
    psi_sq = np.maximum(
        priors.per_lag("nu2", m)[None, :] / rng.gamma(priors.per_lag("nu1", m)[None, :],
                                                      size=(n_comp, m)),
        _PSI_SQ_FLOOR,
    )
    cum = np.cumsum(w)
    c = np.minimum((rng.random(data.n)[:, None] > cum[None, :]).sum(axis=1), n_comp - 1)
    ad_max, nad_min = bound_references(data)
    free = np.full(tie.n_free, 0.5)
    for _ in range(1000):
        params = tie.expand(free)
        z = residuals(data, params)
        env = ResidualEnvelope(z_min=z.min(axis=0), z_max=z.max(axis=0),
                               ad_max=ad_max, nad_min=nad_min)
        if not constraints_on or kpt_feasible(params, env, v):
            break
        free = rng.random(tie.n_free)
    else:
        raise RuntimeError("could not find a feasible starting (alpha, beta)")
    return MixtureState(ht=params, mu=mu, psi_sq=psi_sq, w=w, log_w=log_w,
                        v_breaks=v_breaks, c=c.astype(np.int64), gamma=gamma0)


def sweep(state: MixtureState, data: LagData, priors: Priors, tie: TieStructure,
          adapt: AdaptState, rng, constraints_on: bool, v: float,
          bound_refs) -> tuple[MixtureState, np.ndarray, bool]:
    """One full update cycle: allocations, weights, means, variances,
    concentration, regression parameters, label switch."""
    state.c = gibbs_alloc(state, data, rng)
    state.w, state.log_w, state.v_breaks = gibbs_weights(state, priors, rng)
    state.mu = gibbs_mu(state, data, priors, rng)
    state.psi_sq = gibbs_psi_sq(state, data, priors, rng)
    state.gamma = gibbs_gamma(state, priors, rng)
    state.ht, accepted = mh_alpha_beta(state, data, priors, tie, adapt, rng,
                                       constraints_on=constraints_on, v=v,
                                       bound_refs=bound_refs)
    state, label_accepted = label_switch(state, rng)
    return state, accepted, label_accepted


def run_chain(data: LagData, priors: Priors, tie: TieStructure,
              iters: int, burn_in: int, thin: int = 1, seed: int = 0,
              constraints_on: bool = True) -> Chain:
    """Run the sampler and record thinned post-burn-in states.

    Deterministic given the seed.  Scale adaptation for the MH step runs
    during burn-in only.
    """
    if not iters > burn_in >= 0:
        raise ValueError("need iters > burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be at least 1")
    notes = []
    gamma_ref = priors.eta1 * priors.eta2
    bound = truncation_error_bound(data.n, max(gamma_ref, priors.gamma_floor),
                                   priors.trunc)
    if bound > 1e-6:
        msg = (f"truncation level {priors.trunc} gives L1 error bound "
               f"{bound:.2e} > 1e-6 at gamma={gamma_ref}")
        warnings.warn(msg)
        notes.append(msg)
    rng = np.random.default_rng(seed)
    v = default_reference_level(data)
    bound_refs = bound_references(data)
    state = initial_state(data, priors, tie, rng, constraints_on, v)
    adapt = AdaptState.for_structure(tie)
    accept_totals = np.zeros(tie.n_free)
    label_accepts = 0
    recorded = []
    for it in range(1, iters + 1):
        if it == burn_in + 1:
            adapt.frozen = True
        state, accepted, label_accepted = sweep(
            state, data, priors, tie, adapt, rng, constraints_on, v, bound_refs)
        accept_totals += accepted
        label_accepts += int(label_accepted)
        if it > burn_in and (it - burn_in) % thin == 0:
            recorded.append(state.copy())
    acceptance = {
        "alpha_beta": (accept_totals / iters).tolist(),
        "label_switch": label_accepts / iters,
    }
    return Chain(states=recorded, acceptance=acceptance, priors=priors, tie=tie,
                 iters=iters, burn_in=burn_in, thin=thin, seed=seed,
                 constraints_on=constraints_on, notes=notes)


def residual_mixture_cdf(state: MixtureState, z, m_use: int | None = None,
                         weight_tol: float = 0.0) -> np.ndarray | float:
    """Joint mixture CDF G(z) = sum_k w_k prod_j Phi((z_j - mu_jk)/psi_jk).

    ``z`` is a single m-vector or an (R, m) matrix; ``m_use`` restricts the
    product to the first ``m_use`` lags (marginalising the rest, exact for
    diagonal components).  Components with weight below ``weight_tol`` are
    skipped; the induced error is at most the skipped mass.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    m_use = z.shape[1] if m_use is None else m_use
    keep = state.w > weight_tol if weight_tol > 0 else slice(None)
    w = state.w[keep]
    mu = state.mu[keep][:, :m_use]
    psi = np.sqrt(state.psi_sq[keep][:, :m_use])
    std = (z[:, None, :m_use] - mu[None, :, :]) / psi[None, :, :]
    probs = np.prod(ndtr(std), axis=2) @ w
    return probs if probs.size > 1 else float(probs[0])


def mixture_marginal_cdf(state: MixtureState, z, lag: int,
                         weight_tol: float = 0.0) -> np.ndarray | float:
    """Marginal mixture CDF of a single lag residual."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    keep = state.w > weight_tol if weight_tol > 0 else slice(None)
    w = state.w[keep]
    mu = state.mu[keep][:, lag]
    psi = np.sqrt(state.psi_sq[keep][:, lag])
    probs = ndtr((z[:, None] - mu[None, :]) / psi[None, :]) @ w
    return probs if probs.size > 1 else float(probs[0])
