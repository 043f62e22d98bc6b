"""Cluster functionals with uncertainty: threshold-based extremal index,
sub-asymptotic extremogram, cluster-maxima distribution, block bootstrap.

Model-based estimators integrate a residual distribution over the
Laplace-scale exceedance law by Monte Carlo, reusing one stream of
exponential excesses across levels, run lengths and posterior states so
that comparisons between estimates are free of extra Monte Carlo noise.
A residual-CDF evaluator is any callable ``G(z, y) -> prob`` taking an
(R, m) matrix of residual coordinates and the (R,) conditioning values
(most evaluators ignore ``y``; exact-law oracles use it).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dpmix import Chain, MixtureState, mixture_marginal_cdf, residual_mixture_cdf
from .errors import LevelBeyondSampleError, NoExceedancesError
from .ht import HtParams, z_of_level
from .marginals import gpd_survivor
from .series import TimeSeries


@dataclass(frozen=True)
class FunctionalEstimate:
    """Point estimate of a cluster functional with an uncertainty interval.

    ``method`` records the provenance: empirical (runs counting), stepwise
    (empirical-residual Monte Carlo) or bayes (posterior integration);
    ``lo``/``hi`` may be None when no uncertainty method was requested.
    """

    level: float
    level_laplace: float | None
    value: float
    lo: float | None
    hi: float | None
    method: str
    run_length: int
    R: int | None = None

    def __post_init__(self):
        if self.lo is not None and self.hi is not None:
            if not (0.0 <= self.lo <= self.value <= self.hi <= 1.0):
                raise ValueError(
                    f"interval ({self.lo}, {self.hi}) does not bracket {self.value}")


def slice_params(p: HtParams, m: int) -> HtParams:
    """Restriction of a fitted parameter vector to the first m lags."""
    if m > p.m:
        raise ValueError(f"run length {m} exceeds fitted lag depth {p.m}")
    return HtParams(alpha=p.alpha[:m], beta=p.beta[:m])


# ---------------------------------------------------------------------------
# empirical (runs) estimator


def theta_runs_value(values, x: float, m: int) -> float:
    """Empirical runs estimate: the fraction of exceedances of x followed by
    m consecutive non-exceedances, over exceedance times with a complete
    window."""
    values = np.asarray(getattr(values, "values", values), dtype=float)
    if m < 1:
        raise ValueError("run length must be at least 1")
    if x >= values.max():
        raise LevelBeyondSampleError(
            f"level {x} is at or beyond the sample maximum {values.max()}")
    idx = np.flatnonzero(values > x)
    idx = idx[idx + m <= values.size - 1]
    if idx.size == 0:
        raise NoExceedancesError(f"no exceedances of {x} with a complete window")
    below = np.ones(idx.size, dtype=bool)
    for j in range(1, m + 1):
        below &= values[idx + j] <= x
    return float(below.mean())


def chi_runs_value(values, x: float, lag_j: int) -> float:
    """Empirical sub-asymptotic extremogram: the fraction of exceedances of
    x whose lag-j companion also exceeds x."""
    values = np.asarray(getattr(values, "values", values), dtype=float)
    if lag_j < 1:
        raise ValueError("lag must be at least 1")
    if x >= values.max():
        raise LevelBeyondSampleError(
            f"level {x} is at or beyond the sample maximum {values.max()}")
    idx = np.flatnonzero(values > x)
    idx = idx[idx + lag_j <= values.size - 1]
    if idx.size == 0:
        raise NoExceedancesError(f"no exceedances of {x} with a complete window")
    return float(np.mean(values[idx + lag_j] > x))


def theta_runs(series, x: float, m: int, block_len: int | None = None,
               B: int = 0, seed: int = 0, coverage: float = 0.95) -> FunctionalEstimate:
    """Runs estimate with an optional block-bootstrap percentile interval."""
    value = theta_runs_value(series, x, m)
    lo = hi = None
    if B > 0:
        boot = block_bootstrap(series, block_len, B,
                               lambda s: theta_runs_value(s, x, m), seed)
        lo, hi = boot.percentile_interval(coverage)
        lo, hi = min(lo, value), max(hi, value)
    return FunctionalEstimate(level=float(x), level_laplace=None, value=value,
                              lo=lo, hi=hi, method="empirical", run_length=m,
                              R=None)


# ---------------------------------------------------------------------------
# residual-CDF evaluators


def mixture_cdf_evaluator(state: MixtureState, weight_tol: float = 1e-13):
    """Joint residual CDF of a posterior mixture state."""
    def evaluate(z, y=None):
        return np.atleast_1d(residual_mixture_cdf(state, z, weight_tol=weight_tol))
    return evaluate


def mixture_marginal_survivor_evaluator(state: MixtureState, lag: int,
                                        weight_tol: float = 1e-13):
    """Marginal residual survivor of one lag of a posterior mixture state."""
    def evaluate(z, y=None):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return 1.0 - np.atleast_1d(
            mixture_marginal_cdf(state, z[:, 0], lag, weight_tol=weight_tol))
    return evaluate


def empirical_cloud_cdf_evaluator(cloud: np.ndarray, chunk: int = 4096):
    """Joint empirical CDF of the residual rows (stage-two stepwise G-hat)."""
    cloud = np.asarray(cloud, dtype=float)

    def evaluate(z, y=None):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        m = z.shape[1]
        if m == 1:
            col = np.sort(cloud[:, 0])
            return np.searchsorted(col, z[:, 0], side="right") / col.size
        out = np.empty(z.shape[0])
        for start in range(0, z.shape[0], chunk):
            zz = z[start:start + chunk]
            hits = np.all(cloud[None, :, :m] <= zz[:, None, :], axis=2)
            out[start:start + chunk] = hits.mean(axis=1)
        return out
    return evaluate


def empirical_cloud_marginal_survivor_evaluator(cloud: np.ndarray, lag: int):
    """Marginal empirical survivor of one residual-cloud column."""
    col = np.sort(np.asarray(cloud, dtype=float)[:, lag])

    def evaluate(z, y=None):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return 1.0 - np.searchsorted(col, z[:, 0], side="right") / col.size
    return evaluate


# ---------------------------------------------------------------------------
# model-based Monte Carlo integration


def _laplace_level(marg, x: float) -> float:
    if marg is None:
        return float(x)
    return float(marg.to_laplace(x))


def exceedance_excesses(R: int, rng) -> np.ndarray:
    """Unit-exponential excesses: the Laplace-scale exceedance law above any
    level x is x plus these draws.  Draw once and reuse across levels."""
    if R < 1:
        raise ValueError("R must be at least 1")
    return rng.exponential(size=R)


def theta_model_from_draws(G_eval, params: HtParams, x_laplace: float,
                           excesses: np.ndarray, m: int | None = None) -> float:
    """Monte Carlo value of the theta integral at a Laplace level, reusing
    a shared vector of exponential excesses."""
    m = params.m if m is None else m
    p = slice_params(params, m)
    y = x_laplace + excesses
    z = z_of_level(x_laplace, y, p)
    return float(np.mean(G_eval(z, y)))


def theta_model(G_eval, params: HtParams, marg, x: float, m: int,
                R: int, rng) -> float:
    """Monte Carlo estimate of theta(x, m) under the conditional tail model.

    Draws conditioning values above x from the Laplace-scale exceedance
    law, evaluates the joint residual CDF at the level coordinates and
    averages.  ``x`` is in data units when ``marg`` is given, else already
    on the Laplace scale.
    """
    excesses = exceedance_excesses(R, rng)
    return theta_model_from_draws(G_eval, params, _laplace_level(marg, x),
                                  excesses, m)


def theta_model_grid(G_eval, params: HtParams, marg, levels, m: int,
                     R: int, rng) -> np.ndarray:
    """theta_model over a level grid with common random numbers."""
    excesses = exceedance_excesses(R, rng)
    return np.array([
        theta_model_from_draws(G_eval, params, _laplace_level(marg, x), excesses, m)
        for x in np.atleast_1d(levels)
    ])


def chi_model_from_draws(survivor_eval, params: HtParams, x_laplace: float,
                         excesses: np.ndarray, lag: int) -> float:
    """Monte Carlo value of chi_j(x) from a marginal residual survivor."""
    p = slice_params(params, lag + 1)
    y = x_laplace + excesses
    z = z_of_level(x_laplace, y, p)[:, [lag]]
    return float(np.mean(survivor_eval(z, y)))


def chi_model(survivor_eval, params: HtParams, marg, x: float, lag_j: int,
              R: int, rng) -> float:
    """Monte Carlo estimate of chi_j(x) = Pr(X_j > x | X_0 > x) at lag j >= 1."""
    excesses = exceedance_excesses(R, rng)
    return chi_model_from_draws(survivor_eval, params, _laplace_level(marg, x),
                                excesses, lag_j - 1)


# ---------------------------------------------------------------------------
# posterior functionals


def _posterior_summary(values_per_state: np.ndarray) -> tuple[float, float, float]:
    value = float(np.median(values_per_state))
    lo = float(np.quantile(values_per_state, 0.025))
    hi = float(np.quantile(values_per_state, 0.975))
    return value, lo, hi


def theta_posterior_matrix(chain: Chain, marg, levels, m: int, R: int,
                           seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-(state, level) theta values under one shared Monte Carlo stream.

    Returns (matrix of shape (n_states, n_levels), laplace levels).
    """
    rng = np.random.default_rng(seed)
    excesses = exceedance_excesses(R, rng)
    levels = np.atleast_1d(levels)
    lap = np.array([_laplace_level(marg, x) for x in levels])
    out = np.empty((len(chain.states), lap.size))
    for s, state in enumerate(chain.states):
        G = mixture_cdf_evaluator(state)
        for i, xl in enumerate(lap):
            out[s, i] = theta_model_from_draws(G, state.ht, xl, excesses, m)
    return out, lap


def theta_posterior(chain: Chain, marg, levels, m: int, R: int = 20000,
                    seed: int = 0) -> list[FunctionalEstimate]:
    """Posterior median and equal-tailed 95% interval of theta(x, m) per level.

    The same excess draws are used for every recorded state and every
    level, so orderings across levels and run lengths hold exactly as
    computed.
    """
    matrix, lap = theta_posterior_matrix(chain, marg, levels, m, R, seed)
    estimates = []
    for i, x in enumerate(np.atleast_1d(levels)):
        value, lo, hi = _posterior_summary(matrix[:, i])
        estimates.append(FunctionalEstimate(
            level=float(x), level_laplace=float(lap[i]), value=value, lo=lo,
            hi=hi, method="bayes", run_length=m, R=R))
    return estimates


def chi_posterior_matrix(chain: Chain, marg, levels, lag_j: int, R: int,
                         seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-(state, level) chi_j values under one shared Monte Carlo stream."""
    rng = np.random.default_rng(seed)
    excesses = exceedance_excesses(R, rng)
    levels = np.atleast_1d(levels)
    lap = np.array([_laplace_level(marg, x) for x in levels])
    out = np.empty((len(chain.states), lap.size))
    for s, state in enumerate(chain.states):
        surv = mixture_marginal_survivor_evaluator(state, lag_j - 1)
        for i, xl in enumerate(lap):
            out[s, i] = chi_model_from_draws(surv, state.ht, xl, excesses,
                                             lag_j - 1)
    return out, lap


def chi_posterior(chain: Chain, marg, levels, lag_j: int, R: int = 20000,
                  seed: int = 0) -> list[FunctionalEstimate]:
    """Posterior median and equal-tailed 95% interval of chi_j(x) per level."""
    matrix, lap = chi_posterior_matrix(chain, marg, levels, lag_j, R, seed)
    estimates = []
    for i, x in enumerate(np.atleast_1d(levels)):
        value, lo, hi = _posterior_summary(matrix[:, i])
        estimates.append(FunctionalEstimate(
            level=float(x), level_laplace=float(lap[i]), value=value, lo=lo,
            hi=hi, method="bayes", run_length=lag_j, R=R))
    return estimates


# ---------------------------------------------------------------------------
# cluster maxima and bootstrap


def cluster_max_dist(theta_fn, gpd, m: int, x: float) -> float:
    """Distribution function of cluster maxima at level x > threshold:

        1 - theta(x, m)/theta(u, m) * (1 + xi*(x-u)/sigma)_+^(-1/xi)

    ``theta_fn`` maps a level (data units) to theta(level, m).
    """
    u = gpd.threshold
    if x < u:
        raise ValueError(f"level {x} must be at or above the threshold {u}")
    theta_u = theta_fn(u)
    if not theta_u > 0:
        raise ValueError("theta at the threshold must be positive")
    ratio = theta_fn(x) / theta_u
    return float(1.0 - ratio * gpd_survivor(gpd, x))


@dataclass(frozen=True)
class BootstrapResult:
    """Replicate estimates from a block bootstrap, failures dropped.

    ``samples`` has one row per surviving replicate; vector-valued
    estimators produce one column per component.
    """

    samples: np.ndarray
    n_failed: int

    def percentile_interval(self, coverage: float = 0.95):
        half = (1.0 - coverage) / 2.0
        lo = np.quantile(self.samples, half, axis=0)
        hi = np.quantile(self.samples, 1.0 - half, axis=0)
        if np.ndim(lo) == 0:
            return float(lo), float(hi)
        return lo, hi

    def one_sided_lower(self, nominal: float):
        """Lower bound of the one-sided interval [L, inf) with the given
        nominal coverage."""
        out = np.quantile(self.samples, 1.0 - nominal, axis=0)
        return float(out) if np.ndim(out) == 0 else out


def _resample_blocks(values: np.ndarray, block_len: int, rng) -> np.ndarray:
    n = values.size
    n_blocks = int(np.ceil(n / block_len))
    starts = rng.integers(0, n - block_len + 1, size=n_blocks)
    pieces = [values[s:s + block_len] for s in starts]
    return np.concatenate(pieces)[:n]


def _resample_seasons(series: TimeSeries, rng) -> TimeSeries:
    blocks = series.season_blocks()
    n = len(series)
    chosen = []
    total = 0
    while total < n:
        b = blocks[rng.integers(0, len(blocks))]
        chosen.append(b)
        total += b.size
    idx = np.concatenate(chosen)[:n]
    return TimeSeries(series.values[idx], seasons=series.seasons[idx])


def block_bootstrap(series, block_len: int | None, B: int, estimator,
                    seed: int = 0) -> BootstrapResult:
    """Moving-block bootstrap of an arbitrary series functional.

    When the series carries season labels, whole seasons are resampled so
    no block splits a season (``block_len`` is then ignored).  Estimator
    failures are recorded and the replicate dropped.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    rng = np.random.default_rng(seed)
    is_seasonal = isinstance(series, TimeSeries) and series.seasons is not None
    values = np.asarray(getattr(series, "values", series), dtype=float)
    if not is_seasonal:
        if block_len is None:
            block_len = max(1, values.size // 50)
        if not 1 <= block_len <= values.size:
            raise ValueError("block length must be in [1, len(series)]")
    samples = []
    n_failed = 0
    for _ in range(B):
        if is_seasonal:
            replicate = _resample_seasons(series, rng)
        else:
            replicate = TimeSeries(_resample_blocks(values, block_len, rng))
        try:
            samples.append(np.asarray(estimator(replicate), dtype=float))
        except Exception:
            n_failed += 1
    if not samples:
        raise NoExceedancesError("every bootstrap replicate failed")
    return BootstrapResult(samples=np.stack(samples), n_failed=n_failed)
