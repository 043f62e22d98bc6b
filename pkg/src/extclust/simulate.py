"""Data generators and ground-truth oracles for validation studies.

Provides direct simulation from the conditional tail model, Gaussian-copula
AR(1) series with a choice of margins, exact margin transforms for use in
place of fitted marginal models, and a brute-force evaluator of the true
threshold-based extremal index of the AR(1) process via randomized
quasi-Monte Carlo integration of Gaussian orthant probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from .marginals import laplace_from_uniform
from .series import TimeSeries


@dataclass(frozen=True)
class Ar1Spec:
    """First-order autoregression with Gaussian copula.

    ``margins`` selects the observation scale: 'gaussian' keeps the
    standard normal margins, 'exponential' applies the probability
    integral transform to unit-exponential margins.
    """

    rho: float
    n: int
    margins: str = "exponential"

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be below 1")
        if self.n < 2:
            raise ValueError("need at least two observations")
        if self.margins not in ("gaussian", "exponential"):
            raise ValueError("margins must be 'gaussian' or 'exponential'")


def sim_ar1(spec: Ar1Spec, seed: int = 0) -> TimeSeries:
    """Simulate the stationary AR(1) recursion X_{t+1} = rho*X_t + eps_t
    with eps iid N(0, 1 - rho^2), optionally transformed to exponential
    margins."""
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(spec.n) * np.sqrt(1.0 - spec.rho**2)
    x = np.empty(spec.n)
    x[0] = rng.standard_normal()
    for t in range(1, spec.n):
        x[t] = spec.rho * x[t - 1] + eps[t]
    if spec.margins == "exponential":
        # survival-side transform keeps precision deep in the upper tail
        x = -np.log(ndtr(-x))
    return TimeSeries(x)


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    loc: float
    scale: float
    family: str = "gaussian"

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("component scale must be positive")
        if self.family not in ("gaussian", "laplace"):
            raise ValueError("family must be 'gaussian' or 'laplace'")


@dataclass(frozen=True)
class HtSimSpec:
    """Exact generator of the bivariate conditional tail model:
    X = u + Exp(1), Z from the stated mixture, Y = alpha*X + X**beta * Z."""

    alpha: float
    beta: float
    u: float
    residual_mix: tuple[MixtureComponent, ...]
    n: int

    def __post_init__(self):
        if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1):
            raise ValueError("alpha and beta must lie in [0, 1]")
        total = sum(c.weight for c in self.residual_mix)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {total}, not 1")


def sample_mixture(mix: tuple[MixtureComponent, ...], n: int, rng) -> np.ndarray:
    weights = np.array([c.weight for c in mix])
    which = rng.choice(len(mix), size=n, p=weights)
    out = np.empty(n)
    for k, comp in enumerate(mix):
        sel = which == k
        cnt = int(sel.sum())
        if cnt == 0:
            continue
        if comp.family == "gaussian":
            out[sel] = comp.loc + comp.scale * rng.standard_normal(cnt)
        else:
            out[sel] = rng.laplace(comp.loc, comp.scale, size=cnt)
    return out


def sim_ht(spec: HtSimSpec, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Draw n pairs (X, Y) from the conditional model above its threshold."""
    rng = np.random.default_rng(seed)
    x = spec.u + rng.exponential(size=spec.n)
    z = sample_mixture(spec.residual_mix, spec.n, rng)
    y = spec.alpha * x + x**spec.beta * z
    return x, y


def ht_truth_gaussian(rho: float, j: int) -> tuple[float, float]:
    """Limit conditional-regression parameters of the Gaussian AR(1):
    alpha_j = sign(rho) * rho**(2j), beta_j = 1/2."""
    if not abs(rho) < 1:
        raise ValueError("|rho| must be below 1")
    return float(np.sign(rho) * rho ** (2 * j)), 0.5


def gaussian_residual_sd(rho: float, j: int = 1) -> float:
    """Limit residual standard deviation for lag j of the Gaussian AR(1),
    from the stated variances rho**(2j) * (1 - rho**(2j))."""
    return float(np.sqrt(rho ** (2 * j) * (1.0 - rho ** (2 * j))))


# ---------------------------------------------------------------------------
# exact margin transforms (drop-in for a fitted marginal model in studies)


class GaussianMargin:
    """Exact standard-normal margin transform."""

    def cdf(self, x):
        return ndtr(np.asarray(x, dtype=float))

    def to_laplace(self, x):
        x = np.asarray(x, dtype=float)
        upper = ndtr(-x)  # survival function, exact in the tail
        out = np.where(x >= 0, -np.log(2.0 * upper),
                       laplace_from_uniform(ndtr(np.minimum(x, 0.0))))
        return out if out.ndim else float(out)

    def from_laplace(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where(y >= 0, -ndtri(0.5 * np.exp(-np.maximum(y, 0.0))),
                       ndtri(0.5 * np.exp(np.minimum(y, 0.0))))
        return out if out.ndim else float(out)


class ExponentialMargin:
    """Exact unit-exponential margin transform."""

    def cdf(self, x):
        return -np.expm1(-np.asarray(x, dtype=float))

    def to_laplace(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= np.log(2.0), x - np.log(2.0),
                       np.log(2.0 * -np.expm1(-np.minimum(x, np.log(2.0)))))
        return out if out.ndim else float(out)

    def from_laplace(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where(y >= 0, y + np.log(2.0),
                       -np.log1p(-0.5 * np.exp(np.minimum(y, 0.0))))
        return out if out.ndim else float(out)


def gaussian_quantile(prob: float) -> float:
    return float(ndtri(prob))


def exponential_quantile(prob: float) -> float:
    return float(-np.log1p(-prob))


# ---------------------------------------------------------------------------
# ground truth for the AR(1) extremal index


@dataclass(frozen=True)
class TrueTheta:
    """Oracle value with its Monte Carlo standard error."""

    value: float
    se: float


def _orthant_qmc(rho: float, x: float, m: int, n_points: int, reps: int,
                 rng) -> tuple[float, float]:
    """Randomized-QMC estimate of Pr(X0 > x, X1 <= x, ..., Xm <= x) for the
    standard Gaussian AR(1), by sequential conditioning along a Cholesky
    factor with scrambled Sobol points."""
    d = m + 1
    lagmat = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    cov = rho**lagmat
    signs = np.ones(d)
    signs[0] = -1.0  # flip X0 so the event is a lower orthant
    cov = cov * np.outer(signs, signs)
    upper = np.full(d, x)
    upper[0] = -x
    chol = np.linalg.cholesky(cov)
    estimates = np.empty(reps)
    for r in range(reps):
        sob = qmc.Sobol(max(d - 1, 1), scramble=True, seed=rng)
        u = sob.random(n_points)
        f = np.full(n_points, ndtr(upper[0] / chol[0, 0]))
        y = np.zeros((n_points, d - 1))
        prev_e = np.full(n_points, ndtr(upper[0] / chol[0, 0]))
        for i in range(1, d):
            yi = ndtri(np.clip(u[:, i - 1] * prev_e, 1e-300, 1 - 1e-16))
            y[:, i - 1] = yi
            shift = y[:, :i] @ chol[i, :i]
            ei = ndtr((upper[i] - shift) / chol[i, i])
            f *= ei
            prev_e = ei
        estimates[r] = f.mean()
    return float(estimates.mean()), float(estimates.std(ddof=1) / np.sqrt(reps))


def true_theta_ar1(rho: float, x_quantile: float, m: int,
                   target_se: float = 1e-4, seed: int = 0,
                   max_points: int = 2**18) -> TrueTheta:
    """True theta(x, m) of the Gaussian-copula AR(1) at a marginal quantile,
    as the ratio of multivariate normal orthant probabilities.

    Evaluated by randomized quasi-Monte Carlo over independent scrambled
    replications until the reported standard error (of the ratio) meets
    ``target_se``.  Exact for rho = 0.
    """
    if m < 1 or m > 10:
        raise ValueError("run length must be in [1, 10] for the oracle")
    if not 0 < x_quantile < 1:
        raise ValueError("x_quantile must be in (0, 1)")
    x = float(ndtri(x_quantile))
    tail = float(ndtr(-x))
    if rho == 0.0:
        return TrueTheta(value=float(ndtr(x) ** m), se=0.0)
    rng = np.random.default_rng(seed)
    n_points = 4096
    while True:
        num, num_se = _orthant_qmc(rho, x, m, n_points, reps=12, rng=rng)
        value, se = num / tail, num_se / tail
        if se <= target_se or n_points >= max_points:
            return TrueTheta(value=float(value), se=float(se))
        n_points *= 2


def ar1_exact_conditional_evaluator(rho: float):
    """Exact lag-1 residual-CDF evaluator for the Gaussian-copula AR(1).

    For conditioning Laplace value y and residual coordinate z, returns the
    exact Pr(Z <= z | Y0 = y) implied by the bivariate Gaussian copula and
    the limit normalisation (alpha, beta) = (rho^2, 1/2).  Makes the theta
    integral an identity, which pins down the Monte Carlo machinery.
    """
    alpha, beta = ht_truth_gaussian(rho, 1)
    margin = GaussianMargin()

    def evaluate(z, y):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        y = np.asarray(y, dtype=float)
        y1 = alpha * y + y**beta * z[:, 0]
        x1 = margin.from_laplace(y1)
        x0 = margin.from_laplace(y)
        return ndtr((x1 - rho * x0) / np.sqrt(1.0 - rho**2))
    return evaluate


def gaussian_residual_law_evaluator(rho: float):
    """Limit lag-1 residual CDF of the Gaussian AR(1) (centred normal with
    the stated limit variance); converges to the exact conditional law only
    as the conditioning level grows."""
    sd = gaussian_residual_sd(rho, 1)

    def evaluate(z, y=None):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return ndtr(z[:, 0] / sd)
    return evaluate
