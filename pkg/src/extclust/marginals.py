"""Marginal tail model: empirical body, generalised Pareto tail, Laplace transform.

The composite distribution function uses the empirical CDF (rank/(n+1)
plotting positions, linearly interpolated) below a high threshold and a
generalised Pareto exceedance model above it, glued continuously at the
threshold.  The probability integral transform to standard Laplace margins
linearises conditional tail dependence and is the working scale for every
dependence model in this package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import FitConvergenceError, OutOfSupportError, TooFewExceedancesError

# Below this |shape| the GPD is evaluated through its exponential limit to
# avoid catastrophic cancellation in (1 + xi*z)**(-1/xi).
_XI_ZERO_TOL = 1e-8

_MIN_EXCEEDANCES = 10


@dataclass(frozen=True)
class GpdParams:
    """Generalised Pareto exceedance model above ``threshold`` (data units)."""

    scale: float
    shape: float
    threshold: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"GPD scale must be positive, got {self.scale}")


def gpd_survivor(p: GpdParams, x) -> np.ndarray | float:
    """Conditional survivor Pr(X > x | X > u) = (1 + xi*(x-u)/sigma)_+^(-1/xi).

    Uses the analytic exponential limit when |xi| < 1e-8 and clamps to 0
    beyond the upper endpoint when xi < 0.
    """
    x = np.asarray(x, dtype=float)
    z = (x - p.threshold) / p.scale
    if abs(p.shape) < _XI_ZERO_TOL:
        out = np.exp(-z)
    else:
        base = np.maximum(1.0 + p.shape * z, 0.0)
        out = base ** (-1.0 / p.shape)
    return out if out.ndim else float(out)


def gpd_quantile(p: GpdParams, prob) -> np.ndarray | float:
    """Quantile of the exceedance law: inverse of 1 - gpd_survivor."""
    prob = np.asarray(prob, dtype=float)
    s = 1.0 - prob
    if abs(p.shape) < _XI_ZERO_TOL:
        out = p.threshold - p.scale * np.log(s)
    else:
        out = p.threshold + p.scale * (s ** (-p.shape) - 1.0) / p.shape
    return out if out.ndim else float(out)


def gpd_neg_loglik(log_scale_shape, exceedances, threshold):
    """Mean negative GPD log-likelihood and gradient on (log sigma, xi)."""
    log_scale, shape = log_scale_shape
    scale = np.exp(log_scale)
    z = (np.asarray(exceedances, dtype=float) - threshold) / scale
    if abs(shape) < _XI_ZERO_TOL:
        nll = log_scale + np.mean(z)
        # d/dxi at xi=0 of the mean nll is mean(z^2)/2 - mean(z)
        grad = np.array([1.0 - np.mean(z), np.mean(z**2) / 2.0 - np.mean(z)])
        return nll, grad
    w = 1.0 + shape * z
    if np.any(w <= 0):
        return np.inf, np.array([0.0, 0.0])
    logw = np.log(w)
    nll = log_scale + (1.0 + 1.0 / shape) * np.mean(logw)
    d_logscale = 1.0 - (1.0 + shape) * np.mean(z / w)
    d_shape = -np.mean(logw) / shape**2 + (1.0 + 1.0 / shape) * np.mean(z / w)
    return nll, np.array([d_logscale, d_shape])


def fit_gpd(exceedances, threshold: float) -> GpdParams:
    """Maximum likelihood GPD fit over {sigma > 0, xi in (-1, 1)}.

    Starts from moment estimates on (log sigma, xi) and polishes with a
    bounded quasi-Newton step until the mean log-likelihood gradient is
    numerically stationary.
    """
    exceedances = np.asarray(exceedances, dtype=float)
    exceedances = exceedances[exceedances > threshold]
    if exceedances.size < _MIN_EXCEEDANCES:
        raise TooFewExceedancesError(
            f"need at least {_MIN_EXCEEDANCES} exceedances above {threshold}, "
            f"got {exceedances.size}"
        )
    excess = exceedances - threshold
    mean, var = excess.mean(), excess.var()
    shape0 = 0.5 * (1.0 - mean**2 / var) if var > 0 else 0.0
    shape0 = float(np.clip(shape0, -0.5, 0.5))
    scale0 = max(mean * (1.0 - shape0), 1e-8 * mean)

    best = None
    for s0 in (shape0, 0.0, 0.2):
        res = minimize(
            gpd_neg_loglik,
            x0=np.array([np.log(scale0), s0]),
            args=(exceedances, threshold),
            jac=True,
            method="L-BFGS-B",
            bounds=[(None, None), (-1.0 + 1e-9, 1.0 - 1e-9)],
            options={"maxiter": 500, "ftol": 1e-14, "gtol": 1e-12},
        )
        if best is None or res.fun < best.fun:
            best = res
    nll, grad = gpd_neg_loglik(best.x, exceedances, threshold)
    grad_norm = float(np.linalg.norm(grad))
    if not np.isfinite(nll) or grad_norm > 1e-5:
        raise FitConvergenceError(
            f"GPD likelihood maximisation did not converge "
            f"(gradient norm {grad_norm:.2e})",
            last_iterate=(float(np.exp(best.x[0])), float(best.x[1])),
            grad_norm=grad_norm,
        )
    return GpdParams(scale=float(np.exp(best.x[0])), shape=float(best.x[1]),
                     threshold=float(threshold))


@dataclass(frozen=True)
class MarginalModel:
    """Composite semiparametric CDF: empirical below the threshold, GPD above.

    ``tail_fraction`` is 1 - F~(u) under the rank/(n+1) convention, which
    makes the two branches meet continuously at the threshold.
    """

    sorted_values: np.ndarray
    gpd: GpdParams
    tail_fraction: float
    threshold_quantile: float

    @property
    def threshold(self) -> float:
        return self.gpd.threshold

    @property
    def _positions(self) -> np.ndarray:
        n = self.sorted_values.size
        return np.arange(1, n + 1) / (n + 1.0)

    def empirical_cdf(self, x) -> np.ndarray:
        """Interpolated rank/(n+1) empirical CDF of the sample."""
        return np.interp(np.asarray(x, dtype=float), self.sorted_values,
                         self._positions)

    def cdf(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        out = np.where(
            x < self.threshold,
            self.empirical_cdf(np.minimum(x, self.threshold)),
            1.0 - self.tail_fraction * np.asarray(gpd_survivor(self.gpd, np.maximum(x, self.threshold))),
        )
        return out if out.ndim else float(out)

    def quantile(self, prob) -> np.ndarray | float:
        prob = np.asarray(prob, dtype=float)
        glue = 1.0 - self.tail_fraction
        tail_prob = 1.0 - (1.0 - np.minimum(prob, 1 - 1e-300)) / self.tail_fraction
        out = np.where(
            prob <= glue,
            np.interp(prob, self._positions, self.sorted_values),
            gpd_quantile(self.gpd, np.maximum(tail_prob, 0.0)),
        )
        return out if out.ndim else float(out)

    def to_laplace(self, x):
        return to_laplace(self, x)

    def from_laplace(self, y):
        return from_laplace(self, y)


def fit_marginal(series, threshold_quantile: float) -> MarginalModel:
    """Fit the composite marginal model at the given threshold quantile."""
    values = np.asarray(getattr(series, "values", series), dtype=float)
    if values.size < 100:
        raise ValueError(f"series too short for marginal fitting: {values.size}")
    if not 0.5 < threshold_quantile < 1.0:
        raise ValueError("threshold quantile must be in (0.5, 1)")
    u = float(np.quantile(values, threshold_quantile))
    sorted_values = np.sort(values)
    gpd = fit_gpd(values[values > u], u)
    n = values.size
    positions = np.arange(1, n + 1) / (n + 1.0)
    tail_fraction = float(1.0 - np.interp(u, sorted_values, positions))
    return MarginalModel(sorted_values=sorted_values, gpd=gpd,
                         tail_fraction=tail_fraction,
                         threshold_quantile=float(threshold_quantile))


def laplace_from_uniform(p) -> np.ndarray | float:
    """Standard Laplace quantile of p in (0,1)."""
    p = np.asarray(p, dtype=float)
    out = np.where(p < 0.5, np.log(2.0 * p), -np.log(2.0 * (1.0 - p)))
    return out if out.ndim else float(out)


def uniform_from_laplace(y) -> np.ndarray | float:
    """Standard Laplace CDF."""
    y = np.asarray(y, dtype=float)
    out = np.where(y < 0, 0.5 * np.exp(y), 1.0 - 0.5 * np.exp(-y))
    return out if out.ndim else float(out)


def to_laplace(m: MarginalModel, x) -> np.ndarray | float:
    """Probability integral transform of data values to the Laplace scale."""
    p = np.asarray(m.cdf(x), dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise OutOfSupportError("value maps to CDF 0 or 1; Laplace image undefined")
    return laplace_from_uniform(p)


def from_laplace(m: MarginalModel, y) -> np.ndarray | float:
    """Inverse of :func:`to_laplace`.

    Exact (to float round-off) on the GPD branch; linear interpolation
    between order statistics on the empirical branch.
    """
    p = np.asarray(uniform_from_laplace(y), dtype=float)
    out = m.quantile(p)
    return out if np.ndim(out) else float(out)
