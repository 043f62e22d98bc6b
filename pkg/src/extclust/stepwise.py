"""Two-stage conditional tail inference with a Gaussian working likelihood.

Stage one maximises, separately for each lag j, the working likelihood

    Y_j | Y_0 = y  ~  Normal(alpha_j*y + y**beta_j * mu_j,  y**(2*beta_j) * psi_j^2)

over feasible (alpha_j, beta_j) in [0,1]^2, with the nuisance location and
scale profiled out in closed form.  Stage two freezes the parameter
estimates and keeps the joint empirical distribution of the standardised
residual rows for later resampling.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import FitConvergenceError
from .ht import (HtParams, LagData, ResidualEnvelope, bound_references,
                 default_reference_level, kpt_feasible, residuals)

_MIN_POINTS = 20
_INFEASIBLE = 1e12


@dataclass(frozen=True)
class StepwiseFit:
    """Stage-one parameter estimates plus the empirical residual cloud."""

    params: HtParams
    mu: np.ndarray
    psi: np.ndarray
    residual_cloud: np.ndarray
    u: float
    warnings: tuple = field(default=())


def _profiled_nll(alpha, beta, y0, yj, log_y0):
    """Working negative log-likelihood with (mu, psi) profiled out.

    Returns (nll, mu_hat, psi_hat); additive constants dropped.
    """
    r = (yj - alpha * y0) / y0**beta
    mu = r.mean()
    var = r.var()
    if var <= 0:
        return np.inf, mu, 0.0
    n = y0.size
    nll = beta * log_y0.sum() + 0.5 * n * np.log(var)
    return nll, mu, float(np.sqrt(var))


def _fit_one_lag(y0, yj, ad_max, nad_min, v, constraints_on, seeds_per_axis=11):
    log_y0 = np.log(y0)

    def objective(theta):
        a, b = theta
        if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
            return _INFEASIBLE
        nll, _, _ = _profiled_nll(a, b, y0, yj, log_y0)
        if not np.isfinite(nll):
            return _INFEASIBLE
        if constraints_on:
            r = (yj - a * y0) / y0**b
            env = ResidualEnvelope(
                z_min=np.array([r.min()]), z_max=np.array([r.max()]),
                ad_max=np.array([ad_max]), nad_min=np.array([nad_min]),
            )
            if not kpt_feasible(HtParams(np.array([a]), np.array([b])), env, v):
                return _INFEASIBLE
        return nll

    grid = np.linspace(0.0, 1.0, seeds_per_axis)
    grid_vals = np.array([[objective((a, b)) for b in grid] for a in grid])
    order = np.argsort(grid_vals, axis=None)
    best_val, best_x = np.inf, None
    n_starts = 0
    for flat in order:
        if n_starts >= 3:
            break
        ia, ib = np.unravel_index(flat, grid_vals.shape)
        if grid_vals[ia, ib] >= _INFEASIBLE:
            break
        n_starts += 1
        res = minimize(objective, x0=np.array([grid[ia], grid[ib]]),
                       method="Nelder-Mead",
                       bounds=[(0.0, 1.0), (0.0, 1.0)],
                       options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000})
        if res.fun < best_val:
            best_val, best_x = res.fun, res.x
    if best_x is None or best_val >= _INFEASIBLE:
        raise FitConvergenceError(
            "no feasible optimum found for lag working likelihood",
            last_iterate=None if best_x is None else tuple(best_x),
        )
    a, b = float(best_x[0]), float(best_x[1])
    _, mu, psi = _profiled_nll(a, b, y0, yj, log_y0)
    return a, b, mu, psi


def fit_stepwise(d: LagData, constraints_on: bool = True) -> StepwiseFit:
    """Per-lag working-likelihood maximisation followed by residual collection.

    A lag whose optimizer fails is reported in ``warnings`` and falls back
    to (alpha, beta) = (0, 0); the fit continues for the other lags.
    """
    if d.n < _MIN_POINTS:
        raise ValueError(f"need at least {_MIN_POINTS} exceedances per lag, got {d.n}")
    v = default_reference_level(d)
    ad_max, nad_min = bound_references(d)
    alpha = np.zeros(d.m)
    beta = np.zeros(d.m)
    mu = np.zeros(d.m)
    psi = np.ones(d.m)
    notes = []
    for j in range(d.m):
        try:
            alpha[j], beta[j], mu[j], psi[j] = _fit_one_lag(
                d.y0, d.lags[:, j], ad_max[j], nad_min[j], v,
                constraints_on,
            )
        except FitConvergenceError as exc:
            notes.append(f"lag {j + 1}: {exc}")
            r = d.lags[:, j]
            mu[j], psi[j] = r.mean(), r.std()
    if notes:
        warnings.warn("stepwise fit issues: " + "; ".join(notes))
    params = HtParams(alpha=alpha, beta=beta)
    return StepwiseFit(params=params, mu=mu, psi=psi,
                       residual_cloud=residuals(d, params), u=d.u,
                       warnings=tuple(notes))


@dataclass(frozen=True)
class ConditionalSample:
    """Simulated trajectories above a Laplace level, on the Laplace scale."""

    y0: np.ndarray
    lags: np.ndarray

    def to_original(self, marg) -> tuple[np.ndarray, np.ndarray]:
        """Map both the conditioning values and companions back to data units."""
        from .marginals import from_laplace

        return (np.asarray(from_laplace(marg, self.y0)),
                np.asarray(from_laplace(marg, self.lags)))


def sample_conditional(fit: StepwiseFit, x: float, R: int, rng) -> ConditionalSample:
    """Draw R trajectories conditional on the series exceeding Laplace level x.

    The conditioning value follows the Laplace-scale exceedance law above x
    (a unit-exponential excess), the residual is a whole row drawn uniformly
    from the empirical cloud (preserving cross-lag dependence), and the
    companions come from the fitted forward model.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    if x < fit.u:
        raise ValueError(f"level {x} is below the model threshold {fit.u}")
    y0 = x + rng.exponential(size=R)
    rows = rng.integers(0, fit.residual_cloud.shape[0], size=R)
    z = fit.residual_cloud[rows]
    lags = fit.params.alpha[None, :] * y0[:, None] \
        + y0[:, None] ** fit.params.beta[None, :] * z
    return ConditionalSample(y0=y0, lags=lags)
