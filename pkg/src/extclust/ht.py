"""Conditional tail regression core: parameters, residuals, feasibility.

The working model on the Laplace scale is, for each lag j,

    Y_j | Y_0 = y   =   alpha_j * y + y**beta_j * Z_j,     y > u,

with (alpha_j, beta_j) in [0,1]^2 and Z the lag-residual vector.  This
module holds the parameter containers (including the Markov tying
structures that collapse the 2m parameters to 1 or 2), the residual
algebra, and the conditional-quantile ordering constraints used to reject
incoherent parameter combinations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


@dataclass(frozen=True)
class HtParams:
    """Per-lag conditional regression parameters, both vectors of length m."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if alpha.shape != beta.shape or alpha.ndim != 1:
            raise ValueError("alpha and beta must be equal-length vectors")
        if np.any((alpha < 0) | (alpha > 1)) or np.any((beta < 0) | (beta > 1)):
            raise ValueError("alpha and beta components must lie in [0, 1]")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def m(self) -> int:
        return self.alpha.size


class TieKind(Enum):
    """Markov parameter structures for the per-lag (alpha_j, beta_j)."""

    FREE = "free"                        # 2m free parameters
    MARKOV_GEOMETRIC = "markov_geometric"  # alpha_j = alpha**j, beta_j = beta
    MARKOV_BETA_POWER = "markov_beta_power"  # alpha_j = 0, beta_j = beta**j


@dataclass(frozen=True)
class TieStructure:
    """Maps free parameters in [0,1]^k to the full per-lag vectors."""

    kind: TieKind
    m: int

    @property
    def n_free(self) -> int:
        if self.kind is TieKind.FREE:
            return 2 * self.m
        if self.kind is TieKind.MARKOV_GEOMETRIC:
            return 2
        return 1

    def expand(self, free: np.ndarray) -> HtParams:
        free = np.asarray(free, dtype=float)
        if free.shape != (self.n_free,):
            raise ValueError(f"expected {self.n_free} free parameters, got {free.shape}")
        j = np.arange(1, self.m + 1)
        if self.kind is TieKind.FREE:
            return HtParams(alpha=free[: self.m], beta=free[self.m:])
        if self.kind is TieKind.MARKOV_GEOMETRIC:
            return HtParams(alpha=free[0] ** j, beta=np.full(self.m, free[1]))
        return HtParams(alpha=np.zeros(self.m), beta=free[0] ** j)

    def collapse(self, params: HtParams) -> np.ndarray:
        """Free parameters of a vector lying in this structure."""
        if self.kind is TieKind.FREE:
            return np.concatenate([params.alpha, params.beta])
        if self.kind is TieKind.MARKOV_GEOMETRIC:
            return np.array([params.alpha[0], params.beta[0]])
        return np.array([params.beta[0]])


@dataclass(frozen=True)
class LagData:
    """Conditioning exceedances paired with their m lagged companions.

    All values are on the Laplace scale; every conditioning value exceeds
    the dependence threshold ``u`` and rows with incomplete lag windows
    have been dropped.
    """

    y0: np.ndarray
    lags: np.ndarray
    u: float

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=float)
        lags = np.asarray(self.lags, dtype=float)
        if lags.ndim != 2 or lags.shape[0] != y0.size:
            raise ValueError("lags must be an (n, m) matrix aligned with y0")
        if y0.size < 1:
            raise ValueError("need at least one conditioning exceedance")
        if np.any(y0 <= self.u):
            raise ValueError("all conditioning values must exceed the threshold")
        if not (np.all(np.isfinite(y0)) and np.all(np.isfinite(lags))):
            raise ValueError("lag data must be finite (incomplete windows are dropped)")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "lags", lags)

    @property
    def n(self) -> int:
        return self.y0.size

    @property
    def m(self) -> int:
        return self.lags.shape[1]

    @classmethod
    def from_laplace_series(cls, y: np.ndarray, u: float, m: int) -> "LagData":
        """Collect (Y_t, Y_{t+1..t+m}) rows for every exceedance Y_t > u."""
        y = np.asarray(y, dtype=float)
        idx = np.flatnonzero(y > u)
        idx = idx[idx + m <= y.size - 1]
        if idx.size == 0:
            raise ValueError("no exceedances with a complete lag window")
        lags = np.stack([y[idx + j] for j in range(1, m + 1)], axis=1)
        return cls(y0=y[idx], lags=lags, u=float(u))


def residuals(d: LagData, p: HtParams) -> np.ndarray:
    """Standardised residual matrix Z[i,j] = (lag_ij - alpha_j*y0_i) / y0_i**beta_j."""
    y0 = d.y0[:, None]
    return (d.lags - p.alpha[None, :] * y0) / y0 ** p.beta[None, :]


def forward_model(y0: np.ndarray, z: np.ndarray, p: HtParams) -> np.ndarray:
    """Inverse of :func:`residuals`: lag values from conditioning values and residuals."""
    y0 = np.asarray(y0, dtype=float)[:, None]
    return p.alpha[None, :] * y0 + y0 ** p.beta[None, :] * np.asarray(z, dtype=float)


def z_of_level(x: float, y, p: HtParams) -> np.ndarray:
    """z_j(x, y) = (x - alpha_j*y) / y**beta_j at a common Laplace level x.

    ``y`` may be a scalar (returns an m-vector) or a vector of length R
    (returns an (R, m) matrix).
    """
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))[:, None]
    z = (x - p.alpha[None, :] * y_arr) / y_arr ** p.beta[None, :]
    return z[0] if np.ndim(y) == 0 else z


@dataclass(frozen=True)
class ResidualEnvelope:
    """Per-lag extremes of the current fitted residuals, plus the bound
    references derived from the data alone: ``ad_max`` is the largest
    residual of the perfect positive-dependence model (lag minus
    conditioning value) and ``nad_min`` the smallest residual of the
    perfect negative-dependence model (lag plus conditioning value)."""

    z_min: np.ndarray
    z_max: np.ndarray
    ad_max: np.ndarray
    nad_min: np.ndarray


def residual_envelope(d: LagData, p: HtParams) -> ResidualEnvelope:
    z = residuals(d, p)
    return ResidualEnvelope(
        z_min=z.min(axis=0), z_max=z.max(axis=0),
        ad_max=(d.lags - d.y0[:, None]).max(axis=0),
        nad_min=(d.lags + d.y0[:, None]).min(axis=0),
    )


def bound_references(d: LagData) -> tuple[np.ndarray, np.ndarray]:
    """(ad_max, nad_min) per lag; fixed by the data, independent of params."""
    return ((d.lags - d.y0[:, None]).max(axis=0),
            (d.lags + d.y0[:, None]).min(axis=0))


def _min_gap_ok(lin, beta, z, ref, v, tol):
    """True when D(y) = lin*y - y**beta * z + ref >= -tol on [v, inf).

    ``lin`` >= 0.  D is convex in y for z > 0, so its minimum over
    [v, inf) is at v or at the stationary point
    y* = (beta*z/lin)**(1/(1-beta)).
    """
    def gap(y):
        return lin * y - y**beta * z + ref

    if z <= 0 or beta == 0.0:
        # D is nondecreasing on y > 0
        if lin == 0.0 and beta == 0.0:
            return ref - z >= -tol
        if lin == 0.0:
            return ref >= -tol if z <= 0 else False
        return gap(v) >= -tol
    if lin == 0.0:
        return False  # D decreases without bound
    if beta == 1.0:
        if lin - z < 0:
            return False
        return gap(v) >= -tol
    log_y_star = math.log(beta * z / lin) / (1.0 - beta)
    if log_y_star <= math.log(v):
        return gap(v) >= -tol
    # interior minimum beyond v: D(y*) = ref - z*(1-beta)*y_star**beta
    log_term = math.log(z * (1.0 - beta)) + beta * log_y_star
    if log_term > 700.0:
        return False
    return ref - math.exp(log_term) >= -tol


def kpt_feasible(p: HtParams, env: ResidualEnvelope, v: float,
                 enabled: bool = True, tol: float = 1e-9) -> bool:
    """Conditional-quantile ordering check for (alpha, beta).

    Two-sided test per lag: at and beyond the reference level ``v``, the
    fitted quantile curve through the residual maximum must not cross
    above the perfect positive-dependence bound curve y + ad_max, and the
    curve through the residual minimum must not cross below the perfect
    negative-dependence bound curve -y + nad_min, so the three model
    classes keep their quantile ordering.  Parameter combinations failing
    the check receive zero likelihood in the samplers.
    """
    if not enabled:
        return True
    for j in range(p.m):
        a, b = float(p.alpha[j]), float(p.beta[j])
        upper = _min_gap_ok(1.0 - a, b, float(env.z_max[j]),
                            float(env.ad_max[j]), v, tol)
        lower = _min_gap_ok(1.0 + a, b, -float(env.z_min[j]),
                            -float(env.nad_min[j]), v, tol)
        if not (upper and lower):
            return False
    return True


def default_reference_level(d: LagData) -> float:
    """Constraint reference level: maximum observed conditioning value plus
    one Laplace unit."""
    return float(d.y0.max()) + 1.0
