"""Clustering of extremes in stationary time series.

Marginal tail fitting, conditional tail dependence models (stepwise and
Bayesian semiparametric), and cluster-functional estimation with
uncertainty.
"""

from .dpmix import (Chain, MixtureState, Priors, residual_mixture_cdf,
                    run_chain, stick_break, truncation_error_bound)
from .functionals import (FunctionalEstimate, block_bootstrap, chi_model,
                          chi_posterior, cluster_max_dist, theta_model,
                          theta_posterior, theta_runs, theta_runs_value)
from .ht import HtParams, LagData, TieKind, TieStructure, kpt_feasible, residuals, z_of_level
from .marginals import (GpdParams, MarginalModel, fit_gpd, fit_marginal,
                        from_laplace, gpd_survivor, to_laplace)
from .series import TimeSeries, ingest_csv
from .simulate import (Ar1Spec, HtSimSpec, ht_truth_gaussian, sim_ar1, sim_ht,
                       true_theta_ar1)
from .stepwise import StepwiseFit, fit_stepwise, sample_conditional
from .studies import StudyDesign, run_study

__version__ = "0.1.0"

__all__ = [
    "Ar1Spec", "Chain", "FunctionalEstimate", "GpdParams", "HtParams",
    "HtSimSpec", "LagData", "MarginalModel", "MixtureState", "Priors",
    "StepwiseFit", "StudyDesign", "TieKind", "TieStructure", "TimeSeries",
    "block_bootstrap", "chi_model", "chi_posterior", "cluster_max_dist",
    "fit_gpd", "fit_marginal", "fit_stepwise", "from_laplace", "gpd_survivor",
    "ht_truth_gaussian", "ingest_csv", "kpt_feasible", "residual_mixture_cdf",
    "residuals", "run_chain", "run_study", "sample_conditional", "sim_ar1",
    "sim_ht", "stick_break", "theta_model", "theta_posterior", "theta_runs",
    "theta_runs_value", "to_laplace", "true_theta_ar1",
    "truncation_error_bound", "z_of_level",
]
