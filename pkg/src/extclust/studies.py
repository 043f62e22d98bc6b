"""Replicated simulation studies: RMSE comparisons and coverage error.

A study simulates many series from a known process, runs the empirical,
stepwise and Bayesian estimators on each, and aggregates accuracy against
the brute-force ground truth.  Every replicate is seeded independently and
checkpointed to its own JSON file, so an interrupted study resumes where
it stopped and reruns are bit-identical.
"""
from __future__ import annotations

import json
import multiprocessing
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import io as artifact_io
from .dpmix import Priors, run_chain
from .errors import ConfigError, ExtclustError
from .functionals import (block_bootstrap, empirical_cloud_cdf_evaluator,
                          theta_model_grid, theta_posterior_matrix,
                          theta_runs_value)
from .ht import LagData, TieKind, TieStructure
from .marginals import fit_marginal
from .series import TimeSeries
from .simulate import (Ar1Spec, HtSimSpec, MixtureComponent, TrueTheta,
                       exponential_quantile, gaussian_quantile, sim_ar1,
                       sim_ht, true_theta_ar1)
from .stepwise import fit_stepwise


@dataclass(frozen=True)
class StudyDesign:
    """Configuration of one replicated study.

    ``kind`` is 'ar1' (theta accuracy and coverage against the orthant
    oracle) or 'ht_bivariate' (recovery of alpha and beta from the exact
    conditional-model generator).
    """

    kind: str = "ar1"
    n_replicates: int = 50
    seed: int = 0
    # series
    rho: float = 0.5
    n: int = 8000
    margins: str = "exponential"
    # ht_bivariate generator
    alpha: float = 0.7
    beta: float = 0.3
    residual_mix: tuple = (
        (0.5, -1.2, 0.3, "laplace"),
        (0.5, 1.2, 0.3, "laplace"),
    )
    n_pairs: int = 400
    # thresholds and functional settings
    marginal_quantile: float = 0.95
    dependence_quantile: float = 0.95
    m: int = 1
    level_quantiles: tuple = (0.98, 0.9999)
    R: int = 20000
    # inference settings
    tie: str = "free"
    constraints_on: bool = True
    iters: int = 4000
    burn_in: int = 1500
    thin: int = 10
    trunc: int = 60
    priors: dict = field(default_factory=dict)
    # uncertainty settings
    bootstrap_B: int = 200
    block_len: int = 200
    coverage_nominals: tuple = (0.25, 0.5, 0.75)
    truth_se: float = 2e-5

    def __post_init__(self):
        if self.kind not in ("ar1", "ht_bivariate"):
            raise ConfigError(f"unknown study kind {self.kind!r}")
        if self.n_replicates < 2:
            raise ConfigError("need at least two replicates")
        if self.dependence_quantile < self.marginal_quantile:
            raise ConfigError(
                "dependence threshold quantile must not undercut the marginal one")

    @classmethod
    def from_json(cls, path) -> "StudyDesign":
        with open(path) as fh:
            raw = json.load(fh)
        raw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
        return cls(**raw)


def _mixture_from_design(design: StudyDesign) -> tuple[MixtureComponent, ...]:
    return tuple(MixtureComponent(weight=w, loc=l, scale=s, family=f)
                 for (w, l, s, f) in design.residual_mix)


def _priors_from_design(design: StudyDesign) -> Priors:
    return Priors(trunc=design.trunc, **design.priors)


def _tie_structure(design: StudyDesign) -> TieStructure:
    return TieStructure(kind=TieKind(design.tie), m=design.m)


def _replicate_seed(design: StudyDesign, index: int) -> int:
    child = np.random.SeedSequence(design.seed).spawn(design.n_replicates)[index]
    return int(child.generate_state(1)[0])


def _stepwise_theta_estimator(design: StudyDesign, levels):
    """Full stepwise pipeline as a series functional, for the bootstrap."""
    def estimate(series) -> np.ndarray:
        values = series.values if isinstance(series, TimeSeries) else np.asarray(series)
        marg = fit_marginal(values, design.marginal_quantile)
        lap = np.asarray(marg.to_laplace(values))
        u_dep = float(marg.to_laplace(
            np.quantile(values, design.dependence_quantile)))
        data = LagData.from_laplace_series(lap, u_dep, design.m)
        fit = fit_stepwise(data, constraints_on=design.constraints_on)
        G = empirical_cloud_cdf_evaluator(fit.residual_cloud)
        rng = np.random.default_rng(0)  # common randomness across replicates
        return theta_model_grid(G, fit.params, marg, levels, design.m,
                                design.R, rng)
    return estimate


def run_ar1_replicate(design: StudyDesign, index: int) -> dict:
    """One AR(1) replicate: simulate, fit all methods, estimate theta."""
    seed = _replicate_seed(design, index)
    rng = np.random.default_rng(seed)
    series = sim_ar1(Ar1Spec(rho=design.rho, n=design.n, margins=design.margins),
                     seed=seed)
    quantile = exponential_quantile if design.margins == "exponential" \
        else gaussian_quantile
    levels = np.array([quantile(q) for q in design.level_quantiles])

    out = {"replicate": index, "seed": seed, "levels": levels.tolist(),
           "level_quantiles": list(design.level_quantiles)}

    theta_emp = []
    for x in levels:
        try:
            theta_emp.append(theta_runs_value(series.values, x, design.m))
        except ExtclustError:
            theta_emp.append(None)
    out["empirical"] = theta_emp

    marg = fit_marginal(series.values, design.marginal_quantile)
    lap = np.asarray(marg.to_laplace(series.values))
    u_dep = float(marg.to_laplace(
        np.quantile(series.values, design.dependence_quantile)))
    data = LagData.from_laplace_series(lap, u_dep, design.m)

    fit = fit_stepwise(data, constraints_on=design.constraints_on)
    G = empirical_cloud_cdf_evaluator(fit.residual_cloud)
    theta_sw = theta_model_grid(G, fit.params, marg, levels, design.m,
                                design.R, np.random.default_rng(0))
    out["stepwise"] = theta_sw.tolist()
    out["stepwise_params"] = {"alpha": fit.params.alpha.tolist(),
                              "beta": fit.params.beta.tolist()}

    if design.bootstrap_B > 0:
        boot = block_bootstrap(
            series, design.block_len, design.bootstrap_B,
            _stepwise_theta_estimator(design, levels),
            seed=int(rng.integers(2**31)),
        )
        out["stepwise_bootstrap"] = np.atleast_2d(boot.samples).tolist()
        out["bootstrap_failed"] = boot.n_failed

    chain = run_chain(data, _priors_from_design(design), _tie_structure(design),
                      iters=design.iters, burn_in=design.burn_in,
                      thin=design.thin, seed=seed,
                      constraints_on=design.constraints_on)
    matrix, _ = theta_posterior_matrix(chain, marg, levels, design.m,
                                       design.R, seed=0)
    out["bayes_states"] = matrix.tolist()
    out["bayes"] = np.median(matrix, axis=0).tolist()
    out["acceptance"] = chain.acceptance
    return out


def run_bivariate_replicate(design: StudyDesign, index: int) -> dict:
    """One conditional-model replicate: recover (alpha, beta) both ways."""
    seed = _replicate_seed(design, index)
    u = 3.0
    spec = HtSimSpec(alpha=design.alpha, beta=design.beta, u=u,
                     residual_mix=_mixture_from_design(design), n=design.n_pairs)
    x, y = sim_ht(spec, seed=seed)
    data = LagData(y0=x, lags=y[:, None], u=u)
    fit = fit_stepwise(data, constraints_on=design.constraints_on)
    chain = run_chain(data, _priors_from_design(design), _tie_structure(design),
                      iters=design.iters, burn_in=design.burn_in,
                      thin=design.thin, seed=seed,
                      constraints_on=design.constraints_on)
    alphas = np.array([s.ht.alpha[0] for s in chain.states])
    betas = np.array([s.ht.beta[0] for s in chain.states])
    occupied = np.array([s.occupied() for s in chain.states])
    return {
        "replicate": index, "seed": seed,
        "stepwise": {"alpha": float(fit.params.alpha[0]),
                     "beta": float(fit.params.beta[0])},
        "bayes": {"alpha": float(np.median(alphas)),
                  "beta": float(np.median(betas))},
        "occupied_counts": np.bincount(occupied, minlength=8).tolist(),
        "acceptance": chain.acceptance,
    }


def _replicate_path(out_dir, index: int) -> str:
    return os.path.join(out_dir, "replicates", f"rep_{index:04d}.json")


def _run_one(args):
    design, index, out_dir = args
    path = _replicate_path(out_dir, index)
    if os.path.exists(path):
        with open(path) as fh:
            return json.load(fh)
    if design.kind == "ar1":
        result = run_ar1_replicate(design, index)
    else:
        result = run_bivariate_replicate(design, index)
    artifact_io.write_json_atomic(path, result)
    return result


def run_study(design: StudyDesign, out_dir, workers: int = 1) -> dict:
    """Run (or resume) every replicate, then aggregate a study report.

    Checkpoints one JSON per replicate under ``out_dir/replicates`` and
    writes the aggregated report to ``out_dir/report.json`` plus tidy CSV
    tables.
    """
    os.makedirs(os.path.join(out_dir, "replicates"), exist_ok=True)
    jobs = [(design, i, out_dir) for i in range(design.n_replicates)]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_run_one, jobs)
    else:
        results = [_run_one(job) for job in jobs]
    if design.kind == "ar1":
        report = aggregate_ar1(design, results, out_dir)
    else:
        report = aggregate_bivariate(design, results)
    artifact_io.write_json_atomic(os.path.join(out_dir, "report.json"), report)
    _write_report_tables(design, report, out_dir)
    return report


def _rmse(estimates, truth) -> float:
    err = np.asarray(estimates, dtype=float) - truth
    return float(np.sqrt(np.mean(err**2)))


def aggregate_ar1(design: StudyDesign, results: list, out_dir) -> dict:
    """RMSE per method and level, pairwise ratios, one-sided coverage error."""
    truth_path = os.path.join(out_dir, "truth.json")
    if os.path.exists(truth_path):
        with open(truth_path) as fh:
            truths = {float(k): TrueTheta(**v) for k, v in json.load(fh).items()}
    else:
        truths = {q: true_theta_ar1(design.rho, q, design.m,
                                    target_se=design.truth_se)
                  for q in design.level_quantiles}
        artifact_io.write_json_atomic(
            truth_path, {str(q): asdict(t) for q, t in truths.items()})

    report = {"design": _design_dict(design), "n_replicates": len(results),
              "levels": {}}
    for i, q in enumerate(design.level_quantiles):
        truth = truths[q]
        entry = {"truth": truth.value, "truth_se": truth.se, "rmse": {},
                 "rmse_ratio_vs_bayes": {}, "coverage": {}}
        bayes_pts = [r["bayes"][i] for r in results]
        entry["rmse"]["bayes"] = _rmse(bayes_pts, truth.value)
        sw_pts = [r["stepwise"][i] for r in results]
        entry["rmse"]["stepwise"] = _rmse(sw_pts, truth.value)
        emp_pts = [r["empirical"][i] for r in results
                   if r["empirical"][i] is not None]
        entry["empirical_defined"] = len(emp_pts)
        if len(emp_pts) == len(results):
            entry["rmse"]["empirical"] = _rmse(emp_pts, truth.value)
        for method, rmse in entry["rmse"].items():
            if method != "bayes" and rmse > 0:
                entry["rmse_ratio_vs_bayes"][method] = entry["rmse"]["bayes"] / rmse

        for method, key in (("stepwise", "stepwise_bootstrap"),
                            ("bayes", "bayes_states")):
            cov = {}
            for nominal in design.coverage_nominals:
                hits = []
                for r in results:
                    samples = r.get(key)
                    if samples is None:
                        continue
                    col = np.asarray(samples, dtype=float)[:, i]
                    lower = np.quantile(col, 1.0 - nominal)
                    hits.append(truth.value >= lower)
                if hits:
                    cov[nominal] = {"coverage": float(np.mean(hits)),
                                    "error": float(np.mean(hits) - nominal)}
            entry["coverage"][method] = cov
        report["levels"][str(q)] = entry
    return report


def aggregate_bivariate(design: StudyDesign, results: list) -> dict:
    """Parameter-recovery RMSEs, their ratio, and the per-replicate win count
    of the Bayesian posterior median over the stepwise point estimate."""
    report = {"design": _design_dict(design), "n_replicates": len(results),
              "params": {}}
    truth = {"alpha": design.alpha, "beta": design.beta}
    wins = 0
    for r in results:
        err_b = sum((r["bayes"][p] - truth[p]) ** 2 for p in ("alpha", "beta"))
        err_s = sum((r["stepwise"][p] - truth[p]) ** 2 for p in ("alpha", "beta"))
        wins += int(err_b < err_s)
    report["bayes_wins"] = wins
    for p in ("alpha", "beta"):
        rmse_b = _rmse([r["bayes"][p] for r in results], truth[p])
        rmse_s = _rmse([r["stepwise"][p] for r in results], truth[p])
        report["params"][p] = {
            "rmse_bayes": rmse_b, "rmse_stepwise": rmse_s,
            "ratio": rmse_b / rmse_s if rmse_s > 0 else None,
        }
    occ = np.sum([r["occupied_counts"] for r in results], axis=0)
    report["occupied_histogram"] = occ.tolist()
    return report


def _design_dict(design: StudyDesign) -> dict:
    d = asdict(design)
    d["residual_mix"] = [list(c) for c in d["residual_mix"]]
    return d


def _write_report_tables(design: StudyDesign, report: dict, out_dir):
    if design.kind != "ar1":
        return
    rows = []
    cov_rows = []
    for q, entry in report["levels"].items():
        for method, rmse in entry["rmse"].items():
            rows.append({
                "level_quantile": q, "m": design.m, "method": method,
                "rmse": rmse,
                "ratio_vs_bayes": entry["rmse_ratio_vs_bayes"].get(method, ""),
            })
        for method, cov in entry["coverage"].items():
            for nominal, vals in cov.items():
                cov_rows.append({
                    "level_quantile": q, "m": design.m, "method": method,
                    "nominal": nominal, "coverage": vals["coverage"],
                    "error": vals["error"],
                })
    artifact_io.write_csv_atomic(os.path.join(out_dir, "rmse.csv"), rows)
    if cov_rows:
        artifact_io.write_csv_atomic(os.path.join(out_dir, "coverage.csv"),
                                     cov_rows)
