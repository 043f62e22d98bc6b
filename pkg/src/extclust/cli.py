"""Command-line surface tying the pipeline together.

Subcommands mirror the library stages: ``ingest`` validates a CSV series,
``fit-marginal``/``fit-stepwise``/``fit-bayes`` produce model artifacts,
``theta``/``chi`` estimate cluster functionals over a level grid from any
of the three methods, ``simulate`` and ``study`` drive the validation
suites, and ``report`` renders figures from the delimited outputs.  All
outputs are written atomically and embed the configuration hash and seed.
"""
from __future__ import annotations

import json
import os
import sys
from functools import wraps

import click
import numpy as np

from . import io as artifact_io
from . import report as report_mod
from .dpmix import Priors, run_chain
from .errors import ConfigError, ExtclustError
from .functionals import (block_bootstrap, chi_model, chi_posterior,
                          chi_runs_value, empirical_cloud_cdf_evaluator,
                          empirical_cloud_marginal_survivor_evaluator,
                          theta_model_grid, theta_posterior, theta_runs,
                          theta_runs_value)
from .ht import LagData, TieKind, TieStructure
from .marginals import fit_marginal
from .series import ingest_csv
from .simulate import Ar1Spec, HtSimSpec, MixtureComponent, sim_ar1, sim_ht
from .stepwise import fit_stepwise
from .studies import StudyDesign, run_study


def _fail(error: Exception):
    payload = {"error": {"type": type(error).__name__, "message": str(error)}}
    if hasattr(error, "rows") and getattr(error, "rows"):
        payload["error"]["rows"] = getattr(error, "rows")
    click.echo(json.dumps(payload), err=True)
    sys.exit(2)


def _guarded(fn):
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ExtclustError, ValueError, OSError) as exc:
            _fail(exc)
    return wrapper


def _out_dir(explicit):
    return os.environ.get("EXTCLUST_OUT_DIR", explicit or ".")


def _meta(seed=None, **config):
    meta = {"tool": "extclust", "config_hash": artifact_io.config_hash(config)}
    if seed is not None:
        meta["seed"] = seed
    return meta


def _parse_floats(text) -> list[float]:
    return [float(tok) for tok in str(text).split(",") if tok.strip()]


def _parse_ints(text) -> list[int]:
    return [int(tok) for tok in str(text).split(",") if tok.strip()]


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


@click.group()
def main():
    """Clustering of extremes in stationary time series."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--value-column", default=None)
@click.option("--date-column", default=None)
@click.option("--season-column", default=None)
@click.option("--out", "out_path", required=True)
@_guarded
def ingest(input_path, value_column, date_column, season_column, out_path):
    """Validate a CSV series and write the canonical series artifact."""
    series = ingest_csv(input_path, value_column=value_column,
                        date_column=date_column, season_column=season_column)
    artifact_io.save_series(out_path, series, _meta(
        input=os.path.basename(input_path), value_column=value_column,
        season_column=season_column))
    click.echo(f"wrote {out_path} ({len(series)} observations)")


@main.command("fit-marginal")
@click.option("--input", "series_path", required=True, type=click.Path(exists=True))
@click.option("--quantile", default=0.95, show_default=True)
@click.option("--out", "out_path", required=True)
@_guarded
def fit_marginal_cmd(series_path, quantile, out_path):
    """Fit the composite marginal tail model."""
    series = artifact_io.load_series(series_path)
    model = fit_marginal(series.values, quantile)
    artifact_io.save_marginal(out_path, model, _meta(quantile=quantile))
    click.echo(f"wrote {out_path} (threshold {model.threshold:.6g}, "
               f"scale {model.gpd.scale:.6g}, shape {model.gpd.shape:.6g})")


def _lag_data(series, marg, dependence_quantile, m) -> LagData:
    if dependence_quantile < marg.threshold_quantile:
        raise ConfigError("dependence quantile must be at least the marginal one")
    lap = np.asarray(marg.to_laplace(series.values))
    u_dep = float(marg.to_laplace(np.quantile(series.values, dependence_quantile)))
    return LagData.from_laplace_series(lap, u_dep, m)


@main.command("fit-stepwise")
@click.option("--input", "series_path", required=True, type=click.Path(exists=True))
@click.option("--marginal", "marginal_path", required=True, type=click.Path(exists=True))
@click.option("--dependence-quantile", default=0.98, show_default=True)
@click.option("--m", default=1, show_default=True)
@click.option("--constraints/--no-constraints", default=True, show_default=True)
@click.option("--out", "out_path", required=True)
@_guarded
def fit_stepwise_cmd(series_path, marginal_path, dependence_quantile, m,
                     constraints, out_path):
    """Two-stage working-likelihood fit of the conditional tail model."""
    series = artifact_io.load_series(series_path)
    marg = artifact_io.load_marginal(marginal_path)
    data = _lag_data(series, marg, dependence_quantile, m)
    fit = fit_stepwise(data, constraints_on=constraints)
    artifact_io.save_stepwise(out_path, fit, _meta(
        dependence_quantile=dependence_quantile, m=m, constraints=constraints))
    click.echo(f"wrote {out_path} (n={data.n} exceedances, "
               f"alpha={np.round(fit.params.alpha, 3).tolist()}, "
               f"beta={np.round(fit.params.beta, 3).tolist()})")


@main.command("fit-bayes")
@click.option("--input", "series_path", required=True, type=click.Path(exists=True))
@click.option("--marginal", "marginal_path", required=True, type=click.Path(exists=True))
@click.option("--dependence-quantile", default=0.98, show_default=True)
@click.option("--m", default=1, show_default=True)
@click.option("--tie", default="free", show_default=True,
              type=click.Choice([k.value for k in TieKind]))
@click.option("--iters", default=10000, show_default=True)
@click.option("--burn-in", default=4000, show_default=True)
@click.option("--thin", default=20, show_default=True)
@click.option("--trunc", default=150, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--constraints/--no-constraints", default=True, show_default=True)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True),
              help="JSON with prior hyperparameters (eta1, eta2, psi_mu_sq, nu1, nu2, gamma_floor)")
@click.option("--out-prefix", required=True)
@_guarded
def fit_bayes_cmd(series_path, marginal_path, dependence_quantile, m, tie,
                  iters, burn_in, thin, trunc, seed, constraints, config_path,
                  out_prefix):
    """Semiparametric posterior sampling of the conditional tail model."""
    series = artifact_io.load_series(series_path)
    marg = artifact_io.load_marginal(marginal_path)
    data = _lag_data(series, marg, dependence_quantile, m)
    priors = Priors(trunc=trunc, **_load_config(config_path))
    chain = run_chain(data, priors, TieStructure(kind=TieKind(tie), m=m),
                      iters=iters, burn_in=burn_in, thin=thin, seed=seed,
                      constraints_on=constraints)
    artifact_io.save_chain(out_prefix, chain, data=data, meta=_meta(
        seed=seed, dependence_quantile=dependence_quantile, m=m, tie=tie,
        iters=iters, burn_in=burn_in, thin=thin, trunc=trunc,
        constraints=constraints))
    click.echo(f"wrote {out_prefix}.csv and {out_prefix}_states.json "
               f"({len(chain)} states, acceptance "
               f"{np.round(chain.acceptance['alpha_beta'], 2).tolist()})")


def _resolve_levels(levels, level_quantiles, series, marg):
    if (levels is None) == (level_quantiles is None):
        raise ConfigError("pass exactly one of --levels or --level-quantiles")
    if levels is not None:
        return _parse_floats(levels)
    qs = _parse_floats(level_quantiles)
    if marg is not None:
        return [float(marg.quantile(q)) for q in qs]
    if series is not None:
        return [float(np.quantile(series.values, q)) for q in qs]
    raise ConfigError("--level-quantiles needs a series or marginal artifact")


@main.command()
@click.option("--method", required=True,
              type=click.Choice(["empirical", "stepwise", "bayes"]))
@click.option("--levels", default=None, help="comma-separated data-unit levels")
@click.option("--level-quantiles", default=None,
              help="comma-separated marginal quantiles to convert to levels")
@click.option("--m", default=1, show_default=True)
@click.option("--series", "series_path", default=None, type=click.Path(exists=True))
@click.option("--marginal", "marginal_path", default=None, type=click.Path(exists=True))
@click.option("--stepwise", "stepwise_path", default=None, type=click.Path(exists=True))
@click.option("--chain-prefix", default=None)
@click.option("--R", "n_mc", default=20000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--block-len", default=None, type=int)
@click.option("--B", "n_boot", default=0, show_default=True,
              help="bootstrap replicates for empirical intervals")
@click.option("--out", "out_path", required=True)
@_guarded
def theta(method, levels, level_quantiles, m, series_path, marginal_path,
          stepwise_path, chain_prefix, n_mc, seed, block_len, n_boot, out_path):
    """Threshold-based extremal index over a level grid."""
    series = artifact_io.load_series(series_path) if series_path else None
    marg = artifact_io.load_marginal(marginal_path) if marginal_path else None
    xs = _resolve_levels(levels, level_quantiles, series, marg)
    rows = []
    if method == "empirical":
        if series is None:
            raise ConfigError("empirical theta needs --series")
        for x in xs:
            est = theta_runs(series, x, m, block_len=block_len, B=n_boot,
                             seed=seed)
            rows.append(_estimate_row(est, m, method))
    elif method == "stepwise":
        if stepwise_path is None or marg is None:
            raise ConfigError("stepwise theta needs --stepwise and --marginal")
        fit = artifact_io.load_stepwise(stepwise_path)
        G = empirical_cloud_cdf_evaluator(fit.residual_cloud)
        values = theta_model_grid(G, fit.params, marg, xs, m, n_mc,
                                  np.random.default_rng(seed))
        for x, value in zip(xs, values):
            rows.append({"level": x, "m": m, "method": method,
                         "estimate": repr(float(value)), "lo": "", "hi": ""})
    else:
        if chain_prefix is None or marg is None:
            raise ConfigError("bayes theta needs --chain-prefix and --marginal")
        chain = artifact_io.load_chain(chain_prefix)
        for est in theta_posterior(chain, marg, xs, m, R=n_mc, seed=seed):
            rows.append(_estimate_row(est, m, method))
    artifact_io.write_csv_atomic(out_path, rows, _meta(
        seed=seed, method=method, m=m, levels=xs, R=n_mc, B=n_boot))
    click.echo(f"wrote {out_path}")


def _estimate_row(est, m, method):
    return {"level": est.level, "m": m, "method": method,
            "estimate": repr(est.value),
            "lo": "" if est.lo is None else repr(est.lo),
            "hi": "" if est.hi is None else repr(est.hi)}


@main.command()
@click.option("--method", required=True,
              type=click.Choice(["empirical", "stepwise", "bayes"]))
@click.option("--levels", default=None)
@click.option("--level-quantiles", default=None)
@click.option("--lags", default="1", show_default=True,
              help="comma-separated lags j for chi_j")
@click.option("--series", "series_path", default=None, type=click.Path(exists=True))
@click.option("--marginal", "marginal_path", default=None, type=click.Path(exists=True))
@click.option("--stepwise", "stepwise_path", default=None, type=click.Path(exists=True))
@click.option("--chain-prefix", default=None)
@click.option("--R", "n_mc", default=20000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True)
@_guarded
def chi(method, levels, level_quantiles, lags, series_path, marginal_path,
        stepwise_path, chain_prefix, n_mc, seed, out_path):
    """Sub-asymptotic extremogram chi_j(x) over a level grid."""
    series = artifact_io.load_series(series_path) if series_path else None
    marg = artifact_io.load_marginal(marginal_path) if marginal_path else None
    xs = _resolve_levels(levels, level_quantiles, series, marg)
    lag_list = _parse_ints(lags)
    rows = []
    if method == "empirical":
        if series is None:
            raise ConfigError("empirical chi needs --series")
        for j in lag_list:
            for x in xs:
                value = chi_runs_value(series.values, x, j)
                rows.append({"level": x, "m": j, "method": method,
                             "estimate": repr(value), "lo": "", "hi": ""})
    elif method == "stepwise":
        if stepwise_path is None or marg is None:
            raise ConfigError("stepwise chi needs --stepwise and --marginal")
        fit = artifact_io.load_stepwise(stepwise_path)
        for j in lag_list:
            surv = empirical_cloud_marginal_survivor_evaluator(
                fit.residual_cloud, j - 1)
            for x in xs:
                value = chi_model(surv, fit.params, marg, x, j, n_mc,
                                  np.random.default_rng(seed))
                rows.append({"level": x, "m": j, "method": method,
                             "estimate": repr(value), "lo": "", "hi": ""})
    else:
        if chain_prefix is None or marg is None:
            raise ConfigError("bayes chi needs --chain-prefix and --marginal")
        chain = artifact_io.load_chain(chain_prefix)
        for j in lag_list:
            for est in chi_posterior(chain, marg, xs, j, R=n_mc, seed=seed):
                rows.append(_estimate_row(est, j, method))
    artifact_io.write_csv_atomic(out_path, rows, _meta(
        seed=seed, method=method, lags=lag_list, levels=xs, R=n_mc))
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--kind", required=True, type=click.Choice(["ar1", "ht"]))
@click.option("--rho", default=0.5, show_default=True)
@click.option("--n", default=8000, show_default=True)
@click.option("--margins", default="exponential", show_default=True,
              type=click.Choice(["gaussian", "exponential"]))
@click.option("--alpha", default=0.7, show_default=True)
@click.option("--beta", default=0.3, show_default=True)
@click.option("--u", default=3.0, show_default=True)
@click.option("--mix", default=None,
              help="JSON list of [weight, loc, scale, family] residual components")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True)
@_guarded
def simulate(kind, rho, n, margins, alpha, beta, u, mix, seed, out_path):
    """Generate validation data from the AR(1) or conditional-model samplers."""
    if kind == "ar1":
        series = sim_ar1(Ar1Spec(rho=rho, n=n, margins=margins), seed=seed)
        rows = [{"value": repr(float(v))} for v in series.values]
        meta = _meta(seed=seed, kind=kind, rho=rho, n=n, margins=margins)
    else:
        components = tuple(
            MixtureComponent(weight=c[0], loc=c[1], scale=c[2], family=c[3])
            for c in json.loads(mix or
                                '[[0.5,-1.2,0.3,"laplace"],[0.5,1.2,0.3,"laplace"]]'))
        x, y = sim_ht(HtSimSpec(alpha=alpha, beta=beta, u=u,
                                residual_mix=components, n=n), seed=seed)
        rows = [{"x": repr(float(a)), "y": repr(float(b))} for a, b in zip(x, y)]
        meta = _meta(seed=seed, kind=kind, alpha=alpha, beta=beta, u=u, n=n,
                     mix=mix)
    artifact_io.write_csv_atomic(out_path, rows, meta)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--design", "design_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", default=None)
@click.option("--workers", default=1, show_default=True)
@_guarded
def study(design_path, out_dir, workers):
    """Run (or resume) a replicated accuracy/coverage study."""
    design = StudyDesign.from_json(design_path)
    out = _out_dir(out_dir)
    report = run_study(design, out, workers=workers)
    click.echo(json.dumps({k: v for k, v in report.items() if k != "design"},
                          indent=1, default=str))


@main.command("report")
@click.option("--theta-table", default=None, type=click.Path(exists=True))
@click.option("--chi-table", default=None, type=click.Path(exists=True))
@click.option("--study-dir", default=None, type=click.Path(exists=True))
@click.option("--out-dir", default=None)
@_guarded
def report_cmd(theta_table, chi_table, study_dir, out_dir):
    """Render figures next to the delimited outputs."""
    out = _out_dir(out_dir)
    os.makedirs(out, exist_ok=True)
    written = []
    if theta_table:
        written.append(report_mod.render_functional_table(
            theta_table, os.path.join(out, "theta.png"),
            "threshold-based extremal index"))
    if chi_table:
        written.append(report_mod.render_chi_by_lag(
            chi_table, os.path.join(out, "chi.png")))
    if study_dir:
        written.extend(report_mod.render_study_report(study_dir, out))
    if not written:
        raise ConfigError("nothing to render; pass a table or study directory")
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
