"""Artifact persistence: atomic JSON/CSV writers and model (de)serialisation.

Every output is written to a temporary file and renamed into place, and
carries a provenance block echoing the configuration hash and seed that
produced it.  Outputs contain no timestamps so identical runs produce
byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import tempfile

import numpy as np

from .dpmix import Chain, MixtureState, Priors, log_posterior
from .errors import MissingArtifactError
from .ht import HtParams, TieKind, TieStructure
from .marginals import GpdParams, MarginalModel
from .series import TimeSeries
from .stepwise import StepwiseFit


def config_hash(config: dict) -> str:
    """Stable short hash of a JSON-serialisable configuration."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _atomic_write_text(path, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _CompactEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        return super().default(o)


def write_json_atomic(path, obj, meta: dict | None = None):
    if meta:
        obj = {"_meta": meta, **obj} if isinstance(obj, dict) else obj
    _atomic_write_text(path, json.dumps(obj, cls=_CompactEncoder, indent=1))


def read_json(path) -> dict:
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing artifact: {path}")
    with open(path) as fh:
        return json.load(fh)


def write_csv_atomic(path, rows: list[dict], meta: dict | None = None):
    """Write dict rows as CSV, with provenance as leading # comment lines."""
    buf = _io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}={value}\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def read_csv(path) -> list[dict]:
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing artifact: {path}")
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# ---------------------------------------------------------------------------
# series


def save_series(path, series: TimeSeries, meta=None):
    obj = {"values": series.values.tolist()}
    if series.seasons is not None:
        obj["seasons"] = [str(s) for s in series.seasons]
    write_json_atomic(path, obj, meta)


def load_series(path) -> TimeSeries:
    obj = read_json(path)
    seasons = np.array(obj["seasons"]) if "seasons" in obj else None
    return TimeSeries(np.array(obj["values"], dtype=float), seasons=seasons)


# ---------------------------------------------------------------------------
# marginal model


def save_marginal(path, model: MarginalModel, meta=None):
    write_json_atomic(path, {
        "sorted_values": model.sorted_values.tolist(),
        "gpd": {"scale": model.gpd.scale, "shape": model.gpd.shape,
                "threshold": model.gpd.threshold},
        "tail_fraction": model.tail_fraction,
        "threshold_quantile": model.threshold_quantile,
    }, meta)


def load_marginal(path) -> MarginalModel:
    obj = read_json(path)
    return MarginalModel(
        sorted_values=np.array(obj["sorted_values"], dtype=float),
        gpd=GpdParams(**obj["gpd"]),
        tail_fraction=obj["tail_fraction"],
        threshold_quantile=obj["threshold_quantile"],
    )


# ---------------------------------------------------------------------------
# stepwise fit


def save_stepwise(path, fit: StepwiseFit, meta=None):
    write_json_atomic(path, {
        "alpha": fit.params.alpha.tolist(),
        "beta": fit.params.beta.tolist(),
        "mu": fit.mu.tolist(),
        "psi": fit.psi.tolist(),
        "residual_cloud": fit.residual_cloud.tolist(),
        "u": fit.u,
        "warnings": list(fit.warnings),
    }, meta)


def load_stepwise(path) -> StepwiseFit:
    obj = read_json(path)
    return StepwiseFit(
        params=HtParams(alpha=np.array(obj["alpha"]), beta=np.array(obj["beta"])),
        mu=np.array(obj["mu"]), psi=np.array(obj["psi"]),
        residual_cloud=np.array(obj["residual_cloud"]),
        u=obj["u"], warnings=tuple(obj.get("warnings", ())),
    )


# ---------------------------------------------------------------------------
# posterior chain: columnar CSV trace + JSON sidecar of full states


def save_chain(prefix, chain: Chain, data=None, meta=None):
    """Write ``<prefix>.csv`` (trace) and ``<prefix>_states.json`` (states).

    The trace has one row per recorded state: the free alpha/beta
    parameters, the concentration, the occupied-component count, and the
    log posterior when the training data is supplied.
    """
    rows = []
    for s_index, state in enumerate(chain.states):
        free = chain.tie.collapse(state.ht)
        row = {"state": s_index}
        for k, val in enumerate(free):
            row[f"free_{k}"] = repr(float(val))
        row["gamma"] = repr(float(state.gamma))
        row["occupied"] = state.occupied()
        row["log_posterior"] = (repr(log_posterior(state, data, chain.priors))
                                if data is not None else "")
        rows.append(row)
    write_csv_atomic(f"{prefix}.csv", rows, meta)

    states = [{
        "alpha": st.ht.alpha.tolist(), "beta": st.ht.beta.tolist(),
        "mu": st.mu.tolist(), "psi_sq": st.psi_sq.tolist(),
        "w": st.w.tolist(), "log_w": st.log_w.tolist(),
        "v_breaks": st.v_breaks.tolist(), "c": st.c.tolist(),
        "gamma": st.gamma,
    } for st in chain.states]
    priors = chain.priors
    write_json_atomic(f"{prefix}_states.json", {
        "states": states,
        "acceptance": chain.acceptance,
        "priors": {"eta1": priors.eta1, "eta2": priors.eta2,
                   "psi_mu_sq": np.asarray(priors.psi_mu_sq).tolist(),
                   "nu1": np.asarray(priors.nu1).tolist(),
                   "nu2": np.asarray(priors.nu2).tolist(),
                   "gamma_floor": priors.gamma_floor, "trunc": priors.trunc},
        "tie": chain.tie.kind.value, "m": chain.tie.m,
        "iters": chain.iters, "burn_in": chain.burn_in, "thin": chain.thin,
        "seed": chain.seed, "constraints_on": chain.constraints_on,
        "notes": chain.notes,
    }, meta)


def load_chain(prefix) -> Chain:
    obj = read_json(f"{prefix}_states.json")
    p = obj["priors"]
    priors = Priors(eta1=p["eta1"], eta2=p["eta2"],
                    psi_mu_sq=np.asarray(p["psi_mu_sq"]),
                    nu1=np.asarray(p["nu1"]), nu2=np.asarray(p["nu2"]),
                    gamma_floor=p["gamma_floor"], trunc=p["trunc"])
    tie = TieStructure(kind=TieKind(obj["tie"]), m=obj["m"])
    states = [MixtureState(
        ht=HtParams(alpha=np.array(s["alpha"]), beta=np.array(s["beta"])),
        mu=np.array(s["mu"]), psi_sq=np.array(s["psi_sq"]),
        w=np.array(s["w"]), log_w=np.array(s["log_w"]),
        v_breaks=np.array(s["v_breaks"]), c=np.array(s["c"], dtype=np.int64),
        gamma=s["gamma"],
    ) for s in obj["states"]]
    return Chain(states=states, acceptance=obj["acceptance"], priors=priors,
                 tie=tie, iters=obj["iters"], burn_in=obj["burn_in"],
                 thin=obj["thin"], seed=obj["seed"],
                 constraints_on=obj["constraints_on"], notes=obj["notes"])
