"""Figure rendering from the tidy estimate tables.

Reads the delimited outputs of the ``theta``, ``chi`` and ``study``
commands and renders summary figures next to them: functional estimates
against level with uncertainty bands per method, extremogram decay by lag,
study RMSE ratios and coverage error curves.
"""
from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .io import read_csv, read_json  # noqa: E402

_METHOD_STYLE = {
    "empirical": {"color": "black", "marker": "o"},
    "stepwise": {"color": "tab:blue", "marker": "s"},
    "bayes": {"color": "tab:red", "marker": "D"},
}


def _rows_by_method(rows):
    grouped = defaultdict(list)
    for row in rows:
        grouped[row["method"]].append(row)
    return grouped


def render_functional_table(table_path, out_path, ylabel):
    """Estimates vs level with uncertainty bands, one line per method."""
    rows = read_csv(table_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for method, group in _rows_by_method(rows).items():
        group = sorted(group, key=lambda r: float(r["level"]))
        x = [float(r["level"]) for r in group]
        y = [float(r["estimate"]) for r in group]
        style = _METHOD_STYLE.get(method, {})
        ax.plot(x, y, label=method, **style)
        if all(r.get("lo") for r in group):
            lo = [float(r["lo"]) for r in group]
            hi = [float(r["hi"]) for r in group]
            ax.fill_between(x, lo, hi, alpha=0.2,
                            color=style.get("color", "grey"))
    ax.set_xlabel("level (data units)")
    ax.set_ylabel(ylabel)
    ax.set_ylim(0, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_chi_by_lag(table_path, out_path):
    """Extremogram decay: estimate vs lag, one line per level."""
    rows = read_csv(table_path)
    by_level = defaultdict(list)
    for row in rows:
        by_level[row["level"]].append(row)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for level, group in sorted(by_level.items(), key=lambda kv: float(kv[0])):
        group = sorted(group, key=lambda r: int(r["m"]))
        lags = [int(r["m"]) for r in group]
        y = [float(r["estimate"]) for r in group]
        line, = ax.plot(lags, y, marker="o", label=f"level {level}")
        if all(r.get("lo") for r in group):
            lo = [float(r["lo"]) for r in group]
            hi = [float(r["hi"]) for r in group]
            ax.fill_between(lags, lo, hi, alpha=0.2, color=line.get_color())
    ax.set_xlabel("lag")
    ax.set_ylabel("conditional exceedance probability")
    ax.set_ylim(0, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_study_report(study_dir, out_dir=None):
    """RMSE-ratio and coverage-error figures from a study report directory."""
    out_dir = out_dir or study_dir
    report = read_json(os.path.join(study_dir, "report.json"))
    written = []

    levels = sorted(report["levels"].keys(), key=float)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for method in ("stepwise", "empirical"):
        ratios = [report["levels"][q]["rmse_ratio_vs_bayes"].get(method)
                  for q in levels]
        pts = [(float(q), r) for q, r in zip(levels, ratios) if r is not None]
        if pts:
            ax.plot([p[0] for p in pts], [100 * p[1] for p in pts],
                    marker="o", label=f"bayes vs {method}")
    ax.axhline(100, color="grey", lw=0.8)
    ax.set_xlabel("level quantile")
    ax.set_ylabel("RMSE ratio (%)")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "rmse_ratio.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    plotted = False
    for q in levels:
        for method, cov in report["levels"][q]["coverage"].items():
            if not cov:
                continue
            nominals = sorted(cov.keys(), key=float)
            errors = [cov[a]["error"] for a in nominals]
            ax.plot([float(a) for a in nominals], errors, marker="o",
                    label=f"{method} @ {q}",
                    **{k: v for k, v in _METHOD_STYLE.get(method, {}).items()
                       if k == "color"})
            plotted = True
    if plotted:
        ax.axhline(0.0, color="grey", lw=0.8)
        ax.set_xlabel("nominal one-sided coverage")
        ax.set_ylabel("coverage error")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, "coverage_error.png")
        fig.savefig(path, dpi=150)
        written.append(path)
    plt.close(fig)
    return written
