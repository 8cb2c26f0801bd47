"""Matplotlib figures written next to report tables (PNG by default)."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .mcmc import density_histogram  # noqa: E402
from .objectives import domain_of, grid_eval  # noqa: E402

FIGSIZE = (7.0, 4.5)
DPI = 110


def figure_path(table_path, suffix=".png"):
    root, _ = os.path.splitext(os.fspath(table_path))
    return root + suffix


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def record_figure(record, path):
    """Per-algorithm overview of one run record."""
    a = record.algorithm
    trace = record.trace_events()
    if a == "gd":
        fig, ax = plt.subplots(figsize=FIGSIZE)
        ax.plot([e["iteration"] for e in trace], [e["payload"]["loss"] for e in trace], lw=1.2)
        ax.set(xlabel="iteration", ylabel="loss", title=f"GD on {record.objective}")
        _mark_adjustments(ax, record)
        return _save(fig, path)
    if a == "nm":
        fig, ax = plt.subplots(figsize=FIGSIZE)
        vals = np.array([e["payload"]["best_value"] for e in trace])
        ax.semilogy([e["iteration"] for e in trace], np.maximum(vals, 1e-300), lw=1.2)
        ax.set(xlabel="iteration", ylabel="best value",
               title=f"Nelder-Mead on {record.objective}")
        _mark_adjustments(ax, record)
        return _save(fig, path)
    if a in ("mh", "sa"):
        return _chain_figure(record, trace, path)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    gens = [e["iteration"] for e in trace]
    ax.plot(gens, [e["payload"]["mean_fitness"] for e in trace], label="mean fitness")
    ax.plot(gens, [e["payload"]["best_fitness"] for e in trace], label="best fitness")
    ax.set_yscale("log")
    ax.set(xlabel="generation", ylabel="fitness (SSE)", title="EA on repressilator")
    ax.legend()
    return _save(fig, path)


def _chain_figure(record, trace, path):
    dom = domain_of(record.objective)
    accepted = [e["payload"]["candidate"] for e in trace if e["payload"]["accepted"]]
    ncols = 3 if record.algorithm == "sa" else 2
    fig, axes = plt.subplots(1, ncols, figsize=(4.0 * ncols, 4.0))
    extent = (dom.lower[0], dom.upper[0], dom.lower[1], dom.upper[1])
    axes[0].imshow(grid_eval(record.objective, 60), origin="lower", extent=extent,
                   aspect="auto", cmap="viridis")
    axes[0].set(title="target density", xlabel="x1", ylabel="x2")
    if accepted:
        hist = density_histogram(accepted, dom, 30)
        axes[1].imshow(hist, origin="lower", extent=extent, aspect="auto", cmap="viridis")
    axes[1].set(title=f"accepted points ({len(accepted)})", xlabel="x1")
    if ncols == 3:
        axes[2].semilogy([e["iteration"] for e in trace],
                         [e["payload"]["temperature"] for e in trace])
        axes[2].set(title="temperature", xlabel="iteration")
    return _save(fig, path)


def _mark_adjustments(ax, record):
    for e in record.adjustment_events():
        p = e["payload"]
        ax.axvline(e["iteration"], color="tab:red", lw=0.8, ls="--")
        ax.annotate(f"{p['parameter']} {p['old']:g}->{p['new']:g}", (e["iteration"], 1.0),
                    xycoords=("data", "axes fraction"), fontsize=7, rotation=90,
                    va="top", ha="right")


def table_figure(table, path):
    """Scatter of the metric column of a result table against repetition."""
    metric = {"tune": "best_loss", "gd": "best_loss", "nm": "best_value",
              "chain": "accepted_pct", "ea": "best_fitness"}.get(table.kind)
    if metric is None:
        raise ValueError(f"no figure defined for {table.kind} tables")
    col = table.columns.index(metric)
    reps = [r[0] for r in table.rows]
    vals = [r[col] for r in table.rows]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(reps, vals, "o-", ms=4)
    ax.set(xlabel="repetition", ylabel=metric)
    return _save(fig, path)
