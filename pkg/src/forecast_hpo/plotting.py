"""Figures for the report command (matplotlib, written to files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import NormalizedTable, TradeoffGrid  # noqa: E402

# fixed ids and no timestamp so reruns give byte-identical SVGs
_SVG_RC = {"svg.hashsalt": "forecast-hpo", "svg.fonttype": "none"}


def _save(fig, path) -> Path:
    path = Path(path)
    with plt.rc_context(_SVG_RC):
        fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None} if path.suffix == ".svg" else None)
    plt.close(fig)
    return path


def plot_tradeoff(grid: TradeoffGrid, table: NormalizedTable, path) -> Path:
    """Cost lines per config (left) and the cost heat map with per-theta winners (right)."""
    with plt.rc_context(_SVG_RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
        thetas = np.asarray(grid.thetas)
        for j, label in enumerate(grid.labels):
            ax1.plot(thetas, grid.costs[:, j], label=label)
        for sp in grid.switch_points(table):
            ax1.axvline(sp["theta"], color="0.5", ls="--", lw=0.8)
        ax1.set_xlabel("theta (latency weight)")
        ax1.set_ylabel("cost")
        ax1.legend(title="config", fontsize=8)
        im = ax2.imshow(grid.costs.T, aspect="auto", origin="lower", cmap="viridis",
                        extent=(thetas[0], thetas[-1], -0.5, len(grid.labels) - 0.5))
        best = [grid.labels.index(w) for w in grid.argmin]
        ax2.plot(thetas, best, "w.", ms=4)
        ax2.set_yticks(range(len(grid.labels)), grid.labels)
        ax2.set_xlabel("theta (latency weight)")
        ax2.set_ylabel("config")
        fig.colorbar(im, ax=ax2, label="cost")
        fig.tight_layout()
    return _save(fig, path)


def plot_error_latency(table: NormalizedTable, path) -> Path:
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.scatter(table.latency, table.error)
        for i, label in enumerate(table.labels):
            ax.annotate(label, (table.latency[i], table.error[i]), textcoords="offset points", xytext=(4, 3), fontsize=8)
        ax.set_xlabel("normalised HPO latency")
        ax.set_ylabel("normalised error")
        fig.tight_layout()
    return _save(fig, path)
