"""Figure rendering for the bench report: error, quality, and uncertainty
traces written as PNG files next to the CSV/JSON output.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import ErrorSeries


def render_report(series: ErrorSeries, out_dir, threshold: float | None = None) -> list[str]:
    """Write the standard report figures into out_dir; returns their paths."""
    paths = []

    fig, ax = plt.subplots(figsize=(8, 3.2))
    ax.plot(series.t, series.pos_err, color="C0", lw=1.0)
    if threshold is not None:
        ax.axhline(threshold, color="C3", ls="--", lw=0.8, label=f"threshold {threshold} m")
        ax.legend(loc="upper right")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("position error (m)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = os.path.join(out_dir, "error_vs_time.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, axes = plt.subplots(3, 1, figsize=(8, 6), sharex=True)
    axes[0].plot(series.t, series.pos_err, color="C0", lw=1.0)
    axes[0].set_ylabel("error (m)")
    axes[1].plot(series.t, series.quality, color="C2", lw=1.0)
    axes[1].set_ylabel("quality")
    axes[1].set_ylim(-0.05, 1.05)
    axes[2].plot(series.t, series.uncertainty, color="C1", lw=1.0)
    axes[2].set_ylabel("uncertainty (m)")
    axes[2].set_xlabel("time (s)")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    path = os.path.join(out_dir, "quality_uncertainty.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    return paths
