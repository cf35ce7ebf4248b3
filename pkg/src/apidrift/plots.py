"""Figure rendering for run reports.

Each function takes data already written by a command (or the in-memory
equivalent) and saves one figure next to the delimited output.  Rendering
is kept out of the data-producing commands so pipelines that only need CSV
and JSON never import matplotlib interactively.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .detector import log_alarm_threshold
from .space import CategorySpace

NULL_TICK = "(none)"


def _finish(fig, out_path) -> Path:
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path


def plot_log_bf_trajectories(trajectories, fp_levels, out_path, title="log Bayes factor") -> Path:
    """One line per repetition plus dashed alarm thresholds.

    ``trajectories`` is an array-like of shape (reps, steps).
    """
    trajectories = np.asarray(trajectories)
    fig, ax = plt.subplots(figsize=(8, 5))
    steps = np.arange(1, trajectories.shape[1] + 1)
    for row in trajectories:
        ax.plot(steps, row, linewidth=0.6, alpha=0.5)
    for fp in fp_levels:
        thr = log_alarm_threshold(fp)
        ax.axhline(thr, color="black", linestyle="--", linewidth=1.0)
        ax.annotate(f"fp={fp:g}", xy=(steps[-1], thr), fontsize=8,
                    ha="right", va="bottom")
    ax.set_xlabel("observations")
    ax.set_ylabel("log BF")
    ax.set_title(title)
    return _finish(fig, out_path)


def plot_detection_rates(pi_values, fp_levels, rates, out_path) -> Path:
    """Detected proportion vs mixing weight, one series per fp level."""
    rates = np.asarray(rates)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for j, fp in enumerate(fp_levels):
        ax.plot(pi_values, rates[:, j], marker="o", label=f"fp={fp:g}")
    ax.set_xlabel("mixing weight")
    ax.set_ylabel("detected proportion")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    ax.set_title("detection rate vs drift amount")
    return _finish(fig, out_path)


def plot_score_grid(scores, space: CategorySpace, out_path, title) -> Path:
    """Pair-category scores as a parent x child heat map.

    Diverging palette centered at zero: blue for categories seen more than
    expected, red for less.
    """
    scores = np.asarray(scores, dtype=np.float64)
    m1 = len(space.api_names) + 1
    grid = scores.reshape(m1, m1)
    labels = list(space.api_names) + [NULL_TICK]
    span = max(abs(grid).max(), 1e-12)
    fig, ax = plt.subplots(figsize=(8, 7))
    im = ax.imshow(grid, cmap="RdBu", vmin=-span, vmax=span)
    ax.set_xticks(range(m1), labels, rotation=90, fontsize=8)
    ax.set_yticks(range(m1), labels, fontsize=8)
    ax.set_xlabel("child")
    ax.set_ylabel("parent")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    return _finish(fig, out_path)


def plot_position_bars(signed_aggregates: dict, out_path, title) -> Path:
    """Per-API signed contribution bars (blue positive, red negative)."""
    labels = [k if k is not None else NULL_TICK for k in signed_aggregates]
    pos = np.array([v[0] for v in signed_aggregates.values()])
    neg = np.array([v[1] for v in signed_aggregates.values()])
    y = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(7, 0.4 * len(labels) + 1.5))
    ax.barh(y, pos, color="tab:blue", label="above expectation")
    ax.barh(y, neg, color="tab:red", label="below expectation")
    ax.set_yticks(y, labels, fontsize=8)
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.invert_yaxis()
    ax.set_xlabel("score contribution")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _finish(fig, out_path)
