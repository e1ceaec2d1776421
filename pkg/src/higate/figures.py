"""Figure rendering for report outputs.

Every report path that emits CSV also renders a PNG next to it. Rendering
is purely file-to-file (Agg backend, no display); figures are an adjunct to
the CSV, which stays the canonical machine-readable artifact.
"""

from __future__ import annotations

import zlib
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .calibration import ReliabilityBins  # noqa: E402

_SAVEFIG = {"dpi": 140, "bbox_inches": "tight", "metadata": {"Software": "higate"}}

_POLICY_COLORS = {
    "ft": "tab:blue",
    "cft": "tab:orange",
    "full-offload": "tab:red",
    "never-offload": "tab:gray",
}


def _policy_style(label: str) -> dict:
    color = _POLICY_COLORS.get(label)
    if color is None:
        # stable across processes, unlike hash()
        palette = ["tab:green", "tab:purple", "tab:brown", "tab:pink", "tab:olive", "tab:cyan"]
        color = palette[zlib.crc32(label.encode()) % len(palette)]
    return {"color": color, "marker": "o", "markersize": 3.5, "linewidth": 1.4}


def render_reliability(bins_before: ReliabilityBins, bins_after: ReliabilityBins,
                       ece_before: float, ece_after: float, temperature: float,
                       path: str | Path) -> Path:
    """Two-panel reliability diagram: per-bin accuracy vs confidence."""
    path = Path(path)
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.6), sharey=True)
    panels = [
        (axes[0], bins_before, f"uncalibrated (ECE={ece_before:.4f})"),
        (axes[1], bins_after, f"T={temperature:.3f} (ECE={ece_after:.4f})"),
    ]
    for ax, bins, title in panels:
        edges = bins.edges
        centers = (edges[:-1] + edges[1:]) / 2
        width = 1.0 / bins.num_bins
        occupied = bins.counts > 0
        ax.bar(centers[occupied], bins.mean_accuracy[occupied], width=width * 0.92,
               color="tab:blue", alpha=0.75, label="accuracy")
        ax.plot([0, 1], [0, 1], "k--", linewidth=1, label="perfect calibration")
        ax.plot(centers[occupied], bins.mean_confidence[occupied], "r.-",
                linewidth=1, markersize=5, label="confidence")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("confidence bin")
        ax.set_title(title, fontsize=10)
    axes[0].set_ylabel("mean accuracy")
    axes[0].legend(fontsize=8, loc="upper left")
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return path


def render_threshold_sweep(curves: dict, theta_stars: dict, path: str | Path) -> Path:
    """CPI-vs-theta and accuracy-vs-theta panels; one line per variant (ft/cft)."""
    path = Path(path)
    fig, (ax_cpi, ax_acc) = plt.subplots(1, 2, figsize=(8.6, 3.4))
    for label, points in curves.items():
        thetas = [p.theta for p in points]
        style = _policy_style(label)
        ax_cpi.plot(thetas, [p.cpi for p in points], label=label, **style)
        ax_acc.plot(thetas, [p.accuracy for p in points], label=label, **style)
        if label in theta_stars:
            ax_cpi.axvline(theta_stars[label], color=style["color"], linestyle=":",
                           linewidth=1)
    ax_cpi.set_xlabel(r"threshold $\theta$")
    ax_cpi.set_ylabel("cost per image")
    ax_acc.set_xlabel(r"threshold $\theta$")
    ax_acc.set_ylabel("system accuracy")
    ax_cpi.legend(fontsize=8)
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return path


def _grouped(rows):
    by_policy: dict[str, list] = {}
    for row in rows:
        by_policy.setdefault(row.policy, []).append(row)
    return by_policy


def render_beta_sweep(rows, path: str | Path) -> Path:
    """CPI / accuracy / F1 against beta, one line per policy."""
    path = Path(path)
    fig, (ax_cpi, ax_acc, ax_f1) = plt.subplots(1, 3, figsize=(12.0, 3.4))
    for label, group in _grouped(rows).items():
        xs = [r.beta for r in group]
        style = _policy_style(label)
        ax_cpi.plot(xs, [r.cpi for r in group], label=label, **style)
        ax_acc.plot(xs, [r.accuracy for r in group], label=label, **style)
        ax_f1.plot(xs, [r.f1 for r in group], label=label, **style)
    for ax, ylabel in ((ax_cpi, "cost per image"), (ax_acc, "system accuracy"),
                       (ax_f1, "F1 (simple-accepted)")):
        ax.set_xlabel(r"offload cost $\beta$")
        ax.set_ylabel(ylabel)
    ax_cpi.legend(fontsize=8)
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return path


def render_ratio_sweep(rows, beta: float, path: str | Path) -> Path:
    """CPI and accuracy against alpha/beta at fixed beta."""
    path = Path(path)
    fig, (ax_cpi, ax_acc) = plt.subplots(1, 2, figsize=(8.6, 3.4))
    for label, group in _grouped(rows).items():
        xs = [r.alpha / beta if beta > 0 else 0.0 for r in group]
        style = _policy_style(label)
        ax_cpi.plot(xs, [r.cpi for r in group], label=label, **style)
        ax_acc.plot(xs, [r.accuracy for r in group], label=label, **style)
    for ax, ylabel in ((ax_cpi, "cost per image"), (ax_acc, "system accuracy")):
        ax.set_xlabel(r"$\alpha/\beta$")
        ax.set_ylabel(ylabel)
    ax_cpi.legend(fontsize=8)
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return path
