"""Figure rendering for command-line reports.

Every function takes plain report data and a target path and writes one
PNG. The Agg backend is forced so rendering works headless, and figures
carry no timestamps, so reruns produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 120


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def bound_gap_png(groups: dict[str, list], path) -> None:
    """Bound slack (lhs - rhs) against batch size, one line per grid group."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, reports in groups.items():
        ns = [r.n for r in reports]
        gaps = [r.gap for r in reports]
        ax.plot(ns, gaps, marker="o", label=label)
    ax.axhline(0.0, color="gray", lw=0.8, ls="--")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("negatives per anchor N")
    ax.set_ylabel("bound slack (nats)")
    ax.legend(fontsize=8)
    _save(fig, path)


def loss_history_png(history: list, path) -> None:
    """Loss curve plus the split weight means over training."""
    steps = [row.step for row in history]
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6.0, 5.0), sharex=True)
    top.plot(steps, [row.loss for row in history], lw=0.8)
    top.set_ylabel("loss")
    bottom.plot(
        steps,
        [row.mean_false_neg_weight for row in history],
        lw=0.8,
        label="shared-concept slots",
    )
    bottom.plot(
        steps,
        [row.mean_true_neg_weight for row in history],
        lw=0.8,
        label="distinct slots",
    )
    bottom.set_xlabel("step")
    bottom.set_ylabel("mean weight")
    bottom.legend(fontsize=8)
    _save(fig, path)


def sweep_curve_png(points: list, path) -> None:
    thresholds = [p.threshold for p in points]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(thresholds, [p.report.r_at_ab[1] for p in points], marker="o", label="a to b")
    ax.plot(thresholds, [p.report.r_at_ba[1] for p in points], marker="s", label="b to a")
    ax.set_xlabel("exclusion threshold")
    ax.set_ylabel("R@1")
    ax.legend(fontsize=8)
    _save(fig, path)


def weight_histogram_png(hist, path) -> None:
    centers = 0.5 * (hist.edges[:-1] + hist.edges[1:])
    widths = np.diff(hist.edges)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.bar(centers, hist.counts, width=widths, edgecolor="none")
    ax.axvline(hist.mean_false_neg, color="tab:red", lw=1.0,
               label=f"shared-concept mean {hist.mean_false_neg:.2f}")
    ax.axvline(hist.mean_true_neg, color="tab:green", lw=1.0,
               label=f"distinct mean {hist.mean_true_neg:.2f}")
    ax.set_xlabel("negative weight")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    _save(fig, path)


def retrieval_png(report, path) -> None:
    ks = sorted(report.r_at_ab)
    x = np.arange(len(ks), dtype=np.float64)
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.bar(x - 0.18, [report.r_at_ab[k] for k in ks], width=0.36, label="a to b")
    ax.bar(x + 0.18, [report.r_at_ba[k] for k in ks], width=0.36, label="b to a")
    ax.set_xticks(x, [f"R@{k}" for k in ks])
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("recall")
    ax.legend(fontsize=8)
    _save(fig, path)
