"""Report figures written next to the JSONL/table outputs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# keeps PNG bytes independent of the matplotlib build
_PNG_METADATA = {"Software": None}


def _figure(width=6.0, height=None):
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    height = height or width * golden_ratio
    fig, ax = plt.subplots(figsize=(width, height), dpi=100)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_METADATA)
    plt.close(fig)


def plot_metric_curves(results, n_values, path, title=None):
    """F1@n and NDCG@n (%) against n, one line per model; error bars are seed std."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.8), dpi=100)
    for ax, family in zip(axes, ("f1", "ndcg")):
        for model, reports in results.items():
            vals = np.array([[r.metrics[f"{family}@{n}"] for n in n_values] for r in reports]) * 100
            std = vals.std(axis=0, ddof=1) if len(reports) > 1 else np.zeros(len(n_values))
            ax.errorbar(n_values, vals.mean(axis=0), yerr=std, marker="o", capsize=3, label=model)
        ax.set_xlabel("n")
        ax.set_ylabel(f"{family.upper()}@n (%)")
        ax.set_xticks(list(n_values))
        ax.grid(True, alpha=0.3)
    axes[0].legend(frameon=False)
    if title:
        fig.suptitle(title)
    _save(fig, path)


def plot_history(history, path, metric="f1@5", title=None):
    """Validation metric per epoch from training-history records."""
    pts = [(r["epoch"], r["value"]) for r in history if r["metric"] == metric]
    fig, ax = _figure()
    if pts:
        epochs, values = zip(*pts)
        ax.plot(epochs, np.asarray(values) * 100, lw=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel(f"validation {metric} (%)")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_spectrum(features_by_side, path):
    """Eigenvalues of each Laplacian in ascending order."""
    fig, ax = _figure()
    for side, feat in features_by_side.items():
        ax.plot(np.arange(1, feat.K + 1), feat.eigenvalues, marker=".", lw=1, label=side)
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(frameon=False)
    _save(fig, path)
