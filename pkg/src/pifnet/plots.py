"""Static SVG figure emitters for run reports.

Figures render through matplotlib's Agg backend and save as SVG next to
the delimited outputs. The SVG hash salt and metadata date are pinned so
repeated runs emit identical files.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

matplotlib.rcParams["svg.hashsalt"] = "pifnet"

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def save_prediction_plot(actual: Sequence[float], predicted: Sequence[float],
                         path, title: str = "Actual vs predicted load",
                         baseline: Optional[Sequence[float]] = None) -> None:
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(actual, label="actual", color="black", linewidth=1.2)
    ax.plot(predicted, label="predicted", color="tab:red", linewidth=1.2)
    if baseline is not None:
        ax.plot(baseline, label="persistence", color="tab:gray",
                linewidth=0.9, linestyle="--")
    ax.set_xlabel("test step")
    ax.set_ylabel("load (kW)")
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_bar_plot(names: Sequence[str], values: Sequence[float], path,
                  title: str = "Global feature importance",
                  ylabel: str = "mean |attribution|") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(names)), values, color="tab:blue")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_loss_curve(losses: Sequence[float], path,
                    title: str = "Training loss") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(range(1, len(losses) + 1), losses, color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
