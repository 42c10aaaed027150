"""Figures of piecewise performance vs time-to-event."""
from typing import Dict, Optional
import logging

import matplotlib
matplotlib.use("Agg")  # Non-interactive backend
import matplotlib.pyplot as plt

from dbrnn.models.schemas import PiecewiseMetrics

logger = logging.getLogger("dbrnn")

_METRICS = (("accuracy", "Accuracy"), ("tpr", "True positive rate"), ("fpr", "False positive rate"))
_COLORS = ("#5865F2", "#ED4245", "#57F287", "#FEE75C", "#EB459E")


def _curve(metrics: PiecewiseMetrics, field: str):
    """(time-to-event at bin end, value) pairs, skipping bins without a value."""
    points = [(b.end_s, getattr(b, field)) for b in metrics.bins if getattr(b, field) is not None]
    return [p[0] for p in points], [p[1] for p in points]


def plot_piecewise(curves: Dict[str, PiecewiseMetrics], path: str, title: Optional[str] = None):
    """Accuracy, TPR and FPR of one or more models side by side, time-to-event decreasing left to right."""
    fig, axes = plt.subplots(1, len(_METRICS), figsize=(15, 4.5), sharex=True)
    for ax, (field, label) in zip(axes, _METRICS):
        for color, (name, metrics) in zip(_COLORS * 4, curves.items()):
            x, y = _curve(metrics, field)
            ax.plot(x, y, linewidth=2, color=color, marker="o", markersize=4, label=name)
        ax.set_xlabel("Time to event (s)")
        ax.set_ylabel(label)
        ax.set_ylim(-0.02, 1.02)
        ax.invert_xaxis()
        ax.grid(True, alpha=0.3, linestyle="--")
    axes[0].legend(loc="lower left")
    if title:
        fig.suptitle(title, fontweight="bold")
    plt.tight_layout()
    try:
        fig.savefig(path, format="png", dpi=100, bbox_inches="tight")
    finally:
        plt.close(fig)
    logger.info(f"[Eval] Saved figure {path}")


def plot_accuracy_overlay(curves: Dict[str, PiecewiseMetrics], path: str, title: Optional[str] = None):
    """Accuracy curves only, e.g. an individual driver against the combined pool."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for color, (name, metrics) in zip(_COLORS * 4, curves.items()):
        x, y = _curve(metrics, "accuracy")
        ax.plot(x, y, linewidth=2, color=color, marker="o", markersize=4, label=name)
    ax.set_xlabel("Time to event (s)")
    ax.set_ylabel("Accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.invert_xaxis()
    ax.grid(True, alpha=0.3, linestyle="--")
    ax.legend(loc="lower left")
    if title:
        ax.set_title(title, fontweight="bold")
    plt.tight_layout()
    try:
        fig.savefig(path, format="png", dpi=100, bbox_inches="tight")
    finally:
        plt.close(fig)
    logger.info(f"[Eval] Saved figure {path}")
