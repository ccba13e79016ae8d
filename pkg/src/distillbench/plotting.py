"""Matplotlib figures for the report directory."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 110,
    "savefig.bbox": "tight",
    # fixed metadata keeps reruns from differing only by timestamp
    "svg.hashsalt": "distillbench",
}

AXIS_LABELS = {"cost": "cost units", "wall": "wall-clock (s)"}


def figsize(scale: float = 1.0, ratio: float | None = None) -> tuple[float, float]:
    width = 6.4 * scale
    ratio = (math.sqrt(5.0) - 1.0) / 2.0 if ratio is None else ratio
    return width, width * ratio


def plot_curves(curves_by_seed: dict[int, dict[str, list[tuple[float, float]]]], axis: str,
                path: str | Path, baseline_ids: dict[int, str] | None = None) -> Path:
    """Quality vs resource, one panel per seed, one line per run."""
    seeds = sorted(curves_by_seed)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(seeds), figsize=figsize(0.6 * max(len(seeds), 1) + 0.4, 0.45),
                                 squeeze=False, sharey=True)
        for ax, seed in zip(axes[0], seeds):
            for run_id, pts in sorted(curves_by_seed[seed].items()):
                xs, ys = zip(*pts)
                is_base = baseline_ids is not None and baseline_ids.get(seed) == run_id
                ax.plot(xs, ys, lw=2.0 if is_base else 1.0, color="k" if is_base else None,
                        label=run_id.split("__s")[0])
            ax.set_title(f"seed {seed}")
            ax.set_xlabel(AXIS_LABELS.get(axis, axis))
        axes[0][0].set_ylabel("val accuracy")
        axes[0][-1].legend(loc="lower right", frameon=False)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path


def plot_pareto(points, axis: str, path: str | Path) -> Path:
    """Scatter of final (resource, quality) with the non-dominated front joined up."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.8))
        dom = [p for p in points if p.dominated]
        front = sorted((p for p in points if not p.dominated), key=lambda p: p.resource)
        if dom:
            ax.scatter([p.resource for p in dom], [p.quality for p in dom], s=12, c="0.6", label="dominated")
        if front:
            ax.plot([p.resource for p in front], [p.quality for p in front], "o-", ms=4, c="C3",
                    label="Pareto front")
            for p in front:
                ax.annotate(p.run_id.split("__s")[0], (p.resource, p.quality), fontsize=6,
                            xytext=(3, 3), textcoords="offset points")
        ax.set_xlabel(AXIS_LABELS.get(axis, axis))
        ax.set_ylabel("final val accuracy")
        ax.legend(frameon=False)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path
