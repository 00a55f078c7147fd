"""Pareto-front figures for sweep reports."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluator import ALL, ParetoPoint  # noqa: E402


def pareto_figure(points: Sequence[ParetoPoint], title: Optional[str] = None, metric_label: str = "task metric"):
    """Task metric on x, compression on y, one line per language.

    Points within a line follow increasing threshold. The ``ALL`` row is
    drawn thicker and on top.
    """
    series = defaultdict(list)
    for p in points:
        series[p.language].append(p)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for lang in sorted(series, key=lambda s: (s == ALL, s)):
        pts = sorted(series[lang], key=lambda p: p.threshold)
        xs = [p.mean_metric for p in pts]
        ys = [p.mean_compression for p in pts]
        if lang == ALL:
            ax.plot(xs, ys, "-o", color="black", lw=2.0, ms=4, label=ALL, zorder=3)
        else:
            ax.plot(xs, ys, "-o", lw=1.0, ms=3, alpha=0.8, label=lang)
    ax.set_xlabel(metric_label)
    ax.set_ylabel("context compression")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    return fig


def save_pareto(points: Sequence[ParetoPoint], path: Union[str, Path], **kwargs) -> Path:
    path = Path(path)
    fig = pareto_figure(points, **kwargs)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
