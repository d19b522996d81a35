"""Figure rendering for the report path.

The CLI writes these PNGs next to the CSV output; the CSVs stay the
canonical, byte-stable artifact and these are the human view of them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .core import RiskBucket
from .evaluation import EvalReport, ParetoCurve, RiskHistogram

_BUCKET_COLORS = {
    RiskBucket.SEVERE_LOSS: "#c0392b",
    RiskBucket.MINOR_LOSS: "#e67e22",
    RiskBucket.TIE: "#95a5a6",
    RiskBucket.SUBSTANTIAL_GAIN: "#27ae60",
}

_BUCKET_LABELS = {
    RiskBucket.SEVERE_LOSS: "severe loss",
    RiskBucket.MINOR_LOSS: "minor loss",
    RiskBucket.TIE: "tie",
    RiskBucket.SUBSTANTIAL_GAIN: "substantial gain",
}


def render_pareto(curves: list[ParetoCurve], path: str | Path) -> Path:
    """Quality vs budget, one line per scorer."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i, curve in enumerate(sorted(curves, key=lambda c: c.scorer)):
        ps = [p for p, _ in curve.points]
        qs = [q for _, q in curve.points]
        ax.plot(ps, qs, marker="o", markersize=3.5, color=f"C{i}", label=curve.scorer)
    ax.set_xlabel("route-to-large budget p")
    ax.set_ylabel("system quality")
    ax.set_xlim(0.0, 1.0)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_risk(histograms: list[RiskHistogram], path: str | Path) -> Path:
    """Stacked gain-bucket shares of routed-to-large requests per scorer."""
    path = Path(path)
    ordered = sorted(histograms, key=lambda h: h.scorer)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    xs = range(len(ordered))
    bottoms = [0.0] * len(ordered)
    for bucket in RiskBucket:
        heights = [h.proportions[bucket] for h in ordered]
        ax.bar(
            xs,
            heights,
            bottom=bottoms,
            color=_BUCKET_COLORS[bucket],
            label=_BUCKET_LABELS[bucket],
            width=0.6,
        )
        bottoms = [b + h for b, h in zip(bottoms, heights)]
    ax.set_xticks(list(xs))
    ax.set_xticklabels([h.scorer for h in ordered], rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("share of routed-to-large requests")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_metrics(reports: list[EvalReport], path: str | Path) -> Path:
    """Per-scope HitRate and MeanDelta bars for one or more scorers."""
    path = Path(path)
    ordered = sorted(reports, key=lambda r: (r.scorer, r.scope))
    labels = [f"{r.scorer}\n{r.scope}" for r in ordered]
    xs = range(len(ordered))
    fig, (ax_hit, ax_delta) = plt.subplots(1, 2, figsize=(9.6, 4.0))
    ax_hit.bar(xs, [r.hitrate_at_p for r in ordered], color="C0", width=0.6)
    ax_hit.set_xticks(list(xs))
    ax_hit.set_xticklabels(labels, fontsize=7)
    ax_hit.set_ylabel("HitRate@p")
    ax_hit.set_ylim(0.0, 1.0)
    ax_hit.grid(axis="y", alpha=0.3)
    ax_delta.bar(xs, [r.mean_delta_at_p for r in ordered], color="C1", width=0.6)
    ax_delta.set_xticks(list(xs))
    ax_delta.set_xticklabels(labels, fontsize=7)
    ax_delta.set_ylabel("MeanDelta@p")
    ax_delta.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
