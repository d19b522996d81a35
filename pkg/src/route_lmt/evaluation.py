"""The measurement surface: ranking, allocation, sweep and risk metrics.

Spearman measures global ranking quality over the full pool. HitRate@p
and MeanDelta@p measure allocation quality of the selected top-p set and
are computed per direction (each direction gets its own top-k), with a
macro-average across directions; the averaging policy is macro because
test pools are balanced per direction, and it is echoed in report
metadata. All selection uses the shared (score desc, id asc) tie rule.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    RequestRecord,
    RiskBucket,
    Route,
    RoutingDecision,
    bucket_gain,
    routes_by_id,
    system_quality,
)
from .errors import AlignmentError, ConfigError, IncompleteLabelsError
from .policy import budget_size, route_top_p
from .scorers import Scorer

DEFAULT_P_GRID = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

AVERAGE_SCOPE = "avg"


@dataclass(frozen=True)
class EvalReport:
    """One row of router metrics for a scope (direction tag or "avg")."""

    scorer: str
    scope: str
    spearman: float | None
    hitrate_at_p: float
    mean_delta_at_p: float
    system_quality: float
    p: float
    n: int


@dataclass(frozen=True)
class ParetoCurve:
    """System quality as a function of the large-model budget p."""

    scorer: str
    points: tuple[tuple[float, float], ...]  # (p, quality), p strictly increasing

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))
        ps = [p for p, _ in self.points]
        if ps != sorted(set(ps)):
            raise ConfigError("pareto points must have strictly increasing p")
        if not ps or ps[0] != 0.0 or ps[-1] != 1.0:
            raise ConfigError("pareto curve must include the p=0 and p=1 endpoints")


@dataclass(frozen=True)
class RiskHistogram:
    """Gain-bucket counts over routed-to-large requests."""

    scorer: str
    counts: dict[RiskBucket, int]
    empty: bool  # nothing was routed to the large model

    @property
    def n_large(self) -> int:
        return sum(self.counts.values())

    @property
    def proportions(self) -> dict[RiskBucket, float]:
        total = self.n_large
        if total == 0:
            return {bucket: 0.0 for bucket in RiskBucket}
        return {bucket: self.counts[bucket] / total for bucket in RiskBucket}


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties sharing their average (fractional) rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(a: list[float], b: list[float]) -> float | None:
    """Spearman rank correlation with average ranks for ties.

    Returns None instead of raising when either vector is constant, so a
    degenerate scorer cannot abort a sweep; report emitters print "n/a".
    """
    if len(a) != len(b):
        raise AlignmentError(f"spearman: length mismatch ({len(a)} vs {len(b)})")
    if len(a) < 2:
        raise ConfigError("spearman needs at least 2 points")
    xa = np.asarray(a, dtype=float)
    xb = np.asarray(b, dtype=float)
    if xa.min() == xa.max() or xb.min() == xb.max():
        return None
    ra = _average_ranks(xa)
    rb = _average_ranks(xb)
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = float(np.sqrt((da * da).sum() * (db * db).sum()))
    if denom == 0.0:
        return None
    return float((da * db).sum() / denom)


def _top_k(values: list[float], ids: list, k: int) -> set:
    order = sorted(range(len(values)), key=lambda i: (-values[i], ids[i]))
    return {ids[i] for i in order[:k]}


def hit_rate_at_p(
    pred_scores: list[float],
    true_gains: list[float],
    p: float,
    ids: list | None = None,
) -> float:
    """Overlap fraction between the predicted and oracle top-p sets.

    Both sets are built with the shared (value desc, id asc) tie rule;
    `ids` defaults to list positions. k = round(p*N); an empty selection
    (k == 0) counts as full overlap.
    """
    n = _check_aligned(pred_scores, true_gains, p, ids)
    ids = list(range(n)) if ids is None else ids
    k = budget_size(p, n)
    if k == 0:
        return 1.0
    predicted = _top_k(pred_scores, ids, k)
    oracle = _top_k(true_gains, ids, k)
    return len(predicted & oracle) / k


def mean_delta_at_p(
    pred_scores: list[float],
    true_gains: list[float],
    p: float,
    ids: list | None = None,
) -> float:
    """Mean true gain over the predicted top-p set (0.0 when k == 0)."""
    n = _check_aligned(pred_scores, true_gains, p, ids)
    ids = list(range(n)) if ids is None else ids
    k = budget_size(p, n)
    if k == 0:
        return 0.0
    gains = dict(zip(ids, true_gains))
    selected = _top_k(pred_scores, ids, k)
    return sum(gains[i] for i in selected) / k


def _check_aligned(pred, true, p, ids) -> int:
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"p={p!r} outside (0, 1]")
    if len(pred) == 0:
        raise ConfigError("empty input")
    if len(pred) != len(true) or (ids is not None and len(ids) != len(pred)):
        raise AlignmentError("pred_scores, true_gains and ids must be aligned")
    return len(pred)


def _require_labeled(records) -> None:
    for record in records:
        if not record.labeled:
            raise IncompleteLabelsError(f"record {record.id!r} lacks quality labels")


def pareto_sweep(dataset, scorer: Scorer, p_grid=DEFAULT_P_GRID) -> ParetoCurve:
    """System quality across budgets, endpoints always included.

    quality(0) is the all-small mean and quality(1) the all-large mean,
    exact by construction for every scorer.
    """
    records = list(dataset)
    if not records:
        raise ConfigError("pareto_sweep: empty dataset")
    _require_labeled(records)
    for p in p_grid:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"p_grid value {p!r} outside [0, 1]")
    grid = sorted(set(float(p) for p in p_grid) | {0.0, 1.0})
    scored = [(r.id, scorer.score(r)) for r in records]
    points = []
    for p in grid:
        if p == 0.0:
            quality = sum(r.q_small for r in records) / len(records)
        else:
            quality = system_quality(records, route_top_p(scored, p))
        points.append((p, quality))
    return ParetoCurve(scorer=scorer.label, points=tuple(points))


def risk_histogram(records, decisions, scorer_label: str = "") -> RiskHistogram:
    """Bucket true gains of the routed-to-large subset.

    An empty large set is not an error; the histogram comes back with
    zero counts and the `empty` flag raised.
    """
    records = list(records)
    _require_labeled(records)
    routes = routes_by_id(records, decisions)
    counts = {bucket: 0 for bucket in RiskBucket}
    n_large = 0
    for record in records:
        if routes[record.id]:
            counts[bucket_gain(record.true_gain())] += 1
            n_large += 1
    return RiskHistogram(scorer=scorer_label, counts=counts, empty=n_large == 0)


def evaluate_router(dataset, scorer: Scorer, p: float) -> list[EvalReport]:
    """Per-direction metric rows plus the averaged row, Table-style.

    Each direction is routed with its own top-k (k = round(p * n_d)).
    The "avg" row macro-averages HitRate and MeanDelta over directions,
    carries the full-pool Spearman, and reports system quality over all
    records under the per-direction routing. Directions with fewer than
    2 records are skipped with a warning.
    """
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"p={p!r} outside (0, 1]")
    records = list(dataset)
    if not records:
        raise ConfigError("evaluate_router: empty dataset")
    _require_labeled(records)

    by_direction: dict[str, list[RequestRecord]] = {}
    for record in records:
        by_direction.setdefault(record.direction.tag, []).append(record)

    reports: list[EvalReport] = []
    all_decisions: list[RoutingDecision] = []
    for tag in sorted(by_direction):
        group = by_direction[tag]
        if len(group) < 2:
            warnings.warn(
                f"direction {tag!r} has {len(group)} record(s); skipped",
                RuntimeWarning,
                stacklevel=2,
            )
            # Unevaluated records still need a decision for global quality.
            all_decisions.extend(
                RoutingDecision(id=r.id, score=0.0, route=Route.SMALL) for r in group
            )
            continue
        ids = [r.id for r in group]
        scores = [scorer.score(r) for r in group]
        gains = [r.true_gain() for r in group]
        decisions = route_top_p(list(zip(ids, scores)), p)
        all_decisions.extend(decisions)
        reports.append(
            EvalReport(
                scorer=scorer.label,
                scope=tag,
                spearman=spearman(scores, gains),
                hitrate_at_p=hit_rate_at_p(scores, gains, p, ids=ids),
                mean_delta_at_p=mean_delta_at_p(scores, gains, p, ids=ids),
                system_quality=system_quality(group, decisions),
                p=p,
                n=len(group),
            )
        )
    if not reports:
        raise ConfigError("no direction has >= 2 records")

    pooled_scores = [scorer.score(r) for r in records]
    pooled_gains = [r.true_gain() for r in records]
    reports.append(
        EvalReport(
            scorer=scorer.label,
            scope=AVERAGE_SCOPE,
            spearman=spearman(pooled_scores, pooled_gains),
            hitrate_at_p=sum(r.hitrate_at_p for r in reports) / len(reports),
            mean_delta_at_p=sum(r.mean_delta_at_p for r in reports) / len(reports),
            system_quality=system_quality(records, all_decisions),
            p=p,
            n=len(records),
        )
    )
    return reports


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _round4(value: float | None):
    return None if value is None else round(value, 4)


def emit_report(
    reports: list[EvalReport],
    curves: list[ParetoCurve],
    histograms: list[RiskHistogram],
    out_dir: str | Path,
    config: dict | None = None,
) -> dict[str, Path]:
    """Write metrics.csv, pareto.csv, risk.csv and report.json.

    Output is deterministic byte-for-byte: fixed header order, rows
    sorted, 4 fixed decimal places, LF line endings, UTF-8. Empty inputs
    produce headers-only files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def scope_key(report: EvalReport):
        return (report.scorer, report.scope == AVERAGE_SCOPE, report.scope)

    metric_lines = ["scorer,scope,p,spearman,hitrate,mean_delta,system_quality,n"]
    for r in sorted(reports, key=scope_key):
        metric_lines.append(
            f"{r.scorer},{r.scope},{r.p:.4f},{_fmt(r.spearman)},{_fmt(r.hitrate_at_p)},"
            f"{_fmt(r.mean_delta_at_p)},{_fmt(r.system_quality)},{r.n}"
        )

    pareto_lines = ["scorer,p,quality"]
    for curve in sorted(curves, key=lambda c: c.scorer):
        for p, quality in curve.points:
            pareto_lines.append(f"{curve.scorer},{p:.4f},{quality:.4f}")

    risk_lines = ["scorer,bucket,count,proportion"]
    for histogram in sorted(histograms, key=lambda h: h.scorer):
        proportions = histogram.proportions
        for bucket in RiskBucket:
            risk_lines.append(
                f"{histogram.scorer},{bucket.value},{histogram.counts[bucket]},"
                f"{proportions[bucket]:.4f}"
            )

    bundle = {
        "config": config or {},
        "averaging": "macro over directions",
        "metrics": [
            {
                "scorer": r.scorer,
                "scope": r.scope,
                "p": _round4(r.p),
                "spearman": _round4(r.spearman),
                "hitrate": _round4(r.hitrate_at_p),
                "mean_delta": _round4(r.mean_delta_at_p),
                "system_quality": _round4(r.system_quality),
                "n": r.n,
            }
            for r in sorted(reports, key=scope_key)
        ],
        "pareto": [
            {
                "scorer": curve.scorer,
                "points": [[_round4(p), _round4(q)] for p, q in curve.points],
            }
            for curve in sorted(curves, key=lambda c: c.scorer)
        ],
        "risk": [
            {
                "scorer": h.scorer,
                "empty": h.empty,
                "counts": {bucket.value: h.counts[bucket] for bucket in RiskBucket},
                "proportions": {
                    bucket.value: _round4(h.proportions[bucket]) for bucket in RiskBucket
                },
            }
            for h in sorted(histograms, key=lambda h: h.scorer)
        ],
    }

    paths = {
        "metrics": out_dir / "metrics.csv",
        "pareto": out_dir / "pareto.csv",
        "risk": out_dir / "risk.csv",
        "report": out_dir / "report.json",
    }
    paths["metrics"].write_text("\n".join(metric_lines) + "\n", encoding="utf-8", newline="\n")
    paths["pareto"].write_text("\n".join(pareto_lines) + "\n", encoding="utf-8", newline="\n")
    paths["risk"].write_text("\n".join(risk_lines) + "\n", encoding="utf-8", newline="\n")
    paths["report"].write_text(
        json.dumps(bundle, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )
    return paths
