"""Turn routing scores into decisions under a large-model call budget.

Offline: select the top-p fraction by score (`route_top_p`). Streaming:
calibrate a threshold tau so that about a fraction p of traffic scores at
or above it (`calibrate_threshold`), then enforce it per request
(`route_stream`), optionally with a hard per-window cap. `route_guarded`
adds a quality filter on top of the gain ranking while holding the
route-to-large rate at p.

Rounding and tie rules are pinned here because reproducibility depends on
them: k = round(p*N) half-up, score ties at a cutoff break by ascending
id, and score == tau routes large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .core import RequestRecord, Route, RoutingDecision
from .errors import AlignmentError, ConfigError, DomainError

GLOBAL_SCOPE = "global"

# Guard against float drizzle in p*N (e.g. 0.3*10 == 2.9999999999999996).
_EPS = 1e-9


def budget_size(p: float, n: int) -> int:
    """Number of large-model slots for budget p over n requests.

    round(p*n) with halves rounding up, robust to float representation
    of p*n just below an integer.
    """
    return int(math.floor(p * n + 0.5 + _EPS))


def quantile_rank(p: float, n: int) -> int:
    """ceil(p*n), robust to float representation just above an integer."""
    return max(1, int(math.ceil(p * n - _EPS)))


def window_cap(p: float, window_size: int) -> int:
    """Hard cap on large routes per window: floor(p * window_size)."""
    return int(math.floor(p * window_size + _EPS))


def _check_p(p: float) -> None:
    if not (0.0 < p <= 1.0):
        raise DomainError(f"budget p={p!r} outside (0, 1]")


def route_top_p(scored: list[tuple[str, float]], p: float) -> list[RoutingDecision]:
    """Route the k = round(p*N) highest-scoring requests to the large model.

    Ties at the cutoff break by ascending id; ranks follow the same
    (score desc, id asc) order. Decisions are returned in rank order.
    """
    _check_p(p)
    if not scored:
        raise ConfigError("route_top_p: empty input")
    ids = [item[0] for item in scored]
    if len(set(ids)) != len(ids):
        raise AlignmentError("route_top_p: duplicate ids")
    for record_id, score in scored:
        if not math.isfinite(score):
            raise DomainError(f"route_top_p: non-finite score for id {record_id!r}")
    ordered = sorted(scored, key=lambda item: (-item[1], item[0]))
    k = budget_size(p, len(ordered))
    return [
        RoutingDecision(
            id=record_id,
            score=score,
            route=Route.LARGE if rank < k else Route.SMALL,
            rank=rank,
        )
        for rank, (record_id, score) in enumerate(ordered)
    ]


@dataclass(frozen=True)
class ThresholdCalibration:
    """Calibrated threshold plus what it actually achieves on the sample."""

    tau: float
    achieved_fraction: float
    n_calibration: int
    degenerate: bool  # all calibration scores equal; threshold admits everything


def calibrate_threshold(scores: list[float], p: float) -> ThresholdCalibration:
    """Pick tau as the ceil(p*N)-th largest calibration score.

    The fraction of calibration scores >= tau is then the smallest
    achievable fraction at or above p; ties can push it higher, up to 1.0
    when every score is identical (flagged as degenerate).
    """
    _check_p(p)
    if not scores:
        raise ConfigError("calibrate_threshold: empty input")
    ordered = sorted(scores, reverse=True)
    tau = ordered[quantile_rank(p, len(ordered)) - 1]
    at_or_above = sum(1 for s in ordered if s >= tau)
    return ThresholdCalibration(
        tau=tau,
        achieved_fraction=at_or_above / len(ordered),
        n_calibration=len(ordered),
        degenerate=ordered[0] == ordered[-1],
    )


class BudgetMode(Enum):
    SOFT_THRESHOLD = "threshold"
    HARD_CAP = "hardcap"


@dataclass(frozen=True)
class BudgetState:
    """Sliding-window budget counters for one stream.

    SoftThreshold only monitors the window; HardCap refuses upgrades once
    floor(p * window_size) large routes have been issued in the current
    window. Counters reset every window_size requests.
    """

    window_size: int
    routed_large_in_window: int = 0
    seen_in_window: int = 0
    mode: BudgetMode = BudgetMode.SOFT_THRESHOLD

    def __post_init__(self) -> None:
        if self.window_size <= 0:
            raise DomainError("window_size must be > 0")
        if not 0 <= self.routed_large_in_window <= self.seen_in_window <= self.window_size:
            raise DomainError(
                "need 0 <= routed_large_in_window <= seen_in_window <= window_size"
            )


def route_stream(
    score: float,
    tau: float,
    state: BudgetState,
    p: float,
    request_id: str = "",
) -> tuple[RoutingDecision, BudgetState]:
    """Decide one streaming request and advance the window counters.

    score == tau routes large (the threshold is inclusive). Callers own
    serialization: feed decisions for one stream through this function in
    order, threading the returned state back in.
    """
    _check_p(p)
    current = state
    if current.seen_in_window >= current.window_size:
        current = replace(current, seen_in_window=0, routed_large_in_window=0)
    go_large = score >= tau
    if current.mode is BudgetMode.HARD_CAP and go_large:
        go_large = current.routed_large_in_window < window_cap(p, current.window_size)
    new_state = replace(
        current,
        seen_in_window=current.seen_in_window + 1,
        routed_large_in_window=current.routed_large_in_window + (1 if go_large else 0),
    )
    decision = RoutingDecision(
        id=request_id,
        score=score,
        route=Route.LARGE if go_large else Route.SMALL,
    )
    return decision, new_state


@dataclass(frozen=True)
class GuardedRouting:
    """Guarded-routing outcome: decisions plus how the guard behaved."""

    decisions: tuple[RoutingDecision, ...]
    guard_threshold: float
    admitted_guarded: int
    backfilled: int


def route_guarded(
    records: list[RequestRecord] | tuple[RequestRecord, ...],
    gain_scores: list[float],
    guard_scores: list[float],
    p: float,
    guard_quantile: float = 0.3,
) -> GuardedRouting:
    """Gain-ranked routing filtered by a quality guard at a fixed rate.

    guard_scores carry quality polarity (higher = better predicted or
    observed small-model output). The guard threshold theta is the
    guard_quantile lower-tail quantile of guard_scores; walking the gain
    ranking, a request is admitted to the large model only when its guard
    score is <= theta, i.e. when the small model looks weak. If fewer
    than k = round(p*N) requests pass the guard, the remaining slots are
    backfilled by gain so the route-to-large rate stays exactly p; the
    backfill count is reported, never silent.
    """
    _check_p(p)
    if not (0.0 < guard_quantile <= 1.0):
        raise DomainError(f"guard_quantile={guard_quantile!r} outside (0, 1]")
    n = len(records)
    if n == 0:
        raise ConfigError("route_guarded: empty input")
    if len(gain_scores) != n or len(guard_scores) != n:
        raise AlignmentError(
            f"route_guarded: got {n} records, {len(gain_scores)} gain scores, "
            f"{len(guard_scores)} guard scores"
        )
    theta = sorted(guard_scores)[quantile_rank(guard_quantile, n) - 1]
    order = sorted(
        range(n), key=lambda i: (-gain_scores[i], records[i].id)
    )
    k = budget_size(p, n)
    admitted: set[int] = set()
    rejected: list[int] = []
    for i in order:
        if len(admitted) >= k:
            break
        if guard_scores[i] <= theta:
            admitted.add(i)
        else:
            rejected.append(i)
    admitted_guarded = len(admitted)
    backfilled = 0
    for i in rejected:
        if len(admitted) >= k:
            break
        admitted.add(i)
        backfilled += 1
    decisions = tuple(
        RoutingDecision(
            id=records[i].id,
            score=gain_scores[i],
            route=Route.LARGE if i in admitted else Route.SMALL,
            rank=rank,
        )
        for rank, i in enumerate(order)
    )
    return GuardedRouting(
        decisions=decisions,
        guard_threshold=theta,
        admitted_guarded=admitted_guarded,
        backfilled=backfilled,
    )


@dataclass(frozen=True)
class ProfileEntry:
    """One calibrated threshold: tau for budget p within a scope."""

    p: float
    tau: float
    scope: str = GLOBAL_SCOPE  # direction tag or "global"
    n_calibration: int = 1

    def __post_init__(self) -> None:
        _check_p(self.p)
        if self.n_calibration <= 0:
            raise DomainError("n_calibration must be > 0")


@dataclass(frozen=True)
class CalibrationProfile:
    """Per-budget thresholds with provenance of the scorer that produced them."""

    entries: tuple[ProfileEntry, ...]
    scorer_fingerprint: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: set[tuple[str, float]] = set()
        for entry in self.entries:
            key = (entry.scope, entry.p)
            if key in seen:
                raise DomainError(f"duplicate profile entry for scope={entry.scope!r} p={entry.p}")
            seen.add(key)

    def lookup(self, p: float, direction: str | None = None) -> ProfileEntry | None:
        """Entry for (direction, p), falling back to the global scope."""
        scopes = [GLOBAL_SCOPE] if direction is None else [direction, GLOBAL_SCOPE]
        for scope in scopes:
            for entry in self.entries:
                if entry.scope == scope and abs(entry.p - p) < 1e-12:
                    return entry
        return None

    def with_entry(self, entry: ProfileEntry) -> "CalibrationProfile":
        """New profile with the matching (scope, p) entry replaced or added."""
        kept = tuple(
            e
            for e in self.entries
            if not (e.scope == entry.scope and abs(e.p - entry.p) < 1e-12)
        )
        return CalibrationProfile(
            entries=kept + (entry,), scorer_fingerprint=self.scorer_fingerprint
        )
