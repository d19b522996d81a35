"""Domain types and the routing arithmetic.

Quality scores live on a 0-100 scale throughout the package, so marginal
gains live in [-100, 100]. A routing decision is binary: serve with the
small model or upgrade to the large one. Everything here is a pure
function over immutable inputs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .errors import AlignmentError, DomainError, IncompleteLabelsError

QUALITY_MIN = 0.0
QUALITY_MAX = 100.0

_DIRECTION_RE = re.compile(r"^([a-z]{2,3})-([a-z]{2,3})$")


@dataclass(frozen=True)
class Direction:
    """A translation direction tag of the form `<src>-<tgt>`.

    Source and target are distinct lowercase language codes, e.g. "en-zh".
    """

    tag: str

    def __post_init__(self) -> None:
        match = _DIRECTION_RE.match(self.tag)
        if match is None:
            raise DomainError(
                f"bad direction {self.tag!r}: expected '<src>-<tgt>' lowercase codes"
            )
        if match.group(1) == match.group(2):
            raise DomainError(
                f"bad direction {self.tag!r}: source and target must differ"
            )

    def __str__(self) -> str:
        return self.tag


@dataclass(frozen=True)
class RequestRecord:
    """One routable request with whatever signals were exported for it.

    Optional fields are None when the upstream pipeline did not provide
    them. Live traffic typically lacks q_large; labeled-evaluation
    operations reject such records instead of silently skipping them.
    """

    id: str
    direction: Direction
    q_small: float | None = None
    q_large: float | None = None
    features: tuple[float, ...] | None = None
    tokens: tuple[str, ...] | None = None
    first_step_entropy: float | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise DomainError("record id must be non-empty")
        for name in ("q_small", "q_large"):
            value = getattr(self, name)
            if value is not None and not (QUALITY_MIN <= value <= QUALITY_MAX):
                raise DomainError(
                    f"record {self.id!r}: {name}={value!r} outside [0, 100]"
                )
        if self.first_step_entropy is not None and not self.first_step_entropy >= 0:
            raise DomainError(
                f"record {self.id!r}: first_step_entropy must be >= 0"
            )
        if self.features is not None:
            object.__setattr__(self, "features", tuple(float(x) for x in self.features))
        if self.tokens is not None:
            object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def labeled(self) -> bool:
        return self.q_small is not None and self.q_large is not None

    def true_gain(self) -> float:
        """Observed marginal gain; requires both quality labels."""
        if self.q_small is None or self.q_large is None:
            raise IncompleteLabelsError(f"record {self.id!r} lacks quality labels")
        return gain(self.q_small, self.q_large)


class Route(Enum):
    SMALL = "small"
    LARGE = "large"


@dataclass(frozen=True)
class RoutingDecision:
    """Route assignment for one request.

    `score` is the routing priority (higher = route to large); `rank` is
    the position in priority order (0 = highest) when the decision came
    from a ranked batch policy.
    """

    id: str
    score: float
    route: Route
    rank: int | None = None

    def __post_init__(self) -> None:
        if self.rank is not None and self.rank < 0:
            raise DomainError(f"decision {self.id!r}: rank must be >= 0")


class RiskBucket(Enum):
    """Gain intervals partitioning [-100, 100], worst to best."""

    SEVERE_LOSS = "severe_loss"
    MINOR_LOSS = "minor_loss"
    TIE = "tie"
    SUBSTANTIAL_GAIN = "substantial_gain"


def _check_quality(name: str, value: float) -> None:
    if not (QUALITY_MIN <= value <= QUALITY_MAX):
        raise DomainError(f"{name}={value!r} outside [0, 100]")


def gain(q_small: float, q_large: float) -> float:
    """Marginal gain of serving with the large model: q_large - q_small."""
    _check_quality("q_small", q_small)
    _check_quality("q_large", q_large)
    return q_large - q_small


def bucket_gain(g: float) -> RiskBucket:
    """Classify a gain into its risk bucket.

    Severe loss: g <= -5. Minor loss: -5 < g < -0.5. Tie: |g| <= 0.5.
    Substantial gain: g > 0.5. The four intervals partition [-100, 100].
    """
    if not (-100.0 <= g <= 100.0):
        raise DomainError(f"gain {g!r} outside [-100, 100]")
    if g <= -5.0:
        return RiskBucket.SEVERE_LOSS
    if g < -0.5:
        return RiskBucket.MINOR_LOSS
    if g <= 0.5:
        return RiskBucket.TIE
    return RiskBucket.SUBSTANTIAL_GAIN


def routes_by_id(
    records: list[RequestRecord] | tuple[RequestRecord, ...],
    decisions: list[RoutingDecision] | tuple[RoutingDecision, ...],
) -> dict[str, bool]:
    """Map record id -> routed-to-large, checking exact id coverage."""
    routes: dict[str, bool] = {}
    for decision in decisions:
        if decision.id in routes:
            raise AlignmentError(f"duplicate decision for id {decision.id!r}")
        routes[decision.id] = decision.route is Route.LARGE
    record_ids = {record.id for record in records}
    if len(record_ids) != len(records):
        raise AlignmentError("duplicate record ids")
    if record_ids != set(routes):
        missing = record_ids - set(routes)
        extra = set(routes) - record_ids
        raise AlignmentError(
            f"decisions do not cover records exactly "
            f"(missing={sorted(missing)[:3]}, extra={sorted(extra)[:3]})"
        )
    return routes


def system_quality(
    records: list[RequestRecord] | tuple[RequestRecord, ...],
    decisions: list[RoutingDecision] | tuple[RoutingDecision, ...],
) -> float:
    """Mean realized quality under the given decisions.

    Each record contributes q_large if routed to the large model and
    q_small otherwise.
    """
    routes = routes_by_id(records, decisions)
    total = 0.0
    for record in records:
        if record.q_small is None or record.q_large is None:
            raise IncompleteLabelsError(f"record {record.id!r} lacks quality labels")
        total += record.q_large if routes[record.id] else record.q_small
    return total / len(records)


def decompose(
    records: list[RequestRecord] | tuple[RequestRecord, ...],
    decisions: list[RoutingDecision] | tuple[RoutingDecision, ...],
) -> tuple[float, float]:
    """Split system quality into (mean q_small, mean routed gain).

    The identity mean_q_small + mean_z_gain == system_quality holds to
    1e-9 for any decision set, which is what makes gain the routing
    signal: the first term is policy-independent.
    """
    routes = routes_by_id(records, decisions)
    base = 0.0
    routed_gain = 0.0
    for record in records:
        if record.q_small is None or record.q_large is None:
            raise IncompleteLabelsError(f"record {record.id!r} lacks quality labels")
        base += record.q_small
        if routes[record.id]:
            routed_gain += record.q_large - record.q_small
    n = len(records)
    return base / n, routed_gain / n
