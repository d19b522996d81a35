"""Online routing endpoint.

POST /v1/route takes a request carrying either a precomputed score or a
feature vector (when a head is configured), applies the calibrated
threshold for the active budget, and answers small/large with live budget
accounting. POST /v1/calibrate swaps the active calibration profile
atomically. The service never touches translation models; it is plumbing
around the policy module.

All shared state mutates inside one lock held across a decision and its
stats update, so concurrent load cannot observe or produce a torn state.
"""

from __future__ import annotations

import threading
import time
import warnings
from collections import deque
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .core import Direction, Route
from .errors import DimensionMismatchError, DomainError
from .heads import LinearHead, Target
from .policy import (
    GLOBAL_SCOPE,
    BudgetMode,
    BudgetState,
    CalibrationProfile,
    ProfileEntry,
    calibrate_threshold,
    route_stream,
)

# Completed-window large counts kept for budget audits (per stats endpoint).
_MAX_WINDOW_HISTORY = 100_000


@dataclass
class ServiceConfig:
    p: float = 0.3
    mode: BudgetMode = BudgetMode.SOFT_THRESHOLD
    window_size: int = 100
    head: LinearHead | None = None
    profile: CalibrationProfile | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.p <= 1.0:
            raise DomainError(f"p={self.p!r} outside (0, 1]")
        if self.window_size <= 0:
            raise DomainError("window_size must be > 0")
        if self.profile is not None and not any(
            abs(entry.p - self.p) < 1e-12 for entry in self.profile.entries
        ):
            warnings.warn(
                f"loaded profile has no entry for the active budget p={self.p}; "
                f"routing will answer 409 until one is calibrated",
                RuntimeWarning,
                stacklevel=2,
            )


@dataclass
class _Stats:
    total_seen: int = 0
    total_large: int = 0
    per_direction: dict[str, dict[str, int]] = field(default_factory=dict)

    def record(self, direction: str, large: bool) -> None:
        self.total_seen += 1
        self.total_large += 1 if large else 0
        counters = self.per_direction.setdefault(direction, {"seen": 0, "large": 0})
        counters["seen"] += 1
        counters["large"] += 1 if large else 0


class RouterService:
    """Shared state behind the endpoints; one lock serializes decisions."""

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        self.profile = config.profile or CalibrationProfile(entries=())
        self.head = config.head
        self.budget = BudgetState(window_size=config.window_size, mode=config.mode)
        self.stats = _Stats()
        self.recent: deque[int] = deque(maxlen=config.window_size)
        self.completed_windows: deque[int] = deque(maxlen=_MAX_WINDOW_HISTORY)
        self.started = time.monotonic()
        self.lock = threading.Lock()

    def calibrated(self) -> bool:
        """Any scope with an entry for the active budget counts as loaded."""
        return any(
            abs(entry.p - self.config.p) < 1e-12 for entry in self.profile.entries
        )


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": message})


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    service = RouterService(config or ServiceConfig())
    app = FastAPI(title="route-lmt", docs_url=None, redoc_url=None)
    app.state.service = service

    @app.post("/v1/route")
    async def handle_route(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body must be a JSON object")
        if not isinstance(body, dict):
            return _error(400, "body must be a JSON object")
        record_id = body.get("id")
        direction_tag = body.get("direction")
        if not isinstance(record_id, str) or not record_id:
            return _error(400, "'id' must be a non-empty string")
        if not isinstance(direction_tag, str):
            return _error(400, "'direction' must be a string")
        try:
            Direction(direction_tag)
        except DomainError as exc:
            return _error(400, str(exc))

        score = body.get("score")
        features = body.get("features")
        if score is not None and not _is_number(score):
            return _error(400, "'score' must be a number")
        if score is None:
            if features is None:
                return _error(422, "request carries neither 'score' nor 'features'")
            if service.head is None:
                return _error(422, "no head configured; send a precomputed 'score'")
            if not isinstance(features, list) or not all(
                _is_number(x) for x in features
            ):
                return _error(400, "'features' must be a list of numbers")
            try:
                prediction = service.head.predict(features)
            except DimensionMismatchError as exc:
                return _error(400, str(exc))
            score = -prediction if service.head.target is Target.QUALITY else prediction

        with service.lock:
            entry = service.profile.lookup(service.config.p, direction_tag)
            if entry is None:
                return _error(
                    409, f"no calibration loaded for p={service.config.p}"
                )
            decision, service.budget = route_stream(
                float(score),
                entry.tau,
                service.budget,
                service.config.p,
                request_id=record_id,
            )
            large = decision.route is Route.LARGE
            service.stats.record(direction_tag, large)
            service.recent.append(1 if large else 0)
            if service.budget.seen_in_window == service.budget.window_size:
                service.completed_windows.append(service.budget.routed_large_in_window)
            response = {
                "id": record_id,
                "route": decision.route.value,
                "score": float(score),
                "tau": entry.tau,
                "mode": service.config.mode.value,
            }
            if (
                service.config.mode is BudgetMode.HARD_CAP
                and not large
                and float(score) >= entry.tau
            ):
                response["reason"] = "budget_cap"
        return response

    @app.post("/v1/calibrate")
    async def handle_calibrate(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body must be a JSON object")
        if not isinstance(body, dict):
            return _error(400, "body must be a JSON object")
        scores = body.get("scores")
        if not isinstance(scores, list) or not scores:
            return _error(400, "'scores' must be a non-empty list of numbers")
        if not all(_is_number(x) for x in scores):
            return _error(400, "'scores' must be a non-empty list of numbers")
        p = body.get("p", service.config.p)
        if not _is_number(p) or not 0.0 < p <= 1.0:
            return _error(400, "'p' must be a number in (0, 1]")
        scope = body.get("scope", GLOBAL_SCOPE)
        if not isinstance(scope, str) or not scope:
            return _error(400, "'scope' must be a direction tag or 'global'")
        if scope != GLOBAL_SCOPE:
            try:
                Direction(scope)
            except DomainError as exc:
                return _error(400, str(exc))

        result = calibrate_threshold([float(x) for x in scores], float(p))
        entry = ProfileEntry(
            p=float(p), tau=result.tau, scope=scope, n_calibration=result.n_calibration
        )
        with service.lock:
            # Atomic whole-profile replacement: concurrent routes see either
            # the old profile or the new one, never a mix.
            service.profile = service.profile.with_entry(entry)
        return {
            "p": float(p),
            "tau": result.tau,
            "scope": scope,
            "achieved_fraction": result.achieved_fraction,
            "n_calibration": result.n_calibration,
            "degenerate": result.degenerate,
        }

    @app.get("/v1/stats")
    async def handle_stats():
        with service.lock:
            recent = list(service.recent)
            return {
                "total_seen": service.stats.total_seen,
                "total_large": service.stats.total_large,
                "rolling_large_rate": (sum(recent) / len(recent)) if recent else 0.0,
                "per_direction": {
                    tag: dict(counters)
                    for tag, counters in sorted(service.stats.per_direction.items())
                },
                "completed_window_large_counts": list(service.completed_windows),
                "window_size": service.config.window_size,
                "mode": service.config.mode.value,
                "p": service.config.p,
                "uptime_seconds": time.monotonic() - service.started,
            }

    @app.get("/v1/healthz")
    async def handle_healthz():
        with service.lock:
            ok = service.calibrated()
        if ok:
            return {"status": "ok"}
        return _error(503, "no calibration loaded")

    return app
