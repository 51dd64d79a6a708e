"""Session engine: the authoritative in-memory model of every device in the
session, fed by decoded wire messages and a periodic heartbeat sweep.

All timing decisions use a single caller-supplied clock (`now`, ms); message
timestamps are device-local and only checked for per-stream monotonicity.
That keeps the engine deterministic under test: replaying the same messages
with the same clock values produces the same state and events.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .core import DeviceMetrics, HandFrame, Pose, Vec3
from .protocol import (
    ClientMessage,
    EventMessage,
    Heartbeat,
    Hello,
    MetricsUpdate,
    PoseUpdate,
    ViewFrame,
)
from .trace import (
    FilterParams,
    TraceSample,
    TrajectoryTrace,
    history_slice,
    trace_filter,
    validate_filter_params,
)

DEFAULT_HEARTBEAT_TIMEOUT_MS = 1500
DEFAULT_SWEEP_INTERVAL_MS = 100


class UnknownVisitor(Exception):
    def __init__(self, visitor_id: str):
        super().__init__(f"no hello received from {visitor_id!r}")
        self.visitor_id = visitor_id


# --------------------------------------------------------------------------
# Events the engine emits toward recorders / dashboards


@dataclass(frozen=True, slots=True)
class CameOnline:
    t: int
    visitor_id: str


@dataclass(frozen=True, slots=True)
class WentOffline:
    t: int
    visitor_id: str
    last_position: Vec3 | None


@dataclass(frozen=True, slots=True)
class TrackingLost:
    t: int
    visitor_id: str


@dataclass(frozen=True, slots=True)
class TrackingRecovered:
    t: int
    visitor_id: str


@dataclass(frozen=True, slots=True)
class CalibrationDone:
    t: int
    visitor_id: str
    station: str
    cumulative_count: int


SystemEvent = CameOnline | WentOffline | TrackingLost | TrackingRecovered | CalibrationDone

_EVENT_NAMES = {
    CameOnline: "came_online",
    WentOffline: "went_offline",
    TrackingLost: "tracking_lost",
    TrackingRecovered: "tracking_recovered",
    CalibrationDone: "calibration",
}


def event_name(event: SystemEvent) -> str:
    return _EVENT_NAMES[type(event)]


# --------------------------------------------------------------------------
# Per-visitor state


@dataclass(slots=True)
class VisitorState:
    id: str
    role: str
    model: str
    palette_index: int
    online: bool = True
    offline_since: int | None = None
    last_position: Vec3 | None = None
    tracking_ok: bool = True
    lost_since: int | None = None
    head: Pose | None = None
    left: HandFrame | None = None
    right: HandFrame | None = None
    metrics: DeviceMetrics | None = None
    latest_view: ViewFrame | None = None
    last_t: int | None = None   # device clock of last accepted message
    last_seen: int = 0          # server clock of last traffic
    stale_count: int = 0
    trace: TrajectoryTrace = field(default_factory=TrajectoryTrace)
    calib_counts: dict[str, int] = field(default_factory=dict)


class Recorder:
    """Appends kept trace samples and system events as JSONL files."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._events: IO[str] = (self.directory / "events.jsonl").open("a")
        self._traces: dict[str, IO[str]] = {}

    def record_sample(self, visitor_id: str, sample: TraceSample) -> None:
        f = self._traces.get(visitor_id)
        if f is None:
            f = (self.directory / f"trace_{visitor_id}.jsonl").open("a")
            self._traces[visitor_id] = f
        p, q = sample.pose.position, sample.pose.orientation
        f.write(json.dumps({
            "t": sample.t,
            "p": [p.x, p.y, p.z],
            "q": [q.x, q.y, q.z, q.w],
            "fps": sample.fps,
        }, separators=(",", ":")) + "\n")

    def record_event(self, event: SystemEvent) -> None:
        obj: dict = {"event": event_name(event), "t": event.t, "visitor": event.visitor_id}
        if isinstance(event, WentOffline) and event.last_position is not None:
            lp = event.last_position
            obj["last_position"] = [lp.x, lp.y, lp.z]
        if isinstance(event, CalibrationDone):
            obj["station"] = event.station
            obj["count"] = event.cumulative_count
        self._events.write(json.dumps(obj, separators=(",", ":")) + "\n")

    def close(self) -> None:
        self._events.close()
        for f in self._traces.values():
            f.close()


class SessionEngine:
    """Applies messages to visitor state and detects liveness transitions.

    ingest() must be called with a monotonically non-decreasing `now`;
    heartbeat_sweep() is expected roughly every DEFAULT_SWEEP_INTERVAL_MS.
    """

    def __init__(self, filter_params: FilterParams | None = None,
                 heartbeat_timeout_ms: int = DEFAULT_HEARTBEAT_TIMEOUT_MS,
                 recorder: Recorder | None = None):
        self.params = filter_params if filter_params is not None else FilterParams()
        validate_filter_params(self.params)
        self.heartbeat_timeout_ms = heartbeat_timeout_ms
        self.recorder = recorder
        self.visitors: dict[str, VisitorState] = {}
        self.decode_errors = 0
        self._join_order = 0

    def note_decode_error(self) -> None:
        self.decode_errors += 1

    def set_filter_params(self, params: FilterParams) -> None:
        validate_filter_params(params)
        self.params = params
        for state in self.visitors.values():
            state.trace.params = params

    def sorted_visitors(self) -> list[VisitorState]:
        return sorted(self.visitors.values(), key=lambda v: v.id)

    def stale_samples(self) -> int:
        return sum(v.stale_count for v in self.visitors.values())

    def connected_count(self) -> int:
        return sum(1 for v in self.visitors.values() if v.online)

    def ingest(self, msg: ClientMessage, now: int) -> list[SystemEvent]:
        """Apply one decoded message at server time `now` (ms)."""
        events: list[SystemEvent] = []

        if isinstance(msg, Hello):
            state = self.visitors.get(msg.id)
            if state is None:
                state = VisitorState(
                    id=msg.id, role=msg.role, model=msg.model,
                    palette_index=self._join_order,
                    trace=TrajectoryTrace(params=self.params),
                )
                self._join_order += 1
                self.visitors[msg.id] = state
                events.append(CameOnline(t=now, visitor_id=msg.id))
            else:
                state.role = msg.role
                state.model = msg.model
                if not state.online:
                    state.online = True
                    state.offline_since = None
                    events.append(CameOnline(t=now, visitor_id=msg.id))
            state.last_seen = now
            self._record_events(events)
            return events

        state = self.visitors.get(msg.id)
        if state is None:
            raise UnknownVisitor(msg.id)

        # Any traffic counts as liveness, even if the payload is stale.
        state.last_seen = now
        if not state.online:
            state.online = True
            state.offline_since = None
            events.append(CameOnline(t=now, visitor_id=msg.id))

        if state.last_t is not None and msg.t < state.last_t:
            state.stale_count += 1
            self._record_events(events)
            return events
        state.last_t = msg.t

        if isinstance(msg, PoseUpdate):
            state.head = msg.head
            state.left = msg.left
            state.right = msg.right
            state.last_position = msg.head.position
            fps = state.metrics.fps if state.metrics is not None else None
            sample = TraceSample(t=now, pose=msg.head, fps=fps)
            if trace_filter(state.trace, sample) and self.recorder is not None:
                self.recorder.record_sample(state.id, sample)
        elif isinstance(msg, MetricsUpdate):
            state.metrics = msg.metrics
        elif isinstance(msg, ViewFrame):
            state.latest_view = msg
        elif isinstance(msg, EventMessage):
            events.extend(self._apply_event(state, msg, now))
        elif isinstance(msg, Heartbeat):
            pass
        else:
            raise TypeError(f"unhandled message: {msg!r}")

        self._record_events(events)
        return events

    def _apply_event(self, state: VisitorState, msg: EventMessage, now: int) -> list[SystemEvent]:
        if msg.kind == "calibration":
            assert msg.station is not None  # enforced at decode
            count = state.calib_counts.get(msg.station, 0) + 1
            state.calib_counts[msg.station] = count
            return [CalibrationDone(t=now, visitor_id=state.id,
                                    station=msg.station, cumulative_count=count)]
        if msg.kind == "tracking_lost":
            if not state.tracking_ok:
                return []  # already lost; repeated notices are idempotent
            state.tracking_ok = False
            state.lost_since = now
            return [TrackingLost(t=now, visitor_id=state.id)]
        if msg.kind == "tracking_recovered":
            if state.tracking_ok:
                return []
            state.tracking_ok = True
            state.lost_since = None
            return [TrackingRecovered(t=now, visitor_id=state.id)]
        raise TypeError(f"unhandled event kind: {msg.kind!r}")

    def heartbeat_sweep(self, now: int) -> list[SystemEvent]:
        """Mark visitors offline once silent for longer than the timeout."""
        events: list[SystemEvent] = []
        for state in self.visitors.values():
            if state.online and now - state.last_seen > self.heartbeat_timeout_ms:
                state.online = False
                state.offline_since = now
                events.append(WentOffline(t=now, visitor_id=state.id,
                                          last_position=state.last_position))
        self._record_events(events)
        return events

    def get_history(self, visitor_id: str, up_to_t: float = float("inf")) -> list[TraceSample]:
        """Cumulative kept trace for one visitor, unaffected by the live
        truncation window."""
        state = self.visitors.get(visitor_id)
        if state is None:
            raise UnknownVisitor(visitor_id)
        return history_slice(state.trace, up_to_t)

    def _record_events(self, events: Iterable[SystemEvent]) -> None:
        if self.recorder is not None:
            for e in events:
                self.recorder.record_event(e)
