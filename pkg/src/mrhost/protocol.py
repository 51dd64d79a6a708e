"""Wire protocol: newline-delimited JSON messages from devices, control
messages from dashboards, and the snapshot encoding pushed back out.

Decoding is total: any byte sequence either yields a message or a
ProtocolError describing why, and a LineDecoder resynchronizes on the next
newline so one corrupt frame never poisons the stream. Snapshot encoding
rounds floats to 6 decimals (with -0.0 normalized) so identical scenes
serialize to identical bytes.
"""

from __future__ import annotations

import base64
import binascii
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Iterable, Mapping

from .core import DeviceMetrics, HandFrame, HAND_JOINT_COUNT, Pose, Quat, Vec3
from .geometry import (
    Arrow,
    BoxWire,
    CircleSet,
    EventMarker,
    FrustumWire,
    HeadMarker,
    Panel,
    Ribbon,
    SceneSnapshot,
    Skeleton,
    SquareOutline,
    check_patch_values,
)
from .trace import TraceSample

MAX_FRAME_BYTES = 1_048_576  # 1 MiB per line, before parsing
DEFAULT_INGEST_PORT = 7401
DEFAULT_DASH_PORT = 7402

ROLES = ("visitor", "host")
EVENT_KINDS = ("calibration", "tracking_lost", "tracking_recovered")


class ProtocolError(Exception):
    """Decode failure; kind is one of unknown_type, missing_field,
    bad_value, oversize_frame."""

    def __init__(self, kind: str, detail: str):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail


# --------------------------------------------------------------------------
# Device -> server messages


@dataclass(frozen=True, slots=True)
class Hello:
    id: str
    role: str
    model: str


@dataclass(frozen=True, slots=True)
class Heartbeat:
    t: int
    id: str


@dataclass(frozen=True, slots=True)
class PoseUpdate:
    t: int
    id: str
    head: Pose
    left: HandFrame | None = None
    right: HandFrame | None = None


@dataclass(frozen=True, slots=True)
class MetricsUpdate:
    t: int
    id: str
    metrics: DeviceMetrics


@dataclass(frozen=True, slots=True)
class EventMessage:
    t: int
    id: str
    kind: str
    station: str | None = None


@dataclass(frozen=True, slots=True)
class ViewFrame:
    t: int
    id: str
    w: int
    h: int
    fmt: str
    data: bytes


ClientMessage = Hello | Heartbeat | PoseUpdate | MetricsUpdate | EventMessage | ViewFrame


# --------------------------------------------------------------------------
# Encoding (exact field order matters: goldens diff these bytes)


def _pose_obj(p: Pose) -> dict[str, Any]:
    return {
        "p": [p.position.x, p.position.y, p.position.z],
        "q": [p.orientation.x, p.orientation.y, p.orientation.z, p.orientation.w],
    }


def _hand_obj(h: HandFrame) -> dict[str, Any]:
    return {"tracked": h.tracked, "joints": [_pose_obj(j) for j in h.joints]}


def encode(msg: ClientMessage) -> bytes:
    """One NDJSON line (newline included) for a device message."""
    obj: dict[str, Any]
    if isinstance(msg, Hello):
        obj = {"type": "hello", "id": msg.id, "role": msg.role, "model": msg.model}
    elif isinstance(msg, Heartbeat):
        obj = {"type": "hb", "t": msg.t, "id": msg.id}
    elif isinstance(msg, PoseUpdate):
        obj = {"type": "pose", "t": msg.t, "id": msg.id, "head": _pose_obj(msg.head)}
        if msg.left is not None:
            obj["left"] = _hand_obj(msg.left)
        if msg.right is not None:
            obj["right"] = _hand_obj(msg.right)
    elif isinstance(msg, MetricsUpdate):
        m = msg.metrics
        obj = {
            "type": "metrics", "t": msg.t, "id": msg.id,
            "metrics": {
                "fps": m.fps, "battery": m.battery, "cpu": m.cpu, "gpu": m.gpu,
                "net_in_bps": m.net_in_bps, "net_out_bps": m.net_out_bps,
                "latency_ms": m.latency_ms,
            },
        }
    elif isinstance(msg, EventMessage):
        obj = {"type": "event", "t": msg.t, "id": msg.id, "kind": msg.kind}
        if msg.station is not None:
            obj["station"] = msg.station
    elif isinstance(msg, ViewFrame):
        obj = {
            "type": "view", "t": msg.t, "id": msg.id, "w": msg.w, "h": msg.h,
            "fmt": msg.fmt, "data": base64.b64encode(msg.data).decode("ascii"),
        }
    else:
        raise TypeError(f"not a client message: {msg!r}")
    return json.dumps(obj, separators=(",", ":"), allow_nan=False).encode() + b"\n"


# --------------------------------------------------------------------------
# Decoding


def _require(obj: Mapping[str, Any], field: str) -> Any:
    if field not in obj:
        raise ProtocolError("missing_field", field)
    return obj[field]


def _str_field(obj: Mapping[str, Any], field: str) -> str:
    v = _require(obj, field)
    if not isinstance(v, str) or not v:
        raise ProtocolError("bad_value", f"{field} must be a non-empty string")
    return v


def _int_field(obj: Mapping[str, Any], field: str, minimum: int = 0) -> int:
    v = _require(obj, field)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ProtocolError("bad_value", f"{field} must be an integer")
    if v < minimum:
        raise ProtocolError("bad_value", f"{field} must be >= {minimum}")
    return v


def _num(v: Any, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProtocolError("bad_value", f"{what} must be a number")
    f = float(v)
    if not math.isfinite(f):
        raise ProtocolError("bad_value", f"{what} must be finite")
    return f


def _parse_vec(v: Any, what: str) -> Vec3:
    if not isinstance(v, list) or len(v) != 3:
        raise ProtocolError("bad_value", f"{what} must be [x,y,z]")
    return Vec3(*(_num(c, what) for c in v))


def _parse_quat(v: Any, what: str) -> Quat:
    if not isinstance(v, list) or len(v) != 4:
        raise ProtocolError("bad_value", f"{what} must be [x,y,z,w]")
    q = Quat(*(_num(c, what) for c in v))
    if abs(q.norm() - 1.0) > 1e-6:
        raise ProtocolError("bad_value", f"{what} must be unit length")
    return q


def _parse_pose(v: Any, what: str) -> Pose:
    if not isinstance(v, dict):
        raise ProtocolError("bad_value", f"{what} must be an object")
    if "p" not in v or "q" not in v:
        raise ProtocolError("missing_field", f"{what}.p/q")
    return Pose(_parse_vec(v["p"], f"{what}.p"), _parse_quat(v["q"], f"{what}.q"))


def _parse_hand(v: Any, what: str) -> HandFrame:
    if not isinstance(v, dict):
        raise ProtocolError("bad_value", f"{what} must be an object")
    if "tracked" not in v:
        raise ProtocolError("missing_field", f"{what}.tracked")
    tracked = v["tracked"]
    if not isinstance(tracked, bool):
        raise ProtocolError("bad_value", f"{what}.tracked must be a bool")
    joints_raw = v.get("joints", [])
    if not isinstance(joints_raw, list):
        raise ProtocolError("bad_value", f"{what}.joints must be a list")
    joints = tuple(_parse_pose(j, f"{what}.joints[{i}]") for i, j in enumerate(joints_raw))
    expected = HAND_JOINT_COUNT if tracked else 0
    if len(joints) != expected:
        raise ProtocolError("bad_value", f"{what}.joints must have {expected} entries")
    return HandFrame(tracked=tracked, joints=joints)


def decode(line: bytes | str) -> ClientMessage:
    """Parse one line; raises ProtocolError on any malformed input."""
    if isinstance(line, str):
        line = line.encode()
    if len(line) > MAX_FRAME_BYTES:
        raise ProtocolError("oversize_frame", f"{len(line)} bytes")
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ProtocolError("bad_value", f"not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("bad_value", "frame must be a JSON object")
    mtype = obj.get("type")
    if mtype is None:
        raise ProtocolError("missing_field", "type")

    if mtype == "hello":
        role = _str_field(obj, "role")
        if role not in ROLES:
            raise ProtocolError("bad_value", f"role must be one of {ROLES}")
        return Hello(id=_str_field(obj, "id"), role=role, model=_str_field(obj, "model"))

    if mtype == "hb":
        return Heartbeat(t=_int_field(obj, "t"), id=_str_field(obj, "id"))

    if mtype == "pose":
        left = _parse_hand(obj["left"], "left") if obj.get("left") is not None else None
        right = _parse_hand(obj["right"], "right") if obj.get("right") is not None else None
        return PoseUpdate(
            t=_int_field(obj, "t"), id=_str_field(obj, "id"),
            head=_parse_pose(_require(obj, "head"), "head"), left=left, right=right,
        )

    if mtype == "metrics":
        raw = _require(obj, "metrics")
        if not isinstance(raw, dict):
            raise ProtocolError("bad_value", "metrics must be an object")
        vals = {}
        for name in ("fps", "battery", "cpu", "gpu", "net_in_bps", "net_out_bps", "latency_ms"):
            if name not in raw:
                raise ProtocolError("missing_field", f"metrics.{name}")
            vals[name] = _num(raw[name], f"metrics.{name}")
        metrics = DeviceMetrics(**vals)
        bad = metrics.violation()
        if bad is not None:
            raise ProtocolError("bad_value", f"metrics.{bad} out of range")
        return MetricsUpdate(t=_int_field(obj, "t"), id=_str_field(obj, "id"), metrics=metrics)

    if mtype == "event":
        kind = _str_field(obj, "kind")
        if kind not in EVENT_KINDS:
            raise ProtocolError("bad_value", f"kind must be one of {EVENT_KINDS}")
        station = None
        if obj.get("station") is not None:
            station = _str_field(obj, "station")
        if kind == "calibration" and station is None:
            raise ProtocolError("missing_field", "station")
        return EventMessage(t=_int_field(obj, "t"), id=_str_field(obj, "id"),
                            kind=kind, station=station)

    if mtype == "view":
        w = _int_field(obj, "w", minimum=1)
        h = _int_field(obj, "h", minimum=1)
        fmt = _str_field(obj, "fmt")
        raw = _require(obj, "data")
        if not isinstance(raw, str):
            raise ProtocolError("bad_value", "data must be a string")
        try:
            data = base64.b64decode(raw, validate=True)
        except (binascii.Error, ValueError):
            raise ProtocolError("bad_value", "data is not valid base64") from None
        if fmt == "rgb8" and len(data) != w * h * 3:
            raise ProtocolError("bad_value", f"rgb8 payload must be {w * h * 3} bytes")
        return ViewFrame(t=_int_field(obj, "t"), id=_str_field(obj, "id"),
                         w=w, h=h, fmt=fmt, data=data)

    raise ProtocolError("unknown_type", str(mtype))


class LineDecoder:
    """Incremental NDJSON splitter for one connection.

    feed() returns messages and inline ProtocolErrors in arrival order;
    after an oversize or corrupt frame, decoding resumes at the next
    newline, so callers can count errors and keep reading.
    """

    def __init__(self) -> None:
        self._buf = bytearray()
        self._discarding = False

    def feed(self, data: bytes) -> list[ClientMessage | ProtocolError]:
        out: list[ClientMessage | ProtocolError] = []
        self._buf.extend(data)
        while True:
            idx = self._buf.find(b"\n")
            if idx < 0:
                if self._discarding:
                    self._buf.clear()
                elif len(self._buf) > MAX_FRAME_BYTES:
                    out.append(ProtocolError("oversize_frame", "unterminated frame exceeds 1 MiB"))
                    self._buf.clear()
                    self._discarding = True
                return out
            line = bytes(self._buf[:idx])
            del self._buf[: idx + 1]
            if self._discarding:
                self._discarding = False
                continue
            if not line.strip():
                continue
            try:
                out.append(decode(line))
            except ProtocolError as e:
                out.append(e)


# --------------------------------------------------------------------------
# Dashboard -> server control messages


@dataclass(frozen=True, slots=True)
class SetViz:
    patch: Mapping[str, Any]


@dataclass(frozen=True, slots=True)
class RequestHistory:
    visitor_id: str
    up_to_t: float = math.inf


@dataclass(frozen=True, slots=True)
class SetHostPose:
    pose: Pose


ControlMessage = SetViz | RequestHistory | SetHostPose


def decode_control(text: str | bytes) -> ControlMessage:
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ProtocolError("bad_value", f"not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("bad_value", "control frame must be a JSON object")
    mtype = obj.get("type")
    if mtype is None:
        raise ProtocolError("missing_field", "type")

    if mtype == "set_viz":
        patch = _require(obj, "patch")
        if not isinstance(patch, dict):
            raise ProtocolError("bad_value", "patch must be an object")
        bad = check_patch_values(patch)
        if bad is not None:
            raise ProtocolError("bad_value", f"patch key {bad!r} unknown or ill-typed")
        return SetViz(patch=dict(patch))

    if mtype == "request_history":
        up_to = obj.get("up_to_t")
        if up_to is None:
            bound = math.inf
        else:
            if isinstance(up_to, bool) or not isinstance(up_to, (int, float)):
                raise ProtocolError("bad_value", "up_to_t must be a number")
            bound = float(up_to)
        return RequestHistory(visitor_id=_str_field(obj, "visitor_id"), up_to_t=bound)

    if mtype == "set_host_pose":
        return SetHostPose(pose=_parse_pose(_require(obj, "pose"), "pose"))

    raise ProtocolError("unknown_type", str(mtype))


def encode_control(msg: ControlMessage) -> str:
    if isinstance(msg, SetViz):
        obj: dict[str, Any] = {"type": "set_viz", "patch": dict(msg.patch)}
    elif isinstance(msg, RequestHistory):
        obj = {"type": "request_history", "visitor_id": msg.visitor_id}
        if math.isfinite(msg.up_to_t):
            obj["up_to_t"] = msg.up_to_t
    elif isinstance(msg, SetHostPose):
        obj = {"type": "set_host_pose", "pose": _pose_obj(msg.pose)}
    else:
        raise TypeError(f"not a control message: {msg!r}")
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


# --------------------------------------------------------------------------
# Server -> dashboard encoding (fixed precision, deterministic bytes)


# adding 0.0 normalizes -0.0 so output bytes stay platform-independent;
# the value-keyed caches pay off because trajectory windows re-encode the
# same (frozen, hashable) samples on every tick; results are shared
# read-only lists, safe to place into multiple JSON trees
def _f(x: float) -> float:
    return round(x, 6) + 0.0


@lru_cache(maxsize=65536)
def _fvec(v: Vec3) -> list[float]:
    return [round(v.x, 6) + 0.0, round(v.y, 6) + 0.0, round(v.z, 6) + 0.0]


@lru_cache(maxsize=65536)
def _fquat(q: Quat) -> list[float]:
    return [round(q.x, 6) + 0.0, round(q.y, 6) + 0.0,
            round(q.z, 6) + 0.0, round(q.w, 6) + 0.0]


def _fpose(p: Pose) -> dict[str, Any]:
    return {"p": _fvec(p.position), "q": _fquat(p.orientation)}


@lru_cache(maxsize=65536)
def _fcolor(c: Any) -> list[float]:
    return [round(c.r, 6) + 0.0, round(c.g, 6) + 0.0,
            round(c.b, 6) + 0.0, round(c.a, 6) + 0.0]


def _metrics_obj(m: DeviceMetrics) -> dict[str, Any]:
    return {
        "fps": _f(m.fps), "battery": _f(m.battery), "cpu": _f(m.cpu), "gpu": _f(m.gpu),
        "net_in_bps": _f(m.net_in_bps), "net_out_bps": _f(m.net_out_bps),
        "latency_ms": _f(m.latency_ms),
    }


@lru_cache(maxsize=65536)
def _frustum_obj(p: FrustumWire) -> dict[str, Any]:
    # mini trajectory frustums are value-identical across ticks
    obj: dict[str, Any] = {
        "kind": "frustum", "apex": _fpose(p.apex), "fov_h": _f(p.fov_h),
        "fov_v": _f(p.fov_v), "depth": _f(p.depth), "color": _fcolor(p.color),
    }
    if p.face_texture_ref is not None:
        obj["face_texture_ref"] = p.face_texture_ref
    return obj


def _fwidth(w: float) -> float:
    return round(w, 6) + 0.0


def _primitive_obj(p: Any) -> dict[str, Any]:
    # dispatch order follows runtime frequency: trajectories dominate
    if isinstance(p, Ribbon):
        return {
            "kind": "ribbon",
            "points": list(map(_fvec, p.points)),
            "widths": list(map(_fwidth, p.widths)),
            "colors": list(map(_fcolor, p.colors)),
            "pattern": p.pattern,
            "anim_speed": _f(p.anim_speed),
        }
    if isinstance(p, FrustumWire):
        return _frustum_obj(p)
    if isinstance(p, Panel):
        obj = {
            "kind": "panel", "owner": p.owner, "center": _fvec(p.center),
            "normal": _fvec(p.normal), "up": _fvec(p.up),
            "size": [_f(p.size[0]), _f(p.size[1])], "lines": list(p.lines),
        }
        if p.texture_ref is not None:
            obj["texture_ref"] = p.texture_ref
        return obj
    if isinstance(p, BoxWire):
        return {"kind": "box", "center": _fvec(p.center),
                "half_extents": _fvec(p.half_extents), "color": _fcolor(p.color)}
    if isinstance(p, Arrow):
        return {"kind": "arrow", "position": _fvec(p.position),
                "height": _f(p.height), "color": _fcolor(p.color)}
    if isinstance(p, CircleSet):
        return {"kind": "circles", "center": _fvec(p.center),
                "radii": [_f(r) for r in p.radii],
                "colors": [_fcolor(c) for c in p.colors]}
    if isinstance(p, SquareOutline):
        return {"kind": "square", "center_xz": [_f(p.center_xz[0]), _f(p.center_xz[1])],
                "y": _f(p.y), "side": _f(p.side), "color": _fcolor(p.color)}
    if isinstance(p, Skeleton):
        return {"kind": "skeleton", "owner": p.owner,
                "joints": [_fpose(j) for j in p.joints], "axis_len": _f(p.axis_len)}
    if isinstance(p, HeadMarker):
        return {"kind": "head", "owner": p.owner, "pose": _fpose(p.pose)}
    if isinstance(p, EventMarker):
        return {"kind": "event_marker", "position": _fvec(p.position),
                "event": p.event, "age_s": _f(p.age_s)}
    raise TypeError(f"not a primitive: {p!r}")


def _visitor_obj(v: Any) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "id": v.id, "role": v.role, "online": v.online, "tracking_ok": v.tracking_ok,
    }
    if v.t is not None:
        obj["t"] = v.t
    if v.position is not None:
        obj["position"] = _fvec(v.position)
    if v.metrics is not None:
        obj["metrics"] = _metrics_obj(v.metrics)
    if v.view is not None:
        view = v.view
        obj["view"] = {
            "t": view.t, "w": view.w, "h": view.h, "fmt": view.fmt,
            "data": base64.b64encode(view.data).decode("ascii"),
        }
    return obj


def encode_snapshot(snap: SceneSnapshot) -> bytes:
    """Deterministic JSON bytes for one scene snapshot (no trailing newline)."""
    obj: dict[str, Any] = {
        "t": snap.t,
        "visitors": [_visitor_obj(v) for v in snap.visitors],
        "primitives": [_primitive_obj(p) for p in snap.primitives],
    }
    if snap.config is not None:
        obj["config"] = snap.config
    if snap.diagnostics is not None:
        obj["diagnostics"] = snap.diagnostics
    return json.dumps(obj, separators=(",", ":"), allow_nan=False).encode()


def encode_history(visitor_id: str, samples: Iterable[TraceSample]) -> str:
    entries = []
    for s in samples:
        entries.append({
            "t": s.t,
            "p": _fvec(s.pose.position),
            "q": _fquat(s.pose.orientation),
            "fps": _f(s.fps) if s.fps is not None else None,
        })
    return json.dumps({"type": "history", "visitor": visitor_id, "samples": entries},
                      separators=(",", ":"), allow_nan=False)


def encode_error(message: str) -> str:
    return json.dumps({"type": "error", "message": message}, separators=(",", ":"))
