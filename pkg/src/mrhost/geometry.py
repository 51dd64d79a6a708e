"""Visualization geometry: pure functions from session state to renderer-
agnostic drawable primitives.

Everything here is deterministic and side-effect free. Inputs are poses,
metrics, and trace windows; outputs are flat dataclasses (ribbons, panels,
wireframes, markers) that any renderer can draw without knowing how they
were derived. Conventions: right-handed, +Y up, meters, forward is -Z,
angles in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Any, ClassVar, Iterable, Mapping, Sequence

from .core import (
    ConfigError,
    DeviceMetrics,
    Pose,
    Quat,
    Rgba,
    Vec3,
    clamp,
    desaturate,
    fps_color,
    lerp_color,
    palette_color,
)
from .trace import FilterParams, WindowSample, validate_filter_params

# Placement constants. Panel sizes are in meters (width, height).
CURVE_SAMPLES = 32
LINK_ANCHOR_FWD = 0.4
LINK_ANCHOR_DOWN = 0.2
LINK_CTRL_LEN = 1.0
NET_RIBBON_OFFSET = 0.05
NET_CURVE_SAMPLES = 32
SUBJECT_VIEW_OFFSET = 0.45
VIEW_PANEL_SIZE = (0.4, 0.4)
INFO_PANEL_SIZE = (0.36, 0.22)
INFO_SUBJECT_RAISE = 0.3
INFO_STACK_PITCH = 0.25
FLOOR_STACK_PITCH = 0.3
FLOOR_AHEAD = 2.0
GRID_PITCH_X = 0.5
GRID_PITCH_Y = 0.35
GRID_AZ_CELL = 18.0
GRID_EL_CELL = 12.0
TRAJ_RIBBON_WIDTH = 0.03
MINI_FRUSTUM_DEPTH = 0.15
CALIB_BASE_RADIUS = 0.4
CALIB_RADIUS_STEP = 0.15
CALIB_MAX_CIRCLES = 8

GRAY = Rgba(0.5, 0.5, 0.5, 1.0)
AREA_COLOR = Rgba(1.0, 0.45, 0.2, 0.9)
CALIB_COLD = Rgba(0.0, 0.0, 1.0, 1.0)
CALIB_HOT = Rgba(1.0, 0.0, 0.0, 1.0)
NET_IN_COLOR = Rgba(0.2, 0.8, 0.9, 0.9)
NET_OUT_COLOR = Rgba(1.0, 0.6, 0.1, 0.9)

DEFAULT_HOST_POSE = Pose(Vec3(0.0, 1.6, 0.0), Quat())

_UP = Vec3(0.0, 1.0, 0.0)


# --------------------------------------------------------------------------
# Primitives


@dataclass(frozen=True, slots=True)
class Ribbon:
    kind: ClassVar[str] = "ribbon"
    points: tuple[Vec3, ...]
    widths: tuple[float, ...]
    colors: tuple[Rgba, ...]
    pattern: str = "plain"      # "plain" | "arrowed"
    anim_speed: float = 0.0     # pattern scroll speed, pattern-lengths/s

    def __post_init__(self) -> None:
        n = len(self.points)
        if n < 2:
            raise ValueError(f"ribbon needs >= 2 points, got {n}")
        if len(self.widths) != n or len(self.colors) != n:
            raise ValueError("ribbon points/widths/colors lengths differ")


@dataclass(frozen=True, slots=True)
class Panel:
    kind: ClassVar[str] = "panel"
    owner: str
    center: Vec3
    normal: Vec3
    up: Vec3
    size: tuple[float, float]
    lines: tuple[str, ...] = ()
    texture_ref: str | None = None


@dataclass(frozen=True, slots=True)
class FrustumWire:
    kind: ClassVar[str] = "frustum"
    apex: Pose
    fov_h: float
    fov_v: float
    depth: float
    color: Rgba
    face_texture_ref: str | None = None


@dataclass(frozen=True, slots=True)
class BoxWire:
    kind: ClassVar[str] = "box"
    center: Vec3
    half_extents: Vec3
    color: Rgba


@dataclass(frozen=True, slots=True)
class Arrow:
    kind: ClassVar[str] = "arrow"
    position: Vec3     # tip hovers here, pointing down
    height: float
    color: Rgba


@dataclass(frozen=True, slots=True)
class CircleSet:
    kind: ClassVar[str] = "circles"
    center: Vec3
    radii: tuple[float, ...]
    colors: tuple[Rgba, ...]

    def __post_init__(self) -> None:
        if len(self.radii) != len(self.colors):
            raise ValueError("circle radii/colors lengths differ")
        for a, b in zip(self.radii, self.radii[1:]):
            if not b > a:
                raise ValueError("circle radii must be strictly increasing")


@dataclass(frozen=True, slots=True)
class SquareOutline:
    kind: ClassVar[str] = "square"
    center_xz: tuple[float, float]
    y: float
    side: float
    color: Rgba


@dataclass(frozen=True, slots=True)
class Skeleton:
    kind: ClassVar[str] = "skeleton"
    owner: str
    joints: tuple[Pose, ...]
    axis_len: float


@dataclass(frozen=True, slots=True)
class HeadMarker:
    kind: ClassVar[str] = "head"
    owner: str
    pose: Pose


@dataclass(frozen=True, slots=True)
class EventMarker:
    kind: ClassVar[str] = "event_marker"
    position: Vec3
    event: str
    age_s: float


Primitive = (
    Ribbon | Panel | FrustumWire | BoxWire | Arrow | CircleSet
    | SquareOutline | Skeleton | HeadMarker | EventMarker
)


# --------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True, slots=True)
class VizConfig:
    frustum: bool = True
    arrow: bool = True
    area: bool = True
    panel: bool = True
    bbox: bool = True
    trajectory: bool = True
    offline_markers: bool = True
    calib_circles: bool = True
    rendered_view: bool = False
    link_curve: bool = False
    fps_line: bool = False
    hand_skeleton: bool = False
    net_traffic: bool = False
    placement: str = "subject"      # "subject" | "host"
    level: str = "eye"              # "eye" | "floor"
    hemisphere_radius: float = 1.5
    grid_mode: str = "auto"         # "auto" | "grid" | "sphere"
    curve_w_min: float = 0.01
    curve_w_max: float = 0.15
    flatten_links: bool = False
    exclusion_dist: float = 2.0
    exclusion_half_angle: float = 40.0
    frustum_depth: float = 0.5
    fov_h: float = 90.0
    fov_v: float = 90.0
    mini_frustum_spacing: float = 0.5
    arrow_height: float = 0.6
    panel_distance: float = 1.2
    area_margin: float = 0.5
    area_smoothing: float = 0.5     # seconds, exponential time constant


_ENUM_FIELDS = {
    "placement": ("subject", "host"),
    "level": ("eye", "floor"),
    "grid_mode": ("auto", "grid", "sphere"),
}
_POSITIVE_FIELDS = (
    "hemisphere_radius", "curve_w_min", "curve_w_max", "frustum_depth",
    "mini_frustum_spacing", "arrow_height", "panel_distance", "area_smoothing",
)
_NONNEG_FIELDS = ("exclusion_dist", "exclusion_half_angle", "area_margin")


def validate_viz_config(cfg: VizConfig) -> None:
    for f in fields(VizConfig):
        v = getattr(cfg, f.name)
        if f.name in _ENUM_FIELDS:
            if v not in _ENUM_FIELDS[f.name]:
                raise ConfigError(f.name, f"must be one of {_ENUM_FIELDS[f.name]}, got {v!r}")
        elif f.type == "bool":
            if not isinstance(v, bool):
                raise ConfigError(f.name, f"must be a bool, got {v!r}")
        else:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f.name, f"must be a finite number, got {v!r}")
    for name in _POSITIVE_FIELDS:
        if not getattr(cfg, name) > 0:
            raise ConfigError(name, "must be positive")
    for name in _NONNEG_FIELDS:
        if getattr(cfg, name) < 0:
            raise ConfigError(name, "must be >= 0")
    if cfg.curve_w_min > cfg.curve_w_max:
        raise ConfigError("curve_w_min", "must not exceed curve_w_max")
    if not 0 < cfg.fov_h < 180 or not 0 < cfg.fov_v < 180:
        raise ConfigError("fov_h", "fov angles must be in (0, 180)")


def patch_schema() -> dict[str, Any]:
    """Accepted keys for live config patches and their value check.

    Covers every VizConfig field plus the two trajectory-window knobs
    (window, alpha_fade), which ride the same control path.
    """
    schema: dict[str, Any] = {}
    for f in fields(VizConfig):
        if f.name in _ENUM_FIELDS:
            schema[f.name] = _ENUM_FIELDS[f.name]
        elif f.type == "bool":
            schema[f.name] = "bool"
        else:
            schema[f.name] = "number"
    schema["window"] = "number"
    schema["alpha_fade"] = "number"
    return schema


def check_patch_values(patch: Mapping[str, Any]) -> str | None:
    """Shallow type check against patch_schema(); returns first bad key."""
    schema = patch_schema()
    for key, value in patch.items():
        spec = schema.get(key)
        if spec is None:
            return key
        if spec == "bool":
            if not isinstance(value, bool):
                return key
        elif spec == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                return key
        elif value not in spec:
            return key
    return None


def apply_patch(cfg: VizConfig, params: FilterParams, patch: Mapping[str, Any]) -> tuple[VizConfig, FilterParams]:
    """Apply a validated patch; raises ConfigError if the result is invalid.

    Returns fresh frozen instances so the swap is atomic for readers.
    """
    bad = check_patch_values(patch)
    if bad is not None:
        raise ConfigError(bad, f"unknown or ill-typed patch key (value {patch.get(bad)!r})")
    cfg_part = {k: v for k, v in patch.items() if k not in ("window", "alpha_fade")}
    flt_part = {k: int(v) for k, v in patch.items() if k in ("window", "alpha_fade")}
    new_cfg = replace(cfg, **cfg_part) if cfg_part else cfg
    new_params = replace(params, **flt_part) if flt_part else params
    validate_viz_config(new_cfg)
    validate_filter_params(new_params)
    return new_cfg, new_params


# --------------------------------------------------------------------------
# Small geometric helpers


def bezier_point(p0: Vec3, p1: Vec3, p2: Vec3, p3: Vec3, u: float) -> Vec3:
    w = 1.0 - u
    a = w * w * w
    b = 3.0 * w * w * u
    c = 3.0 * w * u * u
    d = u * u * u
    return Vec3(
        a * p0.x + b * p1.x + c * p2.x + d * p3.x,
        a * p0.y + b * p1.y + c * p2.y + d * p3.y,
        a * p0.z + b * p1.z + c * p2.z + d * p3.z,
    )


def floor_below(y: float, floors: Sequence[float]) -> float:
    """Height of the nearest floor at or below y (tiny tolerance for feet-on-
    floor poses); the lowest floor if y is below all of them."""
    below = [f for f in floors if f <= y + 0.01]
    return max(below) if below else min(floors)


def _angle_between_deg(a: Vec3, b: Vec3) -> float:
    na, nb = a.norm(), b.norm()
    if na < 1e-9 or nb < 1e-9:
        return 0.0
    return math.degrees(math.acos(clamp(a.dot(b) / (na * nb), -1.0, 1.0)))


def _flat_forward(pose: Pose) -> Vec3:
    f = pose.forward()
    flat = Vec3(f.x, 0.0, f.z)
    if flat.norm() < 1e-9:
        return Vec3(0.0, 0.0, -1.0)
    return flat.normalized()


def _visitor_color(visitor: Any) -> Rgba:
    return palette_color(visitor.palette_index)


def _view_ref(visitor: Any) -> str | None:
    view = getattr(visitor, "latest_view", None)
    if view is None:
        return None
    return f"{visitor.id}:{view.t}"


# --------------------------------------------------------------------------
# Per-visualization ops


def frustum_corners(apex: Pose, fov_h: float, fov_v: float, depth: float) -> tuple[Vec3, Vec3, Vec3, Vec3]:
    """World positions of the frustum far-face corners, CCW from bottom-left
    as seen from the apex."""
    hw = depth * math.tan(math.radians(fov_h) / 2.0)
    hv = depth * math.tan(math.radians(fov_v) / 2.0)
    locals_ = (
        Vec3(-hw, -hv, -depth),
        Vec3(hw, -hv, -depth),
        Vec3(hw, hv, -depth),
        Vec3(-hw, hv, -depth),
    )
    return tuple(apex.position + apex.orientation.rotate(c) for c in locals_)  # type: ignore[return-value]


def view_frustum(visitor: Any, cfg: VizConfig) -> FrustumWire:
    ref = _view_ref(visitor) if cfg.rendered_view else None
    return FrustumWire(
        apex=visitor.head,
        fov_h=cfg.fov_h,
        fov_v=cfg.fov_v,
        depth=cfg.frustum_depth,
        color=_visitor_color(visitor),
        face_texture_ref=ref,
    )


def place_view_subject(visitor: Any, host_pose: Pose, cfg: VizConfig) -> Panel:
    """Rendered-view panel beside the subject's head, on whichever side keeps
    it clear of the host's sight line to the subject."""
    head: Pose = visitor.head
    right = head.orientation.right()
    axis = head.position - host_pose.position
    best = None
    for sign in (1.0, -1.0):  # +right wins ties
        center = head.position + right * (sign * SUBJECT_VIEW_OFFSET)
        score = _angle_between_deg(center - host_pose.position, axis)
        if best is None or score > best[0] + 1e-9:
            best = (score, center)
    center = best[1]
    normal = host_pose.position - center
    if normal.norm() < 1e-9:
        normal = head.forward()
    else:
        normal = normal.normalized()
    return Panel(
        owner=visitor.id,
        center=center,
        normal=normal,
        up=_UP,
        size=VIEW_PANEL_SIZE,
        texture_ref=_view_ref(visitor),
    )


def _bearing_az_el(d: Vec3, fwd: Vec3, right: Vec3) -> tuple[float, float]:
    # azimuth relative to the host's facing, so ordering reads left-to-right
    # as the host sees it and survives global rotation
    az = math.degrees(math.atan2(d.dot(right), d.dot(fwd)))
    el = math.degrees(math.asin(clamp(d.y, -1.0, 1.0)))
    return az, el


def _az_delta(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def place_views_host(visitors: Sequence[Any], host_pose: Pose, cfg: VizConfig,
                     floors: Sequence[float] = (0.0,)) -> list[Panel]:
    """Rendered-view panels gathered around the host.

    Sphere mode projects each panel onto a hemisphere around the host head
    along the direction to its subject; when two subjects fall into the same
    angular cell (auto mode) the layout switches to a regular grid so panels
    never overlap. At floor level the grid is laid flat ahead of the host.
    """
    vs = sorted((v for v in visitors), key=lambda v: v.id)
    if not vs:
        return []
    fwd = _flat_forward(host_pose)
    right = fwd.cross(_UP).normalized()
    dirs: dict[str, Vec3] = {}
    for v in vs:
        d = v.head.position - host_pose.position
        if d.norm() < 1e-9:
            d = host_pose.forward()
        dirs[v.id] = d.normalized()

    mode = cfg.grid_mode
    if mode == "auto":
        mode = "sphere"
        bearings = [_bearing_az_el(dirs[v.id], fwd, right) for v in vs]
        for i in range(len(vs)):
            for j in range(i + 1, len(vs)):
                if (_az_delta(bearings[i][0], bearings[j][0]) < GRID_AZ_CELL
                        and abs(bearings[i][1] - bearings[j][1]) < GRID_EL_CELL):
                    mode = "grid"
                    break
            if mode == "grid":
                break

    panels: list[Panel] = []
    if mode == "sphere":
        r = cfg.hemisphere_radius
        for v in vs:
            d = dirs[v.id]
            if cfg.level == "eye" and d.y < 0.0:
                d = Vec3(d.x, 0.0, d.z)
                d = d.normalized() if d.norm() > 1e-9 else _flat_forward(host_pose)
            center = host_pose.position + d * r
            panels.append(Panel(
                owner=v.id,
                center=center,
                normal=-d,
                up=_UP,
                size=VIEW_PANEL_SIZE,
                texture_ref=_view_ref(v),
            ))
        return panels

    # Grid: row-major by (bearing azimuth, id), near-square cell counts.
    order = sorted(vs, key=lambda v: (_bearing_az_el(dirs[v.id], fwd, right)[0], v.id))
    n = len(order)
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    if cfg.level == "eye":
        base = host_pose.position + fwd * cfg.hemisphere_radius
        for i, v in enumerate(order):
            row, col = divmod(i, cols)
            center = (base
                      + right * ((col - (cols - 1) / 2.0) * GRID_PITCH_X)
                      + _UP * (((rows - 1) / 2.0 - row) * GRID_PITCH_Y))
            panels.append(Panel(
                owner=v.id, center=center, normal=-fwd, up=_UP,
                size=VIEW_PANEL_SIZE, texture_ref=_view_ref(v),
            ))
    else:
        floor_y = floor_below(host_pose.position.y, floors)
        base = Vec3(host_pose.position.x, floor_y + 0.01, host_pose.position.z) + fwd * FLOOR_AHEAD
        for i, v in enumerate(order):
            row, col = divmod(i, cols)
            center = (base
                      + right * ((col - (cols - 1) / 2.0) * GRID_PITCH_X)
                      + fwd * (row * GRID_PITCH_Y))
            panels.append(Panel(
                owner=v.id, center=center, normal=_UP, up=fwd,
                size=VIEW_PANEL_SIZE, texture_ref=_view_ref(v),
            ))
    return panels


def locator_arrow(visitor: Any, cfg: VizConfig) -> Arrow | None:
    """Downward arrow floating above the visitor's head (or above the last
    known position, desaturated, while offline)."""
    color = _visitor_color(visitor)
    if visitor.online and visitor.head is not None:
        anchor = visitor.head.position
    elif visitor.last_position is not None:
        anchor = visitor.last_position
        color = desaturate(color)
    else:
        return None
    return Arrow(
        position=anchor + Vec3(0.0, cfg.arrow_height, 0.0),
        height=cfg.arrow_height,
        color=color,
    )


def _link_points(host_pose: Pose, target: Vec3, cfg: VizConfig, floor_y: float) -> list[Vec3] | None:
    to_v = target - host_pose.position
    dist = to_v.norm()
    if dist < cfg.exclusion_dist and _angle_between_deg(host_pose.forward(), to_v) < cfg.exclusion_half_angle:
        return None
    fwd = host_pose.forward()
    p0 = host_pose.position + fwd * LINK_ANCHOR_FWD + Vec3(0.0, -LINK_ANCHOR_DOWN, 0.0)
    p1 = p0 + fwd * LINK_CTRL_LEN
    p3 = target
    p2 = p3 + Vec3(0.0, LINK_CTRL_LEN, 0.0)
    pts = [bezier_point(p0, p1, p2, p3, i / (CURVE_SAMPLES - 1)) for i in range(CURVE_SAMPLES)]
    if cfg.flatten_links:
        pts = [p.with_y(floor_y + 0.01) for p in pts]
    return pts


def link_curve(host_pose: Pose, visitor: Any, cfg: VizConfig, floor_y: float = 0.0) -> Ribbon | None:
    """Animated curve from the host toward a visitor; None inside the host's
    exclusion cone (close and roughly in front, where it would be clutter)."""
    pts = _link_points(host_pose, visitor.head.position, cfg, floor_y)
    if pts is None:
        return None
    n = len(pts)
    color = _visitor_color(visitor)
    widths = tuple(cfg.curve_w_min + (cfg.curve_w_max - cfg.curve_w_min) * i / (n - 1) for i in range(n))
    return Ribbon(
        points=tuple(pts),
        widths=widths,
        colors=(color,) * n,
        pattern="arrowed",
        anim_speed=1.0,
    )


def fps_line(host_pose: Pose, visitor: Any, cfg: VizConfig, floor_y: float = 0.0) -> Ribbon | None:
    """Same path as link_curve but constant width and fps-coded color."""
    pts = _link_points(host_pose, visitor.head.position, cfg, floor_y)
    if pts is None:
        return None
    n = len(pts)
    metrics = visitor.metrics
    color = fps_color(metrics.fps) if metrics is not None else GRAY
    w = (cfg.curve_w_min + cfg.curve_w_max) / 2.0
    return Ribbon(points=tuple(pts), widths=(w,) * n, colors=(color,) * n)


def area_indicator(positions: Sequence[Vec3], prev: SquareOutline | None, dt: float,
                   cfg: VizConfig, floors: Sequence[float] = (0.0,)) -> SquareOutline | None:
    """Exponentially smoothed square on the floor containing all visitors.

    The raw square sits at the centroid of the visitor XZ positions and is
    grown until it contains every point with the configured margin; the
    emitted square chases it with time constant area_smoothing and is then
    re-grown so containment survives the smoothing lag.
    """
    if not positions:
        return None
    xs = [p.x for p in positions]
    zs = [p.z for p in positions]
    cx = sum(xs) / len(xs)
    cz = sum(zs) / len(zs)
    extent = max(max(xs) - min(xs), max(zs) - min(zs))

    def required_side(about_x: float, about_z: float) -> float:
        dev = max(max(abs(x - about_x) for x in xs), max(abs(z - about_z) for z in zs))
        return 2.0 * (dev + cfg.area_margin)

    raw_side = max(extent + 2.0 * cfg.area_margin, required_side(cx, cz))
    y = min(floor_below(p.y, floors) for p in positions)

    if prev is None:
        sx, sz, side = cx, cz, raw_side
    else:
        a = 1.0 - math.exp(-dt / cfg.area_smoothing)
        sx = prev.center_xz[0] + a * (cx - prev.center_xz[0])
        sz = prev.center_xz[1] + a * (cz - prev.center_xz[1])
        side = prev.side + a * (raw_side - prev.side)
        side = max(side, required_side(sx, sz))
    return SquareOutline(center_xz=(sx, sz), y=y, side=side, color=AREA_COLOR)


def _metric_lines(visitor: Any) -> tuple[str, ...]:
    m: DeviceMetrics | None = visitor.metrics
    status = "ONLINE" if visitor.online else "OFFLINE"
    if m is None:
        return (visitor.id, "no data")
    return (
        visitor.id,
        f"FPS {m.fps:.1f}",
        f"BAT {round(m.battery * 100)}%",
        f"CPU {round(m.cpu * 100)}% GPU {round(m.gpu * 100)}%",
        status,
    )


def info_panel(visitor: Any, host_pose: Pose, cfg: VizConfig, stack_index: int = 0,
               floors: Sequence[float] = (0.0,)) -> Panel | None:
    """Metrics text panel, either floating above its subject or stacked in
    front of the host depending on cfg.placement."""
    lines = _metric_lines(visitor)
    if cfg.placement == "subject":
        if visitor.online and visitor.head is not None:
            anchor = visitor.head.position
        elif visitor.last_position is not None:
            anchor = visitor.last_position
        else:
            return None
        center = anchor + Vec3(0.0, INFO_SUBJECT_RAISE, 0.0)
        normal = host_pose.position - center
        normal = normal.normalized() if normal.norm() > 1e-9 else _flat_forward(host_pose)
        return Panel(owner=visitor.id, center=center, normal=normal, up=_UP,
                     size=INFO_PANEL_SIZE, lines=lines)
    fwd = _flat_forward(host_pose)
    if cfg.level == "eye":
        center = (host_pose.position + fwd * cfg.panel_distance
                  + Vec3(0.0, -INFO_STACK_PITCH * stack_index, 0.0))
        normal = host_pose.position - center
        normal = normal.normalized() if normal.norm() > 1e-9 else -fwd
        return Panel(owner=visitor.id, center=center, normal=normal, up=_UP,
                     size=INFO_PANEL_SIZE, lines=lines)
    floor_y = floor_below(host_pose.position.y, floors)
    base = Vec3(host_pose.position.x, floor_y + 0.01, host_pose.position.z) + fwd * FLOOR_AHEAD
    center = base + fwd * (FLOOR_STACK_PITCH * stack_index)
    return Panel(owner=visitor.id, center=center, normal=_UP, up=fwd,
                 size=INFO_PANEL_SIZE, lines=lines)


def perf_bbox(visitor: Any, cfg: VizConfig, floors: Sequence[float] = (0.0,)) -> BoxWire:
    """Person-sized wireframe box around the visitor, fps color-coded."""
    head = visitor.head.position
    floor_y = floor_below(head.y, floors)
    top = head.y + 0.2
    half_y = max((top - floor_y) / 2.0, 0.01)
    color = fps_color(visitor.metrics.fps) if visitor.metrics is not None else GRAY
    return BoxWire(
        center=Vec3(head.x, floor_y + half_y, head.z),
        half_extents=Vec3(0.3, half_y, 0.3),
        color=color,
    )


def hand_skeleton(visitor: Any) -> list[Primitive]:
    """Head marker plus one skeleton per currently tracked hand."""
    out: list[Primitive] = [HeadMarker(owner=visitor.id, pose=visitor.head)]
    for hand in (visitor.left, visitor.right):
        if hand is not None and hand.tracked:
            out.append(Skeleton(owner=visitor.id, joints=hand.joints, axis_len=0.02))
    return out


def net_traffic_curves(a: Vec3, b: Vec3, metrics: DeviceMetrics, cfg: VizConfig) -> list[Ribbon]:
    """Paired arcs between a device (a) and the network anchor (b): inbound
    ribbon flowing b->a, outbound a->b, width log-scaled by bandwidth and
    animation speed inversely proportional to latency."""
    chord = b - a
    dist = chord.norm()
    if dist < 1e-9:
        return []
    lift = max(0.5, 0.15 * dist)
    side = chord.cross(_UP)
    side = side.normalized() if side.norm() > 1e-9 else Vec3(1.0, 0.0, 0.0)

    def width(bps: float) -> float:
        u = clamp((math.log10(max(bps, 1.0)) - 3.0) / 5.0, 0.0, 1.0)
        return cfg.curve_w_min + (cfg.curve_w_max - cfg.curve_w_min) * u

    anim = 2.0 / max(metrics.latency_ms / 100.0, 0.1)

    def arc(start: Vec3, end: Vec3, offset: Vec3) -> tuple[Vec3, ...]:
        c = end - start
        p1 = start + c * 0.3 + _UP * lift
        p2 = start + c * 0.7 + _UP * lift
        return tuple(
            bezier_point(start, p1, p2, end, i / (NET_CURVE_SAMPLES - 1)) + offset
            for i in range(NET_CURVE_SAMPLES)
        )

    n = NET_CURVE_SAMPLES
    w_in = width(metrics.net_in_bps)
    w_out = width(metrics.net_out_bps)
    return [
        Ribbon(points=arc(b, a, side * NET_RIBBON_OFFSET), widths=(w_in,) * n,
               colors=(NET_IN_COLOR,) * n, pattern="arrowed", anim_speed=anim),
        Ribbon(points=arc(a, b, side * -NET_RIBBON_OFFSET), widths=(w_out,) * n,
               colors=(NET_OUT_COLOR,) * n, pattern="arrowed", anim_speed=anim),
    ]


def trajectory_geometry(samples: Sequence[WindowSample], cfg: VizConfig) -> tuple[Ribbon | None, list[FrustumWire]]:
    """Faded ribbon through the windowed trace plus mini view frustums placed
    by arc length (first sample always gets one)."""
    if not samples:
        return None, []

    def sample_color(s: WindowSample) -> Rgba:
        base = fps_color(s.fps) if s.fps is not None else GRAY
        if s.alpha == 1.0:
            return base
        return Rgba(base.r, base.g, base.b, base.a * s.alpha)

    frustums: list[FrustumWire] = []

    def mini(s: WindowSample) -> FrustumWire:
        return FrustumWire(apex=s.pose, fov_h=cfg.fov_h, fov_v=cfg.fov_v,
                           depth=MINI_FRUSTUM_DEPTH, color=sample_color(s))

    frustums.append(mini(samples[0]))
    acc = 0.0
    spacing = cfg.mini_frustum_spacing
    prev_pos = samples[0].pose.position
    for cur in samples[1:]:
        pos = cur.pose.position
        dx = pos.x - prev_pos.x
        dy = pos.y - prev_pos.y
        dz = pos.z - prev_pos.z
        acc += math.sqrt(dx * dx + dy * dy + dz * dz)
        prev_pos = pos
        if acc >= spacing:
            frustums.append(mini(cur))
            acc = 0.0

    if len(samples) < 2:
        return None, frustums
    ribbon = Ribbon(
        points=tuple(s.pose.position for s in samples),
        widths=(TRAJ_RIBBON_WIDTH,) * len(samples),
        colors=tuple(sample_color(s) for s in samples),
    )
    return ribbon, frustums


def calib_circles(center: Vec3, count: int, cfg: VizConfig) -> CircleSet:
    """Concentric rings at a calibration station, one per completed
    calibration (capped), colored cold-to-hot from inside out."""
    n = min(count, CALIB_MAX_CIRCLES)
    radii = tuple(CALIB_BASE_RADIUS + CALIB_RADIUS_STEP * i for i in range(n))
    if n <= 1:
        colors = (CALIB_COLD,) * n
    else:
        colors = tuple(lerp_color(CALIB_COLD, CALIB_HOT, i / (n - 1)) for i in range(n))
    return CircleSet(center=center, radii=radii, colors=colors)


def offline_marker(visitor: Any, now: int) -> EventMarker:
    return EventMarker(
        position=visitor.last_position,
        event="went_offline",
        age_s=(now - visitor.offline_since) / 1000.0,
    )


# --------------------------------------------------------------------------
# Snapshot assembly


@dataclass(frozen=True, slots=True)
class VisitorSummary:
    id: str
    role: str
    online: bool
    tracking_ok: bool
    t: int | None
    position: Vec3 | None
    metrics: DeviceMetrics | None
    view: Any | None  # latest view frame (duck-typed: t, w, h, fmt, data)


@dataclass(frozen=True, slots=True)
class SceneSnapshot:
    t: int
    visitors: tuple[VisitorSummary, ...]
    primitives: tuple[Primitive, ...]
    config: Mapping[str, Any] | None = None
    diagnostics: Mapping[str, Any] | None = None


def _summary(v: Any, cfg: VizConfig) -> VisitorSummary:
    if v.online and v.head is not None:
        pos = v.head.position
    else:
        pos = v.last_position
    return VisitorSummary(
        id=v.id,
        role=v.role,
        online=v.online,
        tracking_ok=v.tracking_ok,
        t=v.last_t,
        position=pos,
        metrics=v.metrics,
        view=v.latest_view if cfg.rendered_view else None,
    )


def build_snapshot(
    visitors: Iterable[Any],
    host_pose: Pose,
    cfg: VizConfig,
    now: int,
    *,
    filter_params: FilterParams | None = None,
    trace_windows: Mapping[str, Sequence[WindowSample]] | None = None,
    floors: Sequence[float] = (0.0,),
    stations: Sequence[Any] = (),
    net_anchor: Vec3 | None = None,
    prev_area: SquareOutline | None = None,
    dt: float = 0.1,
    config_echo: Mapping[str, Any] | None = None,
    diagnostics: Mapping[str, Any] | None = None,
) -> SceneSnapshot:
    """Assemble the full drawable scene for one tick.

    `visitors` are duck-typed state objects (see session.VisitorState for the
    attribute surface). Ordering is deterministic: primitives grouped by
    visualization in a fixed order, visitors sorted by id within each group.
    Pose-anchored visualizations are emitted only for online visitors with a
    known head pose; locator arrows, info panels, offline markers, and
    trajectories also cover offline ones.

    `trace_windows` overrides the per-visitor window computation (id ->
    precomputed samples); by default windows come from each visitor's trace
    via truncate_and_alpha with `filter_params`.
    """
    from .trace import truncate_and_alpha  # local to keep module import light

    vs = sorted(visitors, key=lambda v: v.id)
    live = [v for v in vs if v.online and v.head is not None]
    params = filter_params if filter_params is not None else FilterParams()
    prims: list[Primitive] = []

    if cfg.rendered_view and live:
        if cfg.placement == "subject":
            prims.extend(place_view_subject(v, host_pose, cfg) for v in live)
        else:
            prims.extend(place_views_host(live, host_pose, cfg, floors))

    if cfg.frustum:
        prims.extend(view_frustum(v, cfg) for v in live)

    if cfg.arrow:
        for v in vs:
            arrow = locator_arrow(v, cfg)
            if arrow is not None:
                prims.append(arrow)

    if cfg.link_curve:
        for v in live:
            floor_y = floor_below(v.head.position.y, floors)
            curve = link_curve(host_pose, v, cfg, floor_y)
            if curve is not None:
                prims.append(curve)

    if cfg.area:
        square = area_indicator([v.head.position for v in live], prev_area, dt, cfg, floors)
        if square is not None:
            prims.append(square)

    if cfg.panel:
        stack = 0
        for v in vs:
            panel = info_panel(v, host_pose, cfg, stack_index=stack, floors=floors)
            if panel is not None:
                prims.append(panel)
                stack += 1

    if cfg.bbox:
        prims.extend(perf_bbox(v, cfg, floors) for v in live)

    if cfg.fps_line:
        for v in live:
            floor_y = floor_below(v.head.position.y, floors)
            line = fps_line(host_pose, v, cfg, floor_y)
            if line is not None:
                prims.append(line)

    if cfg.hand_skeleton:
        for v in live:
            prims.extend(hand_skeleton(v))

    if cfg.net_traffic:
        anchor = net_anchor if net_anchor is not None else Vec3(0.0, 2.5, 0.0)
        for v in live:
            if v.metrics is not None:
                prims.extend(net_traffic_curves(v.head.position, anchor, v.metrics, cfg))

    if cfg.trajectory:
        for v in vs:
            if trace_windows is not None:
                window = trace_windows.get(v.id, ())
            else:
                window = truncate_and_alpha(v.trace, now, params)
            ribbon, minis = trajectory_geometry(window, cfg)
            if ribbon is not None:
                prims.append(ribbon)
            prims.extend(minis)

    if cfg.offline_markers:
        for v in vs:
            if not v.online and v.last_position is not None and v.offline_since is not None:
                prims.append(offline_marker(v, now))

    if cfg.calib_circles and stations:
        for station in sorted(stations, key=lambda s: s.id):
            total = sum(v.calib_counts.get(station.id, 0) for v in vs)
            if total > 0:
                prims.append(calib_circles(station.position, total, cfg))

    return SceneSnapshot(
        t=now,
        visitors=tuple(_summary(v, cfg) for v in vs),
        primitives=tuple(prims),
        config=config_echo,
        diagnostics=diagnostics,
    )
