"""Shared domain types plus the small vector/quaternion/color math the rest
of the service needs.

Conventions: right-handed coordinates, +Y up, meters; a head "looks along"
-Z in its local frame; timestamps are integer milliseconds since session
start; angles in public APIs are degrees. Every type here is an immutable
value and safe to share across tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

DEFAULT_FPS_LO = 30.0
DEFAULT_FPS_HI = 72.0

# OpenXR hand skeleton: palm, wrist, 4 thumb joints, 5 joints x 4 fingers.
HAND_JOINT_COUNT = 26


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


@dataclass(frozen=True, slots=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __add__(self, o: Vec3) -> Vec3:
        return Vec3(self.x + o.x, self.y + o.y, self.z + o.z)

    def __sub__(self, o: Vec3) -> Vec3:
        return Vec3(self.x - o.x, self.y - o.y, self.z - o.z)

    def __mul__(self, s: float) -> Vec3:
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self) -> Vec3:
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, o: Vec3) -> float:
        return self.x * o.x + self.y * o.y + self.z * o.z

    def cross(self, o: Vec3) -> Vec3:
        return Vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> Vec3:
        n = self.norm()
        if n < 1e-12:
            raise ValueError("cannot normalize zero-length vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def distance_to(self, o: Vec3) -> float:
        return (self - o).norm()

    def with_y(self, y: float) -> Vec3:
        return Vec3(self.x, y, self.z)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)


@dataclass(frozen=True, slots=True)
class Quat:
    """Unit quaternion (x, y, z, w). Identity by default."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    w: float = 1.0

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w)

    def normalized(self) -> Quat:
        n = self.norm()
        if n < 1e-12:
            return Quat()
        return Quat(self.x / n, self.y / n, self.z / n, self.w / n)

    def dot(self, o: Quat) -> float:
        return self.x * o.x + self.y * o.y + self.z * o.z + self.w * o.w

    def rotate(self, v: Vec3) -> Vec3:
        # v' = v + 2*w*(u x v) + 2*(u x (u x v)), u = vector part
        ux, uy, uz, w = self.x, self.y, self.z, self.w
        cx = uy * v.z - uz * v.y
        cy = uz * v.x - ux * v.z
        cz = ux * v.y - uy * v.x
        ccx = uy * cz - uz * cy
        ccy = uz * cx - ux * cz
        ccz = ux * cy - uy * cx
        return Vec3(
            v.x + 2.0 * (w * cx + ccx),
            v.y + 2.0 * (w * cy + ccy),
            v.z + 2.0 * (w * cz + ccz),
        )

    def angle_to(self, o: Quat) -> float:
        """Smallest rotation angle between two orientations, in degrees."""
        d = min(1.0, abs(self.dot(o)))
        return math.degrees(2.0 * math.acos(d))

    def forward(self) -> Vec3:
        return self.rotate(Vec3(0.0, 0.0, -1.0))

    def right(self) -> Vec3:
        return self.rotate(Vec3(1.0, 0.0, 0.0))

    def up(self) -> Vec3:
        return self.rotate(Vec3(0.0, 1.0, 0.0))

    @staticmethod
    def from_axis_angle(axis: Vec3, angle_deg: float) -> Quat:
        half = math.radians(angle_deg) * 0.5
        n = axis.normalized()
        s = math.sin(half)
        return Quat(n.x * s, n.y * s, n.z * s, math.cos(half))

    @staticmethod
    def from_yaw(yaw_deg: float) -> Quat:
        """Rotation about +Y; yaw 0 looks along -Z."""
        return Quat.from_axis_angle(Vec3(0.0, 1.0, 0.0), yaw_deg)


@dataclass(frozen=True, slots=True)
class Pose:
    position: Vec3 = field(default_factory=Vec3)
    orientation: Quat = field(default_factory=Quat)

    def forward(self) -> Vec3:
        return self.orientation.forward()


@dataclass(frozen=True, slots=True)
class DeviceMetrics:
    fps: float
    battery: float
    cpu: float
    gpu: float
    net_in_bps: float
    net_out_bps: float
    latency_ms: float

    def violation(self) -> str | None:
        """Name of the first out-of-range field, or None if valid."""
        for name, lo, hi in (
            ("fps", 0.0, math.inf),
            ("battery", 0.0, 1.0),
            ("cpu", 0.0, 1.0),
            ("gpu", 0.0, 1.0),
            ("net_in_bps", 0.0, math.inf),
            ("net_out_bps", 0.0, math.inf),
            ("latency_ms", 0.0, math.inf),
        ):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                return name
            if math.isnan(v) or math.isinf(v) or v < lo or v > hi:
                return name
        return None


@dataclass(frozen=True, slots=True)
class HandFrame:
    """One hand: 26 joint poses when tracked, empty when not."""

    tracked: bool
    joints: tuple[Pose, ...] = ()


@dataclass(frozen=True, slots=True)
class TelemetrySample:
    t: int
    head: Pose
    left: HandFrame | None = None
    right: HandFrame | None = None
    metrics: DeviceMetrics | None = None


@dataclass(frozen=True, slots=True)
class Rgba:
    """Color with components clamped to [0, 1] on construction."""

    r: float = 0.0
    g: float = 0.0
    b: float = 0.0
    a: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "r", clamp(self.r, 0.0, 1.0))
        object.__setattr__(self, "g", clamp(self.g, 0.0, 1.0))
        object.__setattr__(self, "b", clamp(self.b, 0.0, 1.0))
        object.__setattr__(self, "a", clamp(self.a, 0.0, 1.0))


def hsv_to_rgb(h_deg: float, s: float, v: float) -> tuple[float, float, float]:
    h = (h_deg % 360.0) / 60.0
    i = int(h) % 6
    f = h - int(h)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    if i == 0:
        return (v, t, p)
    if i == 1:
        return (q, v, p)
    if i == 2:
        return (p, v, t)
    if i == 3:
        return (p, q, v)
    if i == 4:
        return (t, p, v)
    return (v, p, q)


# cached: trajectory windows recolor the same fps values every tick
@lru_cache(maxsize=65536)
def fps_color(fps: float, fps_lo: float = DEFAULT_FPS_LO, fps_hi: float = DEFAULT_FPS_HI) -> Rgba:
    """Red at or below fps_lo, green at or above fps_hi, hue-linear between."""
    if fps_lo >= fps_hi:
        raise ValueError("fps_lo must be < fps_hi")
    u = clamp((fps - fps_lo) / (fps_hi - fps_lo), 0.0, 1.0)
    r, g, b = hsv_to_rgb(120.0 * u, 1.0, 1.0)
    return Rgba(r, g, b, 1.0)


def lerp_color(a: Rgba, b: Rgba, u: float) -> Rgba:
    return Rgba(
        a.r + (b.r - a.r) * u,
        a.g + (b.g - a.g) * u,
        a.b + (b.b - a.b) * u,
        a.a + (b.a - a.a) * u,
    )


# 12 well-separated hues, assigned to visitors by join order.
PALETTE_HUES = (210, 30, 120, 275, 0, 165, 55, 315, 90, 240, 20, 140)


def palette_color(index: int) -> Rgba:
    r, g, b = hsv_to_rgb(PALETTE_HUES[index % len(PALETTE_HUES)], 0.85, 0.95)
    return Rgba(r, g, b, 1.0)


def desaturate(c: Rgba, amount: float = 0.7) -> Rgba:
    """Pull a color toward its gray value; used for offline visitors."""
    gray = 0.299 * c.r + 0.587 * c.g + 0.114 * c.b
    return lerp_color(c, Rgba(gray, gray, gray, c.a), clamp(amount, 0.0, 1.0))
