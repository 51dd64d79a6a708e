"""Venue description: walkable bounds, floor heights, calibration stations,
obstacles, and stair locations linking floors.

Loaded once at startup (JSON file or defaults) and treated as immutable;
both the simulator and the server validate against the same structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .core import ConfigError, Vec3

MIN_HEADROOM = 1.7  # meters of clearance required above the top floor


@dataclass(frozen=True, slots=True)
class Aabb:
    min: Vec3
    max: Vec3

    def contains(self, p: Vec3, margin: float = 0.0) -> bool:
        return (self.min.x + margin <= p.x <= self.max.x - margin
                and self.min.y <= p.y <= self.max.y
                and self.min.z + margin <= p.z <= self.max.z - margin)

    def contains_xz(self, x: float, z: float, margin: float = 0.0) -> bool:
        return (self.min.x + margin <= x <= self.max.x - margin
                and self.min.z + margin <= z <= self.max.z - margin)


@dataclass(frozen=True, slots=True)
class Station:
    id: str
    position: Vec3


@dataclass(frozen=True, slots=True)
class Stairs:
    """Walkable link between two floor heights at an XZ location."""
    x: float
    z: float
    floors: tuple[float, float]
    radius: float = 1.0


@dataclass(frozen=True, slots=True)
class SceneConfig:
    bounds: Aabb
    floors: tuple[float, ...] = (0.0,)
    stations: tuple[Station, ...] = ()
    obstacles: tuple[Aabb, ...] = ()
    stairs: tuple[Stairs, ...] = ()
    net_anchor: Vec3 | None = None

    def anchor(self) -> Vec3:
        """Network-traffic curve endpoint; defaults to a point up near the
        ceiling at the center of the venue."""
        if self.net_anchor is not None:
            return self.net_anchor
        cx = (self.bounds.min.x + self.bounds.max.x) / 2.0
        cz = (self.bounds.min.z + self.bounds.max.z) / 2.0
        y = min(self.bounds.max.y - 0.2, max(self.floors) + 2.5)
        return Vec3(cx, y, cz)


def validate_scene(scene: SceneConfig) -> None:
    b = scene.bounds
    if not (b.max.x > b.min.x and b.max.y > b.min.y and b.max.z > b.min.z):
        raise ConfigError("bounds", "max must exceed min on every axis")
    if not scene.floors:
        raise ConfigError("floors", "at least one floor height required")
    for a, c in zip(scene.floors, scene.floors[1:]):
        if not c > a:
            raise ConfigError("floors", "heights must be strictly increasing")
    for f in scene.floors:
        if not b.min.y <= f <= b.max.y:
            raise ConfigError("floors", f"height {f} outside bounds y-range")
    if b.max.y - max(scene.floors) < MIN_HEADROOM:
        raise ConfigError("floors", f"top floor needs {MIN_HEADROOM} m headroom")
    seen = set()
    for s in scene.stations:
        if not s.id:
            raise ConfigError("stations", "station id must be non-empty")
        if s.id in seen:
            raise ConfigError("stations", f"duplicate station id {s.id!r}")
        seen.add(s.id)
        if not b.contains_xz(s.position.x, s.position.z):
            raise ConfigError("stations", f"station {s.id!r} outside bounds")
    for i, o in enumerate(scene.obstacles):
        if not (o.max.x > o.min.x and o.max.y > o.min.y and o.max.z > o.min.z):
            raise ConfigError("obstacles", f"obstacle {i} max must exceed min")
    for i, st in enumerate(scene.stairs):
        if not b.contains_xz(st.x, st.z):
            raise ConfigError("stairs", f"stairs {i} outside bounds")
        lo, hi = st.floors
        if lo == hi or lo not in scene.floors or hi not in scene.floors:
            raise ConfigError("stairs", f"stairs {i} must join two distinct floor heights")
    if scene.net_anchor is not None and not b.contains(scene.net_anchor):
        raise ConfigError("net_anchor", "must lie inside bounds")


def default_scene() -> SceneConfig:
    """A 30 x 20 m single-floor hall with two calibration stations."""
    return SceneConfig(
        bounds=Aabb(Vec3(-15.0, 0.0, -10.0), Vec3(15.0, 4.0, 10.0)),
        floors=(0.0,),
        stations=(
            Station("s01", Vec3(-12.0, 0.0, -8.0)),
            Station("s02", Vec3(12.0, 0.0, 8.0)),
        ),
    )


def _vec_from(v: Any, what: str) -> Vec3:
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise ConfigError(what, "must be [x, y, z]")
    try:
        return Vec3(*(float(c) for c in v))
    except (TypeError, ValueError):
        raise ConfigError(what, "components must be numbers") from None


def scene_from_dict(d: Any) -> SceneConfig:
    """Parse and validate a scene description (e.g. loaded from JSON)."""
    if not isinstance(d, dict):
        raise ConfigError("scene", "must be an object")
    if "bounds" not in d or not isinstance(d["bounds"], dict):
        raise ConfigError("bounds", "required object with min/max")
    bounds = Aabb(_vec_from(d["bounds"].get("min"), "bounds.min"),
                  _vec_from(d["bounds"].get("max"), "bounds.max"))
    floors = tuple(float(f) for f in d.get("floors", [0.0]))
    stations = tuple(
        Station(str(s.get("id", "")), _vec_from(s.get("position"), "stations.position"))
        for s in d.get("stations", ())
    )
    obstacles = tuple(
        Aabb(_vec_from(o.get("min"), "obstacles.min"), _vec_from(o.get("max"), "obstacles.max"))
        for o in d.get("obstacles", ())
    )
    stairs = tuple(
        Stairs(float(s["x"]), float(s["z"]),
               (float(s["floors"][0]), float(s["floors"][1])),
               float(s.get("radius", 1.0)))
        for s in d.get("stairs", ())
    )
    anchor = _vec_from(d["net_anchor"], "net_anchor") if "net_anchor" in d else None
    scene = SceneConfig(bounds=bounds, floors=floors, stations=stations,
                        obstacles=obstacles, stairs=stairs, net_anchor=anchor)
    validate_scene(scene)
    return scene


def scene_to_dict(scene: SceneConfig) -> dict[str, Any]:
    out: dict[str, Any] = {
        "bounds": {
            "min": [scene.bounds.min.x, scene.bounds.min.y, scene.bounds.min.z],
            "max": [scene.bounds.max.x, scene.bounds.max.y, scene.bounds.max.z],
        },
        "floors": list(scene.floors),
        "stations": [
            {"id": s.id, "position": [s.position.x, s.position.y, s.position.z]}
            for s in scene.stations
        ],
    }
    if scene.obstacles:
        out["obstacles"] = [
            {"min": [o.min.x, o.min.y, o.min.z], "max": [o.max.x, o.max.y, o.max.z]}
            for o in scene.obstacles
        ]
    if scene.stairs:
        out["stairs"] = [
            {"x": s.x, "z": s.z, "floors": list(s.floors), "radius": s.radius}
            for s in scene.stairs
        ]
    if scene.net_anchor is not None:
        a = scene.net_anchor
        out["net_anchor"] = [a.x, a.y, a.z]
    return out
