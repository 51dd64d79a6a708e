"""Deterministic fleet simulator: scripted headset visitors walking a venue
and emitting the same wire messages a real device fleet would.

Every visitor derives its own random stream from the fleet seed, so the
same (seed, config, scene) always yields byte-identical message sequences
and adding a visitor never perturbs the others. Incidents (fps dips,
dropouts, tracking loss) are scripted with second-resolution windows;
message suppression covers device times in (t_start, t_end].
"""

from __future__ import annotations

import argparse
import asyncio
import heapq
import json
import math
import random
import signal
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Sequence

from .core import ConfigError, DeviceMetrics, HandFrame, Pose, Quat, Vec3, clamp
from .protocol import (
    ClientMessage,
    DEFAULT_INGEST_PORT,
    EventMessage,
    Heartbeat,
    Hello,
    MetricsUpdate,
    PoseUpdate,
    ViewFrame,
    encode,
)
from .scene import SceneConfig, default_scene, scene_from_dict

EYE_HEIGHT = 1.6
MAX_TURN_DEG_PER_S = 90.0
ARRIVE_DIST = 0.3
WALL_MARGIN = 0.3
STAIRS_SWITCH_P = 0.15
RECONNECT_DELAY_S = 2.0

INCIDENT_KINDS = ("fps_dip", "offline", "tracking_loss")


@dataclass(frozen=True, slots=True)
class Incident:
    t_start: float       # seconds into the session
    duration: float      # seconds
    visitor: str
    kind: str

    @property
    def start_ms(self) -> int:
        return round(self.t_start * 1000)

    @property
    def end_ms(self) -> int:
        return round((self.t_start + self.duration) * 1000)

    def covers(self, t: int) -> bool:
        return self.start_ms < t <= self.end_ms


@dataclass(frozen=True, slots=True)
class SimConfig:
    seed: int = 0
    n_visitors: int = 4
    walk_speed: float = 1.2          # m/s
    pose_hz: float = 20.0
    metrics_hz: float = 1.0
    heartbeat_ms: int = 500
    view_hz: float = 1.0             # 0 disables rendered-view frames
    hand_period_ms: int = 0          # 0 disables hand tracking data
    battery_drain: float = 1.67e-4   # fraction per second
    fps_base: float = 72.0
    fps_noise_sd: float = 1.5
    calibration_rate: float = 0.2    # events per minute per visitor
    include_host: bool = False
    incidents: tuple[Incident, ...] = ()


def validate_sim_config(cfg: SimConfig) -> None:
    if cfg.n_visitors < 1:
        raise ConfigError("n_visitors", "must be >= 1")
    if not 0 < cfg.pose_hz <= 60:
        raise ConfigError("pose_hz", "must be in (0, 60]")
    if not 0 < cfg.metrics_hz <= 10:
        raise ConfigError("metrics_hz", "must be in (0, 10]")
    if not 0 <= cfg.view_hz <= 10:
        raise ConfigError("view_hz", "must be in [0, 10]")
    if cfg.heartbeat_ms < 100:
        raise ConfigError("heartbeat_ms", "must be >= 100")
    if cfg.walk_speed <= 0:
        raise ConfigError("walk_speed", "must be positive")
    if cfg.fps_base <= 0:
        raise ConfigError("fps_base", "must be positive")
    if cfg.fps_noise_sd < 0:
        raise ConfigError("fps_noise_sd", "must be >= 0")
    if cfg.battery_drain < 0:
        raise ConfigError("battery_drain", "must be >= 0")
    if cfg.calibration_rate < 0:
        raise ConfigError("calibration_rate", "must be >= 0")
    if cfg.hand_period_ms < 0:
        raise ConfigError("hand_period_ms", "must be >= 0")
    for i, inc in enumerate(cfg.incidents):
        if inc.kind not in INCIDENT_KINDS:
            raise ConfigError("incidents", f"incident {i} kind must be one of {INCIDENT_KINDS}")
        if inc.duration <= 0 or inc.t_start < 0:
            raise ConfigError("incidents", f"incident {i} needs t_start >= 0 and duration > 0")


def visitor_id(index: int) -> str:
    return f"v{index + 1:02d}"


def dir_to_yaw(d: Vec3) -> float:
    return math.degrees(math.atan2(-d.x, -d.z))


def yaw_to_dir(yaw_deg: float) -> Vec3:
    r = math.radians(yaw_deg)
    return Vec3(-math.sin(r), 0.0, -math.cos(r))


def _wrap_deg(a: float) -> float:
    return (a + 180.0) % 360.0 - 180.0


class _Walker:
    """Waypoint random walk on one floor, with occasional stair rides."""

    def __init__(self, rng: random.Random, scene: SceneConfig, speed: float):
        self.rng = rng
        self.scene = scene
        self.speed = speed
        self.floor = rng.choice(scene.floors)
        self.x, self.z = self._free_point()
        self.yaw = rng.uniform(-180.0, 180.0)
        self._target_stairs = None
        self.tx, self.tz = self._next_waypoint()

    def _blocked(self, x: float, z: float) -> bool:
        head_y = self.floor + EYE_HEIGHT
        for o in self.scene.obstacles:
            if (o.min.x - WALL_MARGIN <= x <= o.max.x + WALL_MARGIN
                    and o.min.z - WALL_MARGIN <= z <= o.max.z + WALL_MARGIN
                    and o.min.y <= head_y and o.max.y >= self.floor):
                return True
        return False

    def _free_point(self) -> tuple[float, float]:
        b = self.scene.bounds
        for _ in range(20):
            x = self.rng.uniform(b.min.x + WALL_MARGIN, b.max.x - WALL_MARGIN)
            z = self.rng.uniform(b.min.z + WALL_MARGIN, b.max.z - WALL_MARGIN)
            if not self._blocked(x, z):
                return x, z
        return (b.min.x + b.max.x) / 2.0, (b.min.z + b.max.z) / 2.0

    def _next_waypoint(self) -> tuple[float, float]:
        self._target_stairs = None
        links = [s for s in self.scene.stairs if self.floor in s.floors]
        if links and self.rng.random() < STAIRS_SWITCH_P:
            s = self.rng.choice(links)
            self._target_stairs = s
            return s.x, s.z
        return self._free_point()

    def advance(self, dt_s: float) -> None:
        if dt_s <= 0:
            return
        to_target = Vec3(self.tx - self.x, 0.0, self.tz - self.z)
        if to_target.norm() < ARRIVE_DIST:
            if self._target_stairs is not None:
                lo, hi = self._target_stairs.floors
                self.floor = hi if self.floor == lo else lo
            self.tx, self.tz = self._next_waypoint()
            to_target = Vec3(self.tx - self.x, 0.0, self.tz - self.z)
        if to_target.norm() > 1e-9:
            want = dir_to_yaw(to_target.normalized())
            max_turn = MAX_TURN_DEG_PER_S * dt_s
            self.yaw += clamp(_wrap_deg(want - self.yaw), -max_turn, max_turn)
            self.yaw = _wrap_deg(self.yaw)
        step = yaw_to_dir(self.yaw) * (self.speed * dt_s)
        nx, nz = self.x + step.x, self.z + step.z
        b = self.scene.bounds
        nx = clamp(nx, b.min.x + WALL_MARGIN, b.max.x - WALL_MARGIN)
        nz = clamp(nz, b.min.z + WALL_MARGIN, b.max.z - WALL_MARGIN)
        if not self._blocked(nx, nz):
            self.x, self.z = nx, nz

    def head_pose(self) -> Pose:
        return Pose(Vec3(self.x, self.floor + EYE_HEIGHT, self.z),
                    Quat.from_yaw(self.yaw))


def _hand_joints(head: Pose, side: float) -> tuple[Pose, ...]:
    # stylized fan of joints in front of the chest; enough for skeleton
    # rendering without modeling real articulation
    base = head.position + head.forward() * 0.3 + Vec3(0.0, -0.4, 0.0)
    right = head.orientation.right()
    out = []
    for i in range(26):
        offset = right * (side * (0.08 + 0.005 * (i % 5))) + Vec3(0.0, -0.01 * (i // 5), 0.0)
        out.append(Pose(base + offset, head.orientation))
    return tuple(out)


class _VisitorScript:
    """One device's deterministic message stream."""

    _PRIORITY = {"hb": 0, "hello": 1, "event": 2, "pose": 3, "metrics": 4, "view": 5}

    def __init__(self, vid: str, index: int, role: str, cfg: SimConfig,
                 scene: SceneConfig, duration_ms: int):
        self.vid = vid
        self.index = index
        self.role = role
        self.cfg = cfg
        self.scene = scene
        self.duration_ms = duration_ms
        # separate streams per concern: suppressing one message class must
        # not shift the random draws of the others
        self.rng = random.Random(f"{cfg.seed}/{vid}")
        self.metrics_rng = random.Random(f"{cfg.seed}/{vid}/metrics")
        self.battery0 = self.rng.uniform(0.80, 1.0)
        self.calib_times = self._draw_calibrations()
        self.walker = _Walker(random.Random(f"{cfg.seed}/{vid}/walk"), scene, cfg.walk_speed)
        self.incidents = [i for i in cfg.incidents if i.visitor == vid]
        self._last_pose_t = 0

    def _draw_calibrations(self) -> list[tuple[int, str]]:
        if self.role == "host" or self.cfg.calibration_rate <= 0 or not self.scene.stations:
            return []
        out = []
        t_s = 0.0
        mean_gap = 60.0 / self.cfg.calibration_rate
        while True:
            t_s += self.rng.expovariate(1.0 / mean_gap)
            if t_s * 1000 >= self.duration_ms:
                return out
            station = self.rng.choice([s.id for s in self.scene.stations])
            out.append((round(t_s * 1000), station))

    def _schedule(self) -> list[tuple[int, int, str, Any]]:
        cfg = self.cfg
        items: list[tuple[int, int, str, Any]] = [(0, self._PRIORITY["hello"], "hello", None)]
        t = cfg.heartbeat_ms
        while t <= self.duration_ms:
            items.append((t, self._PRIORITY["hb"], "hb", None))
            t += cfg.heartbeat_ms
        pose_period = max(1, round(1000 / cfg.pose_hz))
        t = 3
        while t <= self.duration_ms:
            items.append((t, self._PRIORITY["pose"], "pose", None))
            t += pose_period
        metrics_period = max(1, round(1000 / cfg.metrics_hz))
        t = 7
        while t <= self.duration_ms:
            items.append((t, self._PRIORITY["metrics"], "metrics", None))
            t += metrics_period
        if cfg.view_hz > 0 and self.role != "host":
            view_period = max(1, round(1000 / cfg.view_hz))
            t = 11
            k = 0
            while t <= self.duration_ms:
                items.append((t, self._PRIORITY["view"], "view", k))
                t += view_period
                k += 1
        for ct, station in self.calib_times:
            items.append((ct, self._PRIORITY["event"], "event",
                          ("calibration", station)))
        for inc in self.incidents:
            if inc.kind == "tracking_loss":
                if inc.start_ms <= self.duration_ms:
                    items.append((inc.start_ms, self._PRIORITY["event"], "event",
                                  ("tracking_lost", None)))
                if inc.end_ms <= self.duration_ms:
                    items.append((inc.end_ms, self._PRIORITY["event"], "event",
                                  ("tracking_recovered", None)))
        items.sort(key=lambda it: (it[0], it[1]))
        # nudge collisions forward one ms at a time; heartbeats keep their
        # exact grid, everything else flows around them
        hb_times = {it[0] for it in items if it[2] == "hb"}
        out: list[tuple[int, int, str, Any]] = []
        last = -1
        for t, prio, kind, payload in items:
            if kind != "hb":
                t = max(t, last + 1)
                while t in hb_times:
                    t += 1
            assert t > last, "schedule overflow: message rate too dense"
            out.append((t, prio, kind, payload))
            last = t
        return out

    def _suppressed(self, kind: str, t: int) -> bool:
        for inc in self.incidents:
            if inc.kind == "offline" and inc.covers(t):
                return True
            if inc.kind == "tracking_loss" and kind == "pose" and inc.covers(t):
                return True
        return False

    def _fps_at(self, t: int) -> float:
        base = self.cfg.fps_base
        for inc in self.incidents:
            if inc.kind == "fps_dip" and inc.covers(t):
                base = 30.0
                break
        return max(1.0, base - abs(self.metrics_rng.gauss(0.0, self.cfg.fps_noise_sd)))

    def _metrics_at(self, t: int) -> DeviceMetrics:
        rng = self.metrics_rng
        return DeviceMetrics(
            fps=self._fps_at(t),
            battery=max(0.0, self.battery0 - self.cfg.battery_drain * t / 1000.0),
            cpu=clamp(rng.gauss(0.45, 0.08), 0.0, 1.0),
            gpu=clamp(rng.gauss(0.55, 0.08), 0.0, 1.0),
            net_in_bps=10 ** rng.uniform(5.5, 7.5),
            net_out_bps=10 ** rng.uniform(4.5, 6.5),
            latency_ms=8.0 + abs(rng.gauss(0.0, 5.0)),
        )

    def _view_at(self, k: int) -> bytes:
        word = (self.index * 2654435761 + k) & 0xFFFFFFFF
        return word.to_bytes(4, "big")

    def _hands_at(self, t: int, head: Pose) -> tuple[HandFrame | None, HandFrame | None]:
        period = self.cfg.hand_period_ms
        if period <= 0:
            return None, None
        tracked = (t // period) % 2 == 0
        if not tracked:
            return HandFrame(False, ()), HandFrame(False, ())
        return (HandFrame(True, _hand_joints(head, -1.0)),
                HandFrame(True, _hand_joints(head, 1.0)))

    def messages(self) -> Iterator[tuple[int, ClientMessage]]:
        for t, _prio, kind, payload in self._schedule():
            if kind == "hello":
                yield t, Hello(id=self.vid, role=self.role, model="sim-headset")
                continue
            if kind == "pose":
                # the walk continues through suppression windows; the device
                # keeps moving, it just stops reporting
                self.walker.advance((t - self._last_pose_t) / 1000.0)
                self._last_pose_t = t
                if self._suppressed(kind, t):
                    continue
                head = self.walker.head_pose()
                left, right = self._hands_at(t, head)
                yield t, PoseUpdate(t=t, id=self.vid, head=head, left=left, right=right)
                continue
            if self._suppressed(kind, t):
                continue
            if kind == "hb":
                yield t, Heartbeat(t=t, id=self.vid)
            elif kind == "metrics":
                yield t, MetricsUpdate(t=t, id=self.vid, metrics=self._metrics_at(t))
            elif kind == "view":
                yield t, ViewFrame(t=t, id=self.vid, w=64, h=64, fmt="stub",
                                   data=self._view_at(payload))
            elif kind == "event":
                ek, station = payload
                yield t, EventMessage(t=t, id=self.vid, kind=ek, station=station)


def _scripts(cfg: SimConfig, scene: SceneConfig, duration_ms: int) -> list[_VisitorScript]:
    validate_sim_config(cfg)
    scripts = [
        _VisitorScript(visitor_id(i), i, "visitor", cfg, scene, duration_ms)
        for i in range(cfg.n_visitors)
    ]
    if cfg.include_host:
        scripts.append(_VisitorScript("h01", cfg.n_visitors, "host", cfg, scene, duration_ms))
    return scripts


def simulate(cfg: SimConfig, scene: SceneConfig | None = None,
             duration_ms: int = 60_000) -> list[ClientMessage]:
    """All fleet messages for the session, merged in delivery order."""
    scene = scene if scene is not None else default_scene()
    streams = []
    for script in _scripts(cfg, scene, duration_ms):
        streams.append(((t, msg.id, i, msg) for i, (t, msg) in enumerate(script.messages())))
    return [entry[3] for entry in heapq.merge(*streams, key=lambda e: (e[0], e[1], e[2]))]


# --------------------------------------------------------------------------
# Live replay against a running server


async def _replay_visitor(script: _VisitorScript, host: str, port: int,
                          speed: float, start: float) -> None:
    loop = asyncio.get_running_loop()
    reader = writer = None

    async def connect() -> None:
        nonlocal reader, writer
        reader, writer = await asyncio.open_connection(host, port)

    async def reconnect() -> None:
        for attempt in range(5):
            await asyncio.sleep(RECONNECT_DELAY_S)
            try:
                await connect()
                writer.write(encode(Hello(id=script.vid, role=script.role,
                                          model="sim-headset")))
                return
            except (ConnectionError, OSError):
                if attempt == 4:
                    raise

    await connect()
    try:
        for t, msg in script.messages():
            delay = start + (t / 1000.0) / speed - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            while True:
                try:
                    writer.write(encode(msg))
                    await writer.drain()
                    break
                except (ConnectionError, OSError):
                    await reconnect()
    finally:
        if writer is not None:
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass


async def run_live(cfg: SimConfig, scene: SceneConfig, host: str, port: int,
                   duration_s: float, speed: float = 1.0) -> None:
    scripts = _scripts(cfg, scene, round(duration_s * 1000))
    start = asyncio.get_running_loop().time() + 0.1
    await asyncio.gather(*(_replay_visitor(s, host, port, speed, start) for s in scripts))


def _load_json(path: str) -> Any:
    return json.loads(Path(path).read_text())


def sim_config_from_dict(d: Any) -> SimConfig:
    if not isinstance(d, dict):
        raise ConfigError("sim", "must be an object")
    known = {f for f in SimConfig.__dataclass_fields__}
    for key in d:
        if key not in known:
            raise ConfigError(key, "unknown simulator option")
    incidents = tuple(
        Incident(t_start=float(i["t_start"]), duration=float(i["duration"]),
                 visitor=str(i["visitor"]), kind=str(i["kind"]))
        for i in d.get("incidents", ())
    )
    kwargs = {k: v for k, v in d.items() if k != "incidents"}
    cfg = SimConfig(incidents=incidents, **kwargs)
    validate_sim_config(cfg)
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mrhost-sim",
        description="Replay a deterministic simulated headset fleet against a server.",
    )
    parser.add_argument("--server", default=f"127.0.0.1:{DEFAULT_INGEST_PORT}",
                        help="ingest address as host:port")
    parser.add_argument("--visitors", type=int, default=None, help="fleet size")
    parser.add_argument("--seed", type=int, default=None, help="fleet seed")
    parser.add_argument("--duration", type=float, default=120.0, help="session seconds")
    parser.add_argument("--speed", type=float, default=1.0, help="time multiplier")
    parser.add_argument("--config", help="simulator config JSON")
    parser.add_argument("--scene", help="scene description JSON")
    parser.add_argument("--include-host", action="store_true",
                        help="add a walking host device h01")
    args = parser.parse_args(argv)

    try:
        cfg = sim_config_from_dict(_load_json(args.config)) if args.config else SimConfig()
        overrides: dict[str, Any] = {}
        if args.visitors is not None:
            overrides["n_visitors"] = args.visitors
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.include_host:
            overrides["include_host"] = True
        if overrides:
            from dataclasses import replace
            cfg = replace(cfg, **overrides)
        validate_sim_config(cfg)
        scene = scene_from_dict(_load_json(args.scene)) if args.scene else default_scene()
        if args.duration <= 0 or args.speed <= 0:
            raise ConfigError("duration", "duration and speed must be positive")
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    host, _, port_s = args.server.rpartition(":")
    try:
        port = int(port_s)
    except ValueError:
        print(f"config error: bad --server {args.server!r}", file=sys.stderr)
        return 2

    async def _run() -> None:
        loop = asyncio.get_running_loop()
        stop = asyncio.Event()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        replay = asyncio.ensure_future(
            run_live(cfg, scene, host or "127.0.0.1", port, args.duration, args.speed))
        stopper = asyncio.ensure_future(stop.wait())
        done, pending = await asyncio.wait({replay, stopper},
                                           return_when=asyncio.FIRST_COMPLETED)
        for task in pending:
            task.cancel()
        if replay in done:
            replay.result()  # surface connection errors

    try:
        asyncio.run(_run())
    except (ConnectionError, OSError) as e:
        print(f"connection failed: {e}", file=sys.stderr)
        return 1
    except asyncio.CancelledError:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
