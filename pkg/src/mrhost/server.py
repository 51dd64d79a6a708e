"""Host service: accepts device telemetry over TCP, runs the session engine,
and pushes freshly built scene snapshots to dashboards over WebSocket.

Everything runs on one asyncio loop. Ingest is applied as messages arrive;
geometry is built only at tick boundaries, and control patches are drained
at the start of a tick so a snapshot never mixes two configurations.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Any

from aiohttp import WSMsgType, web

from .core import ConfigError, Pose
from .geometry import (
    DEFAULT_HOST_POSE,
    SquareOutline,
    VizConfig,
    apply_patch,
    build_snapshot,
    validate_viz_config,
)
from .protocol import (
    DEFAULT_DASH_PORT,
    DEFAULT_INGEST_PORT,
    LineDecoder,
    PoseUpdate,
    ProtocolError,
    RequestHistory,
    SetHostPose,
    SetViz,
    decode_control,
    encode_error,
    encode_history,
    encode_snapshot,
)
from .scene import SceneConfig, default_scene, scene_from_dict, validate_scene
from .session import (
    DEFAULT_HEARTBEAT_TIMEOUT_MS,
    DEFAULT_SWEEP_INTERVAL_MS,
    Recorder,
    SessionEngine,
    UnknownVisitor,
)
from .trace import FilterParams, validate_filter_params

log = logging.getLogger("mrhost")

READ_CHUNK = 65536


@dataclass(frozen=True, slots=True)
class ServerConfig:
    ingest_port: int = DEFAULT_INGEST_PORT
    dash_port: int = DEFAULT_DASH_PORT
    tick_hz: int = 10
    heartbeat_timeout_ms: int = DEFAULT_HEARTBEAT_TIMEOUT_MS
    scene: SceneConfig = field(default_factory=default_scene)
    viz: VizConfig = field(default_factory=VizConfig)
    filter_params: FilterParams = field(default_factory=FilterParams)
    record_dir: str | None = None
    static_dir: str | None = None


def validate_server_config(cfg: ServerConfig) -> None:
    for name in ("ingest_port", "dash_port"):
        port = getattr(cfg, name)
        if not isinstance(port, int) or not 0 <= port <= 65535:
            raise ConfigError(name, "must be a port number (0 picks a free port)")
    if cfg.ingest_port != 0 and cfg.ingest_port == cfg.dash_port:
        raise ConfigError("dash_port", "must differ from ingest_port")
    if not isinstance(cfg.tick_hz, int) or not 1 <= cfg.tick_hz <= 60:
        raise ConfigError("tick_hz", "must be an integer in [1, 60]")
    if cfg.heartbeat_timeout_ms < 100:
        raise ConfigError("heartbeat_timeout_ms", "must be >= 100")
    validate_scene(cfg.scene)
    validate_viz_config(cfg.viz)
    validate_filter_params(cfg.filter_params)
    if cfg.static_dir is not None and not Path(cfg.static_dir).is_dir():
        raise ConfigError("static_dir", f"not a directory: {cfg.static_dir}")


def server_config_from_dict(d: Any) -> ServerConfig:
    """Build a ServerConfig from parsed JSON, validating every section."""
    if not isinstance(d, dict):
        raise ConfigError("config", "must be an object")
    known = set(ServerConfig.__dataclass_fields__)
    for key in d:
        if key not in known:
            raise ConfigError(key, "unknown server option")
    kwargs: dict[str, Any] = {k: v for k, v in d.items()
                              if k not in ("scene", "viz", "filter_params")}
    if "scene" in d:
        kwargs["scene"] = scene_from_dict(d["scene"])
    if "viz" in d:
        if not isinstance(d["viz"], dict):
            raise ConfigError("viz", "must be an object")
        try:
            kwargs["viz"] = VizConfig(**d["viz"])
        except TypeError:
            raise ConfigError("viz", "unknown visualization option") from None
    if "filter_params" in d:
        if not isinstance(d["filter_params"], dict):
            raise ConfigError("filter_params", "must be an object")
        try:
            kwargs["filter_params"] = FilterParams(**d["filter_params"])
        except TypeError:
            raise ConfigError("filter_params", "unknown filter option") from None
    cfg = ServerConfig(**kwargs)
    validate_server_config(cfg)
    return cfg


class HostServer:
    """One session's server: ingest, engine, tick loop, dashboard fan-out."""

    def __init__(self, config: ServerConfig):
        validate_server_config(config)
        self.config = config
        recorder = Recorder(config.record_dir) if config.record_dir else None
        self.engine = SessionEngine(
            filter_params=config.filter_params,
            heartbeat_timeout_ms=config.heartbeat_timeout_ms,
            recorder=recorder,
        )
        self.viz = config.viz
        self.dropped_ticks = 0
        self.tick_count = 0
        self._host_pose_override: Pose | None = None
        self._prev_area: SquareOutline | None = None
        self._controls: list[tuple[Any, web.WebSocketResponse]] = []
        self._dash_clients: set[web.WebSocketResponse] = set()
        self._last_snapshot: bytes | None = None
        self._t0: float | None = None
        self._tcp_server: asyncio.AbstractServer | None = None
        self._runner: web.AppRunner | None = None
        self._tasks: list[asyncio.Task] = []

    # -- clocks --------------------------------------------------------------

    def now_ms(self) -> int:
        assert self._t0 is not None, "server not started"
        return round((asyncio.get_running_loop().time() - self._t0) * 1000)

    def bound_ingest_port(self) -> int:
        assert self._tcp_server is not None and self._tcp_server.sockets
        return self._tcp_server.sockets[0].getsockname()[1]

    def bound_dash_port(self) -> int:
        assert self._runner is not None and self._runner.addresses
        return self._runner.addresses[0][1]

    # -- lifecycle -------------------------------------------------------------

    async def start(self) -> None:
        loop = asyncio.get_running_loop()
        self._t0 = loop.time()
        self._tcp_server = await asyncio.start_server(
            self._handle_ingest, host="0.0.0.0", port=self.config.ingest_port)

        app = web.Application()
        app.router.add_get("/ws", self._handle_ws)
        static = self.config.static_dir
        if static is not None:
            index = Path(static) / "index.html"
            if index.is_file():
                async def serve_index(_request: web.Request) -> web.FileResponse:
                    return web.FileResponse(index)
                app.router.add_get("/", serve_index)
            app.router.add_static("/", static)
        else:
            async def serve_placeholder(_request: web.Request) -> web.Response:
                return web.Response(
                    text="telemetry server running; dashboard not bundled\n",
                    content_type="text/plain")
            app.router.add_get("/", serve_placeholder)
        self._runner = web.AppRunner(app)
        await self._runner.setup()
        site = web.TCPSite(self._runner, "0.0.0.0", self.config.dash_port)
        await site.start()

        self._tasks = [
            asyncio.ensure_future(self._tick_loop()),
            asyncio.ensure_future(self._sweep_loop()),
        ]
        log.info("listening: ingest tcp/%d, dashboard http/%d",
                 self.config.ingest_port, self.config.dash_port)

    async def stop(self) -> None:
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            try:
                await task
            except asyncio.CancelledError:
                pass
        self._tasks = []
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        for ws in list(self._dash_clients):
            await ws.close()
        if self._runner is not None:
            await self._runner.cleanup()
        if self.engine.recorder is not None:
            self.engine.recorder.close()

    # -- device ingest -----------------------------------------------------------

    async def _handle_ingest(self, reader: asyncio.StreamReader,
                             writer: asyncio.StreamWriter) -> None:
        decoder = LineDecoder()
        try:
            while True:
                data = await reader.read(READ_CHUNK)
                if not data:
                    break
                for result in decoder.feed(data):
                    if isinstance(result, ProtocolError):
                        self.engine.note_decode_error()
                        continue
                    try:
                        self.engine.ingest(result, now=self.now_ms())
                    except UnknownVisitor:
                        # talking before hello; drop but keep the tally
                        self.engine.note_decode_error()
        except (ConnectionError, OSError):
            pass
        finally:
            writer.close()

    # -- dashboard side ------------------------------------------------------------

    async def _handle_ws(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse(heartbeat=30.0)
        await ws.prepare(request)
        self._dash_clients.add(ws)
        # catch the new client up without waiting for the next tick
        if self._last_snapshot is not None:
            await ws.send_str(self._last_snapshot.decode())
        try:
            async for msg in ws:
                if msg.type != WSMsgType.TEXT:
                    continue
                try:
                    control = decode_control(msg.data)
                except ProtocolError as e:
                    await ws.send_str(encode_error(str(e)))
                    continue
                self._controls.append((control, ws))
        finally:
            self._dash_clients.discard(ws)
        return ws

    # -- periodic work ------------------------------------------------------------

    async def _sweep_loop(self) -> None:
        period = DEFAULT_SWEEP_INTERVAL_MS / 1000.0
        while True:
            await asyncio.sleep(period)
            self.engine.heartbeat_sweep(self.now_ms())

    async def _tick_loop(self) -> None:
        loop = asyncio.get_running_loop()
        period = 1.0 / self.config.tick_hz
        k = 1
        while True:
            target = self._t0 + k * period
            now = loop.time()
            if now > target + period:
                missed = int((now - target) / period)
                k += missed
                self.dropped_ticks += missed
                target = self._t0 + k * period
            delay = target - now
            # always yield, even when behind schedule, so signal handlers
            # and socket callbacks still run under overload
            await asyncio.sleep(delay if delay > 0 else 0)
            await self._tick(period)
            k += 1

    def _apply_controls(self) -> list[tuple[str, web.WebSocketResponse]]:
        replies: list[tuple[str, web.WebSocketResponse]] = []
        controls, self._controls = self._controls, []
        for control, ws in controls:
            if isinstance(control, SetViz):
                try:
                    self.viz, params = apply_patch(self.viz, self.engine.params,
                                                   control.patch)
                    self.engine.set_filter_params(params)
                except ConfigError as e:
                    replies.append((encode_error(str(e)), ws))
            elif isinstance(control, RequestHistory):
                try:
                    samples = self.engine.get_history(control.visitor_id,
                                                      control.up_to_t)
                    replies.append((encode_history(control.visitor_id, samples), ws))
                except UnknownVisitor as e:
                    replies.append((encode_error(str(e)), ws))
            elif isinstance(control, SetHostPose):
                self._host_pose_override = control.pose
        return replies

    def _resolve_host_pose(self) -> Pose:
        """Live host headset wins, then a dashboard-set pose, then default."""
        hosts = [v for v in self.engine.sorted_visitors()
                 if v.role == "host" and v.online and v.head is not None]
        if hosts:
            return hosts[0].head
        if self._host_pose_override is not None:
            return self._host_pose_override
        return DEFAULT_HOST_POSE

    def config_echo(self) -> dict[str, Any]:
        echo = asdict(self.viz)
        echo["window"] = self.engine.params.window
        echo["alpha_fade"] = self.engine.params.alpha_fade
        return echo

    def diagnostics(self) -> dict[str, Any]:
        return {
            "stale_samples": self.engine.stale_samples(),
            "decode_errors": self.engine.decode_errors,
            "connected": self.engine.connected_count(),
            "dropped_ticks": self.dropped_ticks,
        }

    def build_tick_snapshot(self, now: int, dt: float) -> bytes:
        scene = self.config.scene
        snap = build_snapshot(
            self.engine.sorted_visitors(),
            self._resolve_host_pose(),
            self.viz,
            now,
            filter_params=self.engine.params,
            floors=scene.floors,
            stations=scene.stations,
            net_anchor=scene.anchor(),
            prev_area=self._prev_area,
            dt=dt,
            config_echo=self.config_echo(),
            diagnostics=self.diagnostics(),
        )
        self._prev_area = next(
            (p for p in snap.primitives if isinstance(p, SquareOutline)), self._prev_area)
        return encode_snapshot(snap)

    async def _tick(self, dt: float) -> None:
        replies = self._apply_controls()
        payload = self.build_tick_snapshot(self.now_ms(), dt)
        self._last_snapshot = payload
        self.tick_count += 1
        text = payload.decode()
        sends = [self._send_safe(ws, text) for ws in self._dash_clients]
        sends.extend(self._send_safe(ws, reply) for reply, ws in replies)
        if sends:
            await asyncio.gather(*sends)

    async def _send_safe(self, ws: web.WebSocketResponse, text: str) -> None:
        try:
            await ws.send_str(text)
        except (ConnectionError, RuntimeError):
            self._dash_clients.discard(ws)
