"""Command line front end: run the host service or lint a config file."""

from __future__ import annotations

import argparse
import asyncio
import gc
import json
import logging
import os
import signal
import sys
from dataclasses import replace

from .core import ConfigError
from .server import HostServer, ServerConfig, server_config_from_dict, validate_server_config

CONFIG_ENV = "MRHOST_CONFIG"


def _load_config(path: str | None) -> ServerConfig:
    if path is None:
        path = os.environ.get(CONFIG_ENV)
    if path is None:
        return ServerConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON in {path}: {e}") from None
    return server_config_from_dict(raw)


def _apply_flags(cfg: ServerConfig, args: argparse.Namespace) -> ServerConfig:
    overrides = {}
    if args.ingest_port is not None:
        overrides["ingest_port"] = args.ingest_port
    if args.dash_port is not None:
        overrides["dash_port"] = args.dash_port
    if args.tick_hz is not None:
        overrides["tick_hz"] = args.tick_hz
    if args.record is not None:
        overrides["record_dir"] = args.record
    if args.static is not None:
        overrides["static_dir"] = args.static
    if not overrides:
        return cfg
    cfg = replace(cfg, **overrides)
    validate_server_config(cfg)
    return cfg


async def _run_until_signal(cfg: ServerConfig) -> None:
    server = HostServer(cfg)
    await server.start()
    # snapshot builds churn short-lived objects while trace history only
    # grows; keep startup state out of the collector and space out full
    # collections so they do not land inside a tick
    gc.collect()
    gc.freeze()
    gc.set_threshold(100_000, 30, 30)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except NotImplementedError:
            pass
    try:
        await stop.wait()
    finally:
        await server.stop()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mrhost", description="multiuser session telemetry server")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the server")
    p_serve.add_argument("--config", metavar="FILE",
                         help=f"JSON config file (default: ${CONFIG_ENV})")
    p_serve.add_argument("--ingest-port", type=int, metavar="PORT")
    p_serve.add_argument("--dash-port", type=int, metavar="PORT")
    p_serve.add_argument("--tick-hz", type=int, metavar="HZ")
    p_serve.add_argument("--record", metavar="DIR",
                         help="write event and trace logs to DIR")
    p_serve.add_argument("--static", metavar="DIR",
                         help="serve a dashboard build from DIR")
    p_serve.add_argument("--verbose", action="store_true")

    p_check = sub.add_parser("check-config", help="validate a config file")
    p_check.add_argument("path", metavar="FILE")

    args = parser.parse_args(argv)

    if args.command == "check-config":
        try:
            _load_config(args.path)
        except ConfigError as e:
            print(f"invalid: {e}", file=sys.stderr)
            return 1
        print("ok")
        return 0

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_flags(_load_config(args.config), args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        asyncio.run(_run_until_signal(cfg))
    except OSError as e:
        print(f"server error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
