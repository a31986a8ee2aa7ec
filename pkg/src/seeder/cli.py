"""Command line entry point :code:`seeder`."""

from __future__ import annotations

import argparse
import logging
import signal
import sys
from pathlib import Path
from typing import TYPE_CHECKING

from seeder.config import SeederConfig, load_config
from seeder.server import Seeder

if TYPE_CHECKING:
    from collections.abc import Sequence
    from types import FrameType

__all__ = ["main"]

_LOGGER = logging.getLogger(__name__)


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seeder",
        description="Serve one file to peers of the HEKATE-MINI/1 protocol",
    )
    parser.add_argument("--config", type=Path, help="key = value settings file")
    parser.add_argument("--file", type=Path, help="file to serve")
    parser.add_argument("--host", help="address to listen on")
    parser.add_argument("--port", type=int, help="port to listen on, 0 for any")
    parser.add_argument("--piece-length", type=int, help="bytes, power of two")
    parser.add_argument(
        "--unchoked-fraction", type=float, help="share of interested peers unchoked"
    )
    parser.add_argument("--idle-timeout-ms", type=int)
    parser.add_argument("--handshake-timeout-ms", type=int)
    parser.add_argument("--choke-tick-ms", type=int)
    parser.add_argument(
        "--stats",
        action="store_true",
        default=None,
        help="log statistics periodically and print them at exit",
    )
    parser.add_argument("--stats-interval-ms", type=int)
    parser.add_argument("--pool-size", type=int, help="threads of the default pool")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    return parser


def build_config(args: argparse.Namespace) -> SeederConfig:
    config = SeederConfig() if args.config is None else load_config(args.config)
    return config.replace(
        file=args.file,
        host=args.host,
        port=args.port,
        piece_length=args.piece_length,
        unchoked_fraction=args.unchoked_fraction,
        idle_timeout_ms=args.idle_timeout_ms,
        handshake_timeout_ms=args.handshake_timeout_ms,
        choke_tick_ms=args.choke_tick_ms,
        stats=args.stats,
        stats_interval_ms=args.stats_interval_ms,
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    try:
        config = build_config(args)
        seeder = Seeder(config)
    except (OSError, ValueError, SyntaxError) as exc:
        parser.error(str(exc))
    try:
        seeder.bind()
    except OSError as exc:
        seeder.close()
        parser.error(f"Cannot listen on {config.host}:{config.port}: {exc}")

    def _on_signal(signum: int, _: FrameType | None) -> None:
        _LOGGER.warning(f"Received signal {signum}, shutting down")
        seeder.request_shutdown()

    previous = signal.signal(signal.SIGINT, _on_signal)
    try:
        with seeder:
            runtime_stats = seeder.run(args.pool_size)
    finally:
        signal.signal(signal.SIGINT, previous)
    if config.stats:
        print(seeder.stats.dump())  # noqa: T201
        print(runtime_stats.dump())  # noqa: T201
    return 0


if __name__ == "__main__":
    sys.exit(main())
