"""Command line entry point :code:`bench`.

Every subcommand prints one :code:`key=value` line per metric.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING

from seeder.bench.micro import bench_spawn, bench_switch
from seeder.bench.report import save_throughput_histogram
from seeder.bench.simpeers import (
    PayloadMismatch,
    RequestPattern,
    SimPeerConfig,
    running_seeder,
    simulate,
)
from seeder.config import SeederConfig

if TYPE_CHECKING:
    from collections.abc import Sequence

    from seeder.bench.report import BenchReport

__all__ = ["main"]

_LOGGER = logging.getLogger(__name__)


def parse_target(text: str) -> tuple[str, int]:
    host, separator, port = text.rpartition(":")
    if not separator or not host or not port.isdigit():
        msg = f"Expected HOST:PORT, got {text!r}"
        raise argparse.ArgumentTypeError(msg)
    return host.strip("[]"), int(port)


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench", description="Benchmarks of the hybrid runtime and the seeder"
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    commands = parser.add_subparsers(dest="command", required=True)

    spawn = commands.add_parser("spawn", help="spawn rate and idle task memory")
    spawn.add_argument("--n", type=int, default=100_000)

    switch = commands.add_parser("switch", help="cooperative context switch rate")
    switch.add_argument("--pairs", type=int, default=1)
    switch.add_argument("--iters", type=int, default=1_000_000)
    switch.add_argument("--runs", type=int, default=3)

    peers = commands.add_parser("peers", help="simulated peers against a seeder")
    peers.add_argument("--file", type=Path, required=True, help="the served file")
    peers.add_argument("--count", type=int, default=100)
    peers.add_argument(
        "--pattern",
        choices=[pattern.value for pattern in RequestPattern],
        default=RequestPattern.RANDOM.value,
    )
    peers.add_argument("--seed", type=int, default=42)
    peers.add_argument("--requests", type=int, default=64, help="per random peer")
    peers.add_argument("--rate-limit", type=float, help="bytes/sec per peer")
    peers.add_argument("--piece-length", type=int, default=SeederConfig.piece_length)
    peers.add_argument(
        "--target",
        type=parse_target,
        help="HOST:PORT of a running seeder; without it one is started in-process",
    )
    peers.add_argument("--choke-tick-ms", type=int, default=1_000)
    peers.add_argument("--plot", type=Path, help="write a throughput histogram here")
    return parser


def _run_peers(args: argparse.Namespace) -> BenchReport:
    config = SimPeerConfig(
        peer_count=args.count,
        pattern=RequestPattern(args.pattern),
        seed=args.seed,
        rate_limit=args.rate_limit,
        requests_per_peer=args.requests,
        piece_length=args.piece_length,
    )
    if args.target is not None:
        report, frame = simulate(config, args.target, args.file)
    else:
        seeder_config = SeederConfig(
            file=args.file,
            host="127.0.0.1",
            port=0,
            piece_length=args.piece_length,
            choke_tick_ms=args.choke_tick_ms,
        )
        with running_seeder(seeder_config) as seeder:
            report, frame = simulate(config, seeder.address, args.file)
        report.extra.update({
            f"seeder_{key}": value for key, value in seeder.stats.as_dict().items()
        })
    if args.plot is not None:
        save_throughput_histogram(frame, args.plot)
    return report


def main(argv: Sequence[str] | None = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    if args.command == "spawn":
        report = bench_spawn(args.n)
    elif args.command == "switch":
        report = bench_switch(args.pairs, args.iters, args.runs)
    else:
        try:
            report = _run_peers(args)
        except PayloadMismatch as exc:
            print(exc.report.dump())  # noqa: T201
            _LOGGER.error(str(exc))  # noqa: TRY400
            return 1
    print(report.dump())  # noqa: T201
    return 0


if __name__ == "__main__":
    sys.exit(main())
