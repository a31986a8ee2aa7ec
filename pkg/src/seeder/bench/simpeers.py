"""Load generator: many simulated peers downloading from a seeder.

Every simulated peer is an attached task on a runtime of its own, separate from the
seeder's. Peers behave the way the seeder expects: they declare interest, only send
requests while unchoked, and check every received chunk against the served file.
"""

from __future__ import annotations

import contextlib
import enum
import logging
import os
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from hybrid.disk import MappedFile
from hybrid.io import EOF, close, connect, read_lazy, resolve_detached, write_all
from hybrid.scheduler import Runtime, spawn
from hybrid.sync import TIMED_OUT, sleep
from seeder import wire
from seeder.bench.report import BenchReport
from seeder.content import DEFAULT_PIECE_LENGTH, content_digest
from seeder.peer import handshake
from seeder.server import Seeder
from seeder.wire import ChunkRequest, MessageBuffer, MessageType

if TYPE_CHECKING:
    from collections.abc import Iterator
    from pathlib import Path

    from seeder.config import SeederConfig

__all__ = [
    "PayloadMismatch",
    "RequestPattern",
    "SimPeerConfig",
    "request_plan",
    "running_seeder",
    "sim_peers",
    "simulate",
]

_LOGGER = logging.getLogger(__name__)

READ_SIZE = 64 * 1024


class PayloadMismatch(Exception):
    """A simulated peer received bytes that differ from the served file."""

    def __init__(self, message: str, report: BenchReport) -> None:
        super().__init__(message)
        self.report = report


class RequestPattern(enum.Enum):
    SEQUENTIAL = "sequential"
    RANDOM = "random"


@dataclass(frozen=True)
class SimPeerConfig:
    """Shape of a simulated swarm.

    Args:
        peer_count: Number of simulated peers.
        pattern: Sequential peers fetch the whole file in order; random peers fetch
            `requests_per_peer` chunks drawn with a generator seeded by :code:`seed +
            peer index`.
        rate_limit: Bytes per second each peer accepts at most, `None` for no limit.
        pipeline: Requests a peer keeps outstanding while unchoked.
    """

    peer_count: int = 1
    pattern: RequestPattern = RequestPattern.SEQUENTIAL
    seed: int = 0
    rate_limit: float | None = None
    requests_per_peer: int = 64
    chunk_length: int = wire.MAX_REQUEST_LENGTH
    piece_length: int = DEFAULT_PIECE_LENGTH
    pipeline: int = 8
    keep_alive_ms: float = 5_000
    stall_timeout_ms: float = 60_000
    connect_timeout_ms: float = 10_000

    def __post_init__(self) -> None:
        if self.peer_count < 0:
            msg = f"Peer count cannot be negative, got {self.peer_count}"
            raise ValueError(msg)
        if not 0 < self.chunk_length <= wire.MAX_REQUEST_LENGTH:
            msg = f"Chunk length must be in (0, {wire.MAX_REQUEST_LENGTH}]"
            raise ValueError(msg)
        if self.pipeline < 1:
            msg = f"Pipeline depth must be positive, got {self.pipeline}"
            raise ValueError(msg)


def _all_chunks(size: int, piece_length: int, chunk_length: int) -> list[ChunkRequest]:
    chunks = []
    offset = 0
    while offset < size:
        index, begin = divmod(offset, piece_length)
        length = min(chunk_length, size - offset, piece_length - begin)
        chunks.append(ChunkRequest(index, begin, length))
        offset += length
    return chunks


def request_plan(config: SimPeerConfig, peer_index: int, size: int) -> list[ChunkRequest]:
    """The requests that peer number `peer_index` issues for a file of `size` bytes."""
    chunk_length = min(config.chunk_length, config.piece_length)
    chunks = _all_chunks(size, config.piece_length, chunk_length)
    if config.pattern is RequestPattern.SEQUENTIAL:
        return chunks
    rng = np.random.default_rng(config.seed + peer_index)
    picks = rng.integers(0, len(chunks), size=config.requests_per_peer)
    return [chunks[i] for i in picks]


@dataclass
class _PeerResult:
    peer: int
    requests: int = 0
    completed: int = 0
    bytes: int = 0
    seconds: float = 0.0
    unchokes: int = 0
    chokes: int = 0
    first_unchoke_ms: float = float("nan")
    duplicates: int = 0
    mismatches: int = 0
    error: str = ""


async def _open(address: tuple[Any, ...], timeout_ms: float) -> socket.socket:
    family = socket.AF_INET6 if ":" in str(address[0]) else socket.AF_INET
    sock = socket.socket(family, socket.SOCK_STREAM)
    sock.setblocking(False)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    deadline = time.monotonic() + timeout_ms / 1000
    try:
        await connect(sock, address)
    except OSError:
        sock.close()
        if time.monotonic() > deadline:
            raise
        # The listen backlog may overflow briefly when all peers start at once.
        await sleep(50)
        return await _open(address, (deadline - time.monotonic()) * 1000)
    return sock


async def _peer(  # noqa: C901, PLR0912, PLR0915
    result: _PeerResult,
    plan: list[ChunkRequest],
    address: tuple[Any, ...],
    content: MappedFile,
    info_hash: bytes,
    config: SimPeerConfig,
) -> None:
    start = time.monotonic()
    peer_id = b"-SIM000-" + f"{result.peer:012d}".encode()
    sock = await _open(address, config.connect_timeout_ms)
    try:
        await handshake(
            sock, info_hash, peer_id, config.connect_timeout_ms, initiator=True
        )
        await write_all(sock, wire.encode_message(MessageType.INTERESTED))
        buffer = MessageBuffer()
        choked = True
        outstanding: dict[tuple[int, int], ChunkRequest] = {}
        unanswered_at_choke: set[tuple[int, int]] = set()
        queue = deque(plan)
        result.requests = len(plan)
        silent_since = time.monotonic()
        while queue or outstanding:
            if not choked:
                requests = []
                while queue and len(outstanding) < config.pipeline:
                    request = queue.popleft()
                    key = (request.index, request.begin)
                    if key in outstanding:
                        queue.appendleft(request)
                        break
                    outstanding[key] = request
                    requests.append(wire.encode_request(request))
                if requests:
                    await write_all(sock, b"".join(requests))
            answer = await read_lazy(sock, READ_SIZE, config.keep_alive_ms)
            if answer is TIMED_OUT:
                if (time.monotonic() - silent_since) * 1000 > config.stall_timeout_ms:
                    msg = f"No data for {config.stall_timeout_ms} ms"
                    raise TimeoutError(msg)
                await write_all(sock, wire.encode_keep_alive())
                continue
            if answer is EOF:
                msg = "The seeder closed the connection"
                raise ConnectionError(msg)
            silent_since = time.monotonic()
            buffer.feed(answer.payload)  # type: ignore[union-attr]
            for message in buffer:
                if message.type is MessageType.UNCHOKE:
                    choked = False
                    result.unchokes += 1
                    if result.unchokes == 1:
                        result.first_unchoke_ms = (time.monotonic() - start) * 1000
                    # Requests that reached a choked seeder were dropped; ask again.
                    again = [
                        wire.encode_request(outstanding[key])
                        for key in unanswered_at_choke
                        if key in outstanding
                    ]
                    unanswered_at_choke.clear()
                    if again:
                        await write_all(sock, b"".join(again))
                elif message.type is MessageType.CHOKE:
                    choked = True
                    result.chokes += 1
                    unanswered_at_choke = set(outstanding)
                elif message.type is MessageType.PIECE:
                    piece, data = wire.decode_piece(message.payload)
                    offset = piece.index * config.piece_length + piece.begin
                    if data != content.read(offset, len(data)):
                        result.mismatches += 1
                        _LOGGER.error(f"Peer {result.peer}: wrong bytes for {piece}")
                    key = (piece.index, piece.begin)
                    if outstanding.pop(key, None) is None:
                        result.duplicates += 1
                        continue
                    result.completed += 1
                    result.bytes += len(data)
            if config.rate_limit:
                ahead = result.bytes / config.rate_limit - (time.monotonic() - start)
                if ahead > 0:
                    await sleep(ahead * 1000)
        await write_all(sock, wire.encode_message(MessageType.NOT_INTERESTED))
    finally:
        result.seconds = time.monotonic() - start
        close(sock)


async def _swarm(
    config: SimPeerConfig,
    target: tuple[str, int],
    content: MappedFile,
    results: list[_PeerResult],
) -> None:
    host, port = target
    addresses = await resolve_detached(host, port, socket.AF_INET)
    address = addresses[0]
    info_hash = content_digest(content)
    handles = []
    for index in range(config.peer_count):
        result = _PeerResult(peer=index)
        results.append(result)
        plan = request_plan(config, index, content.size)
        handle = spawn(_peer(result, plan, address, content, info_hash, config))
        handles.append((result, handle))
    for result, handle in handles:
        try:
            await handle.join()
        except Exception as exc:  # noqa: BLE001
            result.error = repr(exc)
            _LOGGER.warning(f"Peer {result.peer} failed: {exc!r}")


def simulate(
    config: SimPeerConfig, target: tuple[str, int], file: Path | str
) -> tuple[BenchReport, pd.DataFrame]:
    """Run the swarm against `target` and return the report plus a per-peer table."""
    results: list[_PeerResult] = []
    with MappedFile(file) as content:
        start = time.monotonic()
        with Runtime() as runtime:
            runtime.spawn(_swarm(config, target, content, results))
            runtime.run()
        elapsed = time.monotonic() - start
    columns = [f.name for f in fields(_PeerResult)]
    frame = pd.DataFrame([vars(result) for result in results], columns=columns)
    total = int(frame["bytes"].sum())
    failures = int((frame["error"] != "").sum())
    mismatches = int(frame["mismatches"].sum())
    extra: dict[str, Any] = {
        "peers": config.peer_count,
        "pattern": config.pattern.value,
        "seed": config.seed,
        "bytes": total,
        "seconds": elapsed,
        "failures": failures,
        "mismatches": mismatches,
        "duplicates": int(frame["duplicates"].sum()),
    }
    if len(frame):
        extra.update(frame.bench.percentiles("first_unchoke_ms"))
    report = BenchReport(
        aggregate_throughput=total / elapsed if elapsed > 0 else 0.0,
        extra=extra,
    )
    _LOGGER.info(f"Simulated peers:\n{frame}")
    if mismatches:
        msg = f"{mismatches} chunks differ from {file}"
        raise PayloadMismatch(msg, report)
    return report, frame


def sim_peers(
    config: SimPeerConfig, target: tuple[str, int], file: Path | str
) -> BenchReport:
    return simulate(config, target, file)[0]


@contextlib.contextmanager
def running_seeder(config: SeederConfig) -> Iterator[Seeder]:
    """Run a seeder on its own runtime in a background thread of this process."""
    seeder = Seeder(config)
    seeder.bind()
    errors: list[BaseException] = []

    def _serve() -> None:
        try:
            seeder.run(pool_size=max(2, min(8, os.cpu_count() or 1)))
        except BaseException as exc:  # noqa: BLE001
            errors.append(exc)

    thread = threading.Thread(target=_serve, name="seeder", daemon=True)
    thread.start()
    try:
        yield seeder
    finally:
        seeder.request_shutdown()
        thread.join()
        seeder.close()
        if errors:
            raise errors[0]
