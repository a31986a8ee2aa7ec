"""The seeder: accepting peers, rotating unchokes, and reporting what happened."""

from __future__ import annotations

import logging
import math
import socket
import time
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING

import kvconf
from hybrid import io
from hybrid.disk import ResidencyOracle, mincore_oracle
from hybrid.io import IoDirection, IoOutcome, io_wait
from hybrid.scheduler import Runtime, RuntimeStats, TaskHandle, current_task, spawn
from hybrid.sync import interrupt, sleep
from seeder.choke import ChokeManager
from seeder.content import ContentStore
from seeder.peer import PeerSession, SessionContext, apply_choke_decision, run_session

if TYPE_CHECKING:
    from seeder.config import SeederConfig

__all__ = [
    "Seeder",
    "SeederStats",
]

_LOGGER = logging.getLogger(__name__)

BACKLOG = 1024


@dataclass
class SeederStats:
    """Counters of one seeder; `peers_connected` is the only one that decreases."""

    peers_connected: int = 0
    peers_peak: int = 0
    sessions_closed: int = 0
    idle_disconnects: int = 0
    requests_served: int = 0
    requests_dropped_choked: int = 0
    bytes_sent: int = 0
    choke_ticks: int = 0
    max_unchoked: int = 0
    choke_bound_violations: int = 0
    detached_writes: int = 0
    max_chunk_write_ms: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def dump(self) -> str:
        return kvconf.dump(self.as_dict())


class Seeder:
    """Serve one file to any number of peers from a single event loop.

    Attached tasks: one listener, one choke ticker, optionally one statistics
    logger, and per connected peer a reader and a writer.
    """

    def __init__(
        self, config: SeederConfig, oracle: ResidencyOracle = mincore_oracle
    ) -> None:
        self.config = config
        self.store = ContentStore(config.file, config.piece_length)
        self.stats = SeederStats()
        self.choker: ChokeManager[PeerSession] = ChokeManager(config.unchoked_fraction)
        self.context = SessionContext(
            store=self.store,
            config=config,
            stats=self.stats,
            choker=self.choker,
            oracle=oracle,
            local_peer_id=config.peer_id,
        )
        self.listener: socket.socket | None = None
        self.runtime: Runtime | None = None
        self._stopping = False
        self._stop_requested = False
        self._sleepers: list[TaskHandle] = []

    def __enter__(self) -> Seeder:
        return self

    def __exit__(self, *_: object) -> None:
        self.close()

    @property
    def sessions(self) -> set[PeerSession]:
        return self.context.sessions

    @property
    def address(self) -> tuple[str, int]:
        if self.listener is None:
            msg = "The seeder is not listening"
            raise RuntimeError(msg)
        return self.listener.getsockname()[:2]

    def bind(self) -> tuple[str, int]:
        """Open the listening socket; port 0 picks a free port."""
        if self.listener is not None:
            return self.address
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((self.config.host, self.config.port))
            listener.listen(BACKLOG)
            listener.setblocking(False)
        except OSError:
            listener.close()
            raise
        self.listener = listener
        _LOGGER.info(f"Listening on {self.address}")
        return self.address

    async def serve(self) -> None:
        """Run the seeder until `shutdown` is called."""
        task = current_task()
        assert task is not None  # noqa: S101
        self.runtime = task.runtime
        self.bind()
        self._sleepers.append(spawn(self.choke_loop()))
        if self.config.stats:
            self._sleepers.append(spawn(self.stats_loop()))
        await self.listen_loop()

    async def listen_loop(self) -> None:
        """Accept connections and spawn a session for each of them."""
        listener = self.listener
        assert listener is not None  # noqa: S101
        while not self._stopping:
            if await io_wait(listener, IoDirection.IN) is IoOutcome.CLOSED:
                break
            try:
                sock, address = listener.accept()
            except (BlockingIOError, InterruptedError):
                continue
            except OSError as exc:
                _LOGGER.warning(f"Accepting a connection failed: {exc!r}")
                continue
            sock.setblocking(False)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            spawn(run_session(sock, address, self.context))
        io.close(listener)
        self.listener = None
        _LOGGER.info("Stopped listening")

    def choke_tick(self) -> None:
        """Rotate the unchoked peers once and check the unchoke bound."""
        decision = self.choker.tick()
        apply_choke_decision(decision)
        stats = self.stats
        stats.choke_ticks += 1
        unchoked = sum(not session.choked for session in self.sessions)
        bound = self.unchoke_bound()
        stats.max_unchoked = max(stats.max_unchoked, unchoked)
        if unchoked > bound:
            stats.choke_bound_violations += 1
            _LOGGER.warning(f"{unchoked} peers unchoked, more than the bound of {bound}")

    def unchoke_bound(self) -> int:
        """Most peers that may be unchoked, given the interested sessions."""
        interested = sum(session.interested for session in self.sessions)
        if not interested:
            return 0
        return max(1, math.ceil(self.config.unchoked_fraction * interested))

    async def choke_loop(self) -> None:
        while not self._stopping:
            await sleep(self.config.choke_tick_ms)
            if self._stop_requested:
                self.shutdown()
                break
            if not self._stopping:
                self.choke_tick()

    async def stats_loop(self) -> None:
        while not self._stopping:
            await sleep(self.config.stats_interval_ms)
            for line in self.stats.dump().splitlines():
                _LOGGER.info(line)

    def request_shutdown(self) -> None:
        """Ask for a shutdown at the next choke tick; safe from signal handlers and other threads."""
        self._stop_requested = True

    def shutdown(self) -> None:
        """Stop accepting, disconnect every peer and end the periodic tasks."""
        if self._stopping:
            return
        self._stopping = True
        _LOGGER.info(f"Shutting down, disconnecting {len(self.sessions)} peers")
        if self.listener is not None:
            io.hangup(self.listener)
        for session in list(self.sessions):
            session.close()
        for task in self._sleepers:
            if not task.done:
                interrupt(task)

    def close(self) -> None:
        if self.listener is not None:
            self.listener.close()
            self.listener = None
        self.store.close()

    def run(self, pool_size: int | None = None) -> RuntimeStats:
        """Serve on a fresh runtime in the calling thread until shut down."""
        start = time.monotonic()
        with Runtime(pool_size) as runtime:
            runtime.spawn(self.serve)
            runtime.run()
            _LOGGER.info(
                f"Runtime stopped after {time.monotonic() - start:.1f} s:"
                f" {runtime.stats.as_dict()}"
            )
        return runtime.stats
