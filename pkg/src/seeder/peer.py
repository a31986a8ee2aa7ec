"""One connected peer: handshake, then a reader task and a writer task.

The reader and the writer share the session's pending request queue without a lock.
They only touch it between suspension points, where no other attached task can
interleave.
"""

from __future__ import annotations

import enum
import logging
import socket
import time
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from hybrid import io
from hybrid.disk import (
    DETACHED_WRITE_STEP,
    ResidencyOracle,
    mincore_oracle,
    send_file_chunk,
)
from hybrid.io import EOF, read_lazy, write_all
from hybrid.scheduler import spawn
from hybrid.sync import TIMED_OUT, CondVar
from seeder import wire
from seeder.choke import ChokeDecision, ChokeManager
from seeder.wire import (
    HandshakeTimeout,
    MessageBuffer,
    MessageType,
    PeerClosed,
    ProtocolError,
)

if TYPE_CHECKING:
    from hybrid.io import Data, Eof
    from hybrid.sync import TimedOut
    from seeder.config import SeederConfig
    from seeder.content import ContentStore
    from seeder.server import SeederStats

__all__ = [
    "ChokeState",
    "PeerSession",
    "SessionContext",
    "apply_choke_decision",
    "handshake",
    "reader_task",
    "receive_exactly",
    "run_session",
    "writer_task",
]

_LOGGER = logging.getLogger(__name__)

READ_SIZE = 4096


class ChokeState(enum.Enum):
    CHOKED = "choked"
    UNCHOKED = "unchoked"


class PeerSession:
    """Per-peer state shared by the reader and the writer task of a connection."""

    def __init__(self, sock: socket.socket, address: object) -> None:
        self.sock = sock
        self.address = address
        self.peer_id = b""
        self.choke = ChokeState.CHOKED
        self.interested = False
        self.pending: deque[wire.ChunkRequest] = deque()
        self.outbox: deque[bytes] = deque()
        self.writer_cv = CondVar()
        self.last_activity = time.monotonic()
        self.closed = False
        self._holders = 0

    def __repr__(self) -> str:
        return f"<PeerSession {self.address} {self.choke.value}>"

    @property
    def choked(self) -> bool:
        return self.choke is ChokeState.CHOKED

    def set_choked(self, choked: bool) -> bool:
        """Change the choke state and queue the message announcing it.

        Returns whether the state changed.
        """
        new_state = ChokeState.CHOKED if choked else ChokeState.UNCHOKED
        if new_state is self.choke or self.closed:
            return False
        self.choke = new_state
        message_type = MessageType.CHOKE if choked else MessageType.UNCHOKE
        self.outbox.append(wire.encode_message(message_type))
        self.writer_cv.signal()
        return True

    def close(self) -> None:
        """Tear the connection down and wake both tasks so that they can exit.

        The socket itself is closed by the last task that leaves the session.
        """
        if self.closed:
            return
        self.closed = True
        self.pending.clear()
        self.outbox.clear()
        io.hangup(self.sock)
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.writer_cv.broadcast()


@dataclass
class SessionContext:
    """Everything the tasks of a session need from the seeder that runs them."""

    store: ContentStore
    config: SeederConfig
    stats: SeederStats
    choker: ChokeManager[PeerSession] = field(default_factory=ChokeManager)
    oracle: ResidencyOracle = mincore_oracle
    local_peer_id: bytes = bytes(20)
    sessions: set[PeerSession] = field(default_factory=set)


def apply_choke_decision(decision: ChokeDecision[PeerSession]) -> None:
    for session in decision.choke:
        session.set_choked(True)
    for session in decision.unchoke:
        session.set_choked(False)


async def receive_exactly(
    sock: socket.socket, size: int, timeout_ms: float
) -> bytes:
    """Read exactly `size` bytes within `timeout_ms` milliseconds.

    Raises `HandshakeTimeout` when time runs out and `PeerClosed` if the peer
    closes the connection first.
    """
    deadline = time.monotonic() + timeout_ms / 1000
    received = bytearray()
    while len(received) < size:
        remaining_ms = (deadline - time.monotonic()) * 1000
        result = await read_lazy(sock, size - len(received), remaining_ms)
        if result is TIMED_OUT:
            msg = f"Received {len(received)} of {size} bytes in {timeout_ms} ms"
            raise HandshakeTimeout(msg)
        if result is EOF:
            msg = f"Connection closed after {len(received)} of {size} bytes"
            raise PeerClosed(msg)
        received += result.payload  # type: ignore[union-attr]
    return bytes(received)


async def handshake(
    sock: socket.socket,
    info_hash: bytes,
    local_peer_id: bytes,
    timeout_ms: float,
    initiator: bool = False,
) -> bytes:
    """Exchange handshakes over a fresh connection and return the remote peer ID.

    The accepting side reads first and only answers a valid handshake; the
    initiating side sends first.
    """
    ours = wire.encode_handshake(info_hash, local_peer_id)
    if initiator:
        await write_all(sock, ours)
    theirs = await receive_exactly(sock, wire.HANDSHAKE_LENGTH, timeout_ms)
    peer_id = wire.decode_handshake(theirs, info_hash)
    if not initiator:
        await write_all(sock, ours)
    return peer_id


async def run_session(
    sock: socket.socket, address: object, context: SessionContext
) -> None:
    """Handshake with a newly accepted peer, then hand it to a reader and a writer."""
    session = PeerSession(sock, address)
    stats = context.stats
    context.sessions.add(session)
    stats.peers_connected += 1
    stats.peers_peak = max(stats.peers_peak, stats.peers_connected)
    try:
        session.peer_id = await handshake(
            sock,
            context.store.info_hash,
            context.local_peer_id,
            context.config.handshake_timeout_ms,
        )
    except (ProtocolError, OSError) as exc:
        _LOGGER.info(f"Handshake with {address} failed: {exc!r}")
        session.close()
        _release(session, context)
        return
    _LOGGER.info(f"Peer {session.peer_id.hex()} connected from {address}")
    session.last_activity = time.monotonic()
    session._holders = 2
    spawn(reader_task(session, context))
    spawn(writer_task(session, context))


def _release(session: PeerSession, context: SessionContext) -> None:
    session._holders = max(0, session._holders - 1)
    if session._holders:
        return
    io.close(session.sock)
    context.sessions.discard(session)
    context.stats.peers_connected -= 1
    context.stats.sessions_closed += 1
    _LOGGER.info(f"Session with {session.address} ended")


async def reader_task(session: PeerSession, context: SessionContext) -> None:
    """Parse incoming messages until the peer leaves, misbehaves or stays idle."""
    buffer = MessageBuffer()
    idle_timeout_ms = context.config.idle_timeout_ms
    try:
        while not session.closed:
            idle_ms = (time.monotonic() - session.last_activity) * 1000
            remaining_ms = idle_timeout_ms - idle_ms
            result: Data | TimedOut | Eof = TIMED_OUT
            if remaining_ms > 0:
                result = await read_lazy(session.sock, READ_SIZE, remaining_ms)
            if result is TIMED_OUT:
                idle_ms = (time.monotonic() - session.last_activity) * 1000
                _LOGGER.warning(
                    f"Disconnecting {session.address}, idle for {idle_ms:.0f} ms"
                )
                context.stats.idle_disconnects += 1
                break
            if result is EOF:
                break
            buffer.feed(result.payload)  # type: ignore[union-attr]
            for message in buffer:
                session.last_activity = time.monotonic()
                _handle_message(session, message, context)
    except ProtocolError as exc:
        _LOGGER.info(f"Disconnecting {session.address}: {exc!r}")
    except OSError as exc:
        _LOGGER.info(f"Connection to {session.address} failed: {exc!r}")
    finally:
        apply_choke_decision(context.choker.remove(session))
        session.close()
        _release(session, context)


def _handle_message(
    session: PeerSession, message: wire.Message, context: SessionContext
) -> None:
    if message.type is MessageType.REQUEST:
        request = wire.decode_request(message.payload)
        context.store.request_region(request)
        if session.choked:
            context.stats.requests_dropped_choked += 1
            _LOGGER.debug(f"Dropped {request} of choked {session.address}")
            return
        session.pending.append(request)
        session.writer_cv.signal()
    elif message.type is MessageType.INTERESTED:
        session.interested = True
        context.choker.add(session)
    elif message.type is MessageType.NOT_INTERESTED:
        session.interested = False
        apply_choke_decision(context.choker.remove(session))
    elif message.type is not None:
        _LOGGER.debug(f"Ignored {message.type.name} from {session.address}")


async def writer_task(session: PeerSession, context: SessionContext) -> None:
    """Send control messages and requested chunks, sleeping while there is nothing to do."""
    store = context.store
    stats = context.stats
    sock = session.sock
    try:
        while not session.closed:
            if session.outbox:
                await write_all(sock, session.outbox.popleft())
                continue
            if session.choked or not session.pending:
                await session.writer_cv.wait()
                continue
            request = session.pending.popleft()
            region = store.request_region(request)
            await write_all(
                sock, wire.encode_piece_header(request.index, request.begin, request.length)
            )
            steps: list[int] = []
            start = time.monotonic()
            sent = await send_file_chunk(sock, region, context.oracle, steps)
            elapsed_ms = (time.monotonic() - start) * 1000
            stats.requests_served += 1
            stats.bytes_sent += sent
            stats.max_chunk_write_ms = max(stats.max_chunk_write_ms, elapsed_ms)
            if DETACHED_WRITE_STEP in steps:
                stats.detached_writes += 1
    except (ProtocolError, OSError) as exc:
        _LOGGER.info(f"Sending to {session.address} failed: {exc!r}")
    finally:
        session.close()
        _release(session, context)
