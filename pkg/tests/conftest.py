from __future__ import annotations

import socket
import time
from typing import TYPE_CHECKING, Any, Callable

import numpy as np
import pytest

from hybrid.disk import FileRegion, Residency
from hybrid.scheduler import Runtime
from seeder import wire
from seeder.bench.simpeers import running_seeder
from seeder.config import SeederConfig
from seeder.wire import ChunkRequest, Message, MessageBuffer, MessageType

if TYPE_CHECKING:
    from collections.abc import Iterator
    from pathlib import Path

    from hybrid.scheduler import TaskBody
    from seeder.server import Seeder

CONTENT_SIZE = 1 << 20
PIECE_LENGTH = 1 << 16


def run_in_runtime(body: TaskBody, pool_size: int = 2) -> Any:
    """Run `body` as the first task of a fresh runtime and return its result."""
    with Runtime(pool_size=pool_size) as runtime:
        handle = runtime.spawn(body)
        runtime.run()
    return handle.result()


class ScriptedOracle:
    """Residency oracle that answers from a script and counts its calls."""

    def __init__(self, *answers: Residency) -> None:
        self.answers = list(answers)
        self.calls = 0

    def __call__(self, region: FileRegion) -> Residency:
        answer = self.answers[min(self.calls, len(self.answers) - 1)]
        self.calls += 1
        return answer


@pytest.fixture
def socket_pair() -> Iterator[tuple[socket.socket, socket.socket]]:
    left, right = socket.socketpair()
    left.setblocking(False)
    right.setblocking(False)
    try:
        yield left, right
    finally:
        left.close()
        right.close()


@pytest.fixture
def content_file(tmp_path: Path) -> Path:
    path = tmp_path / "content.bin"
    path.write_bytes(np.random.default_rng(0).bytes(CONTENT_SIZE))
    return path


@pytest.fixture
def seeder_config(content_file: Path) -> SeederConfig:
    return SeederConfig(
        file=content_file,
        host="127.0.0.1",
        port=0,
        piece_length=PIECE_LENGTH,
        choke_tick_ms=50,
        handshake_timeout_ms=1_000,
    )


@pytest.fixture
def seeder(seeder_config: SeederConfig) -> Iterator[Seeder]:
    with running_seeder(seeder_config) as running:
        yield running


def wait_for(predicate: Callable[[], bool], timeout: float = 5.0) -> bool:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(0.005)
    return predicate()


class BlockingPeer:
    """Protocol client on a plain blocking socket, for driving a seeder from a test."""

    def __init__(self, address: tuple[str, int], timeout: float = 5.0) -> None:
        self.sock = socket.create_connection(address, timeout=timeout)
        self.buffer = MessageBuffer()

    def __enter__(self) -> BlockingPeer:
        return self

    def __exit__(self, *_: object) -> None:
        self.close()

    def close(self) -> None:
        self.sock.close()

    def handshake(self, info_hash: bytes, peer_id: bytes = b"-TEST00-000000000000") -> bytes:
        self.sock.sendall(wire.encode_handshake(info_hash, peer_id))
        received = b""
        while len(received) < wire.HANDSHAKE_LENGTH:
            chunk = self.sock.recv(wire.HANDSHAKE_LENGTH - len(received))
            if not chunk:
                msg = "Seeder closed the connection during the handshake"
                raise ConnectionError(msg)
            received += chunk
        return wire.decode_handshake(received, info_hash)

    def send(self, message_type: MessageType, payload: bytes = b"") -> None:
        self.sock.sendall(wire.encode_message(message_type, payload))

    def request(self, index: int, begin: int, length: int) -> None:
        self.sock.sendall(wire.encode_request(ChunkRequest(index, begin, length)))

    def receive(self) -> Message:
        """Next message; raises `EOFError` once the seeder hangs up."""
        while not len(self.buffer):
            chunk = self.sock.recv(65536)
            if not chunk:
                raise EOFError
            self.buffer.feed(chunk)
        return next(iter(self.buffer))

    def receive_until(self, message_type: MessageType) -> Message:
        while True:
            message = self.receive()
            if message.type is message_type:
                return message

    def wait_for_eof(self) -> float:
        """Seconds until the seeder closes the connection."""
        start = time.monotonic()
        try:
            while True:
                self.receive()
        except (EOFError, ConnectionResetError):
            return time.monotonic() - start
