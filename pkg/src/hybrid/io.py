"""Readiness-based socket I/O for attached tasks.

`io_wait` parks the calling task until a descriptor becomes readable or writable.
On top of it, `read_lazy` allocates its receive buffer only once data is known to be
there, and `write_all` switches strategy with the mode of the caller: attached tasks
interleave non-blocking writes with `io_wait`, detached tasks simply block their
pool worker.

All sockets handed to this module are expected to be in non-blocking mode.
"""

from __future__ import annotations

import enum
import errno
import logging
import os
import selectors
import socket
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Callable, Union

from hybrid.scheduler import (
    HybridError,
    _Op,
    _require_attached,
    _require_task,
    _Trap,
    detached,
)
from hybrid.sync import TIMED_OUT, TimedOut, with_timeout

if TYPE_CHECKING:
    from hybrid.sync import AbortToken

__all__ = [
    "EOF",
    "ConnectionClosed",
    "Data",
    "DuplicateWaiter",
    "Eof",
    "InvalidDescriptor",
    "IoDirection",
    "IoOutcome",
    "PartialWriteError",
    "close",
    "connect",
    "hangup",
    "io_wait",
    "read_lazy",
    "resolve_detached",
    "set_allocation_hook",
    "write_all",
]

_LOGGER = logging.getLogger(__name__)

FileDescriptor = Union[int, "socket.socket"]
AllocationHook = Callable[[int], None]


class InvalidDescriptor(HybridError):
    """The descriptor cannot be watched for readiness."""


class DuplicateWaiter(HybridError):
    """Another task already waits on the same descriptor and direction."""


class PartialWriteError(OSError):
    """A write failed after `written` bytes had already been sent."""

    def __init__(self, code: int | None, message: str, written: int) -> None:
        super().__init__(code, message)
        self.written = written


class ConnectionClosed(PartialWriteError):
    """The descriptor was hung up while `write_all` waited for it."""


class IoDirection(enum.Enum):
    IN = selectors.EVENT_READ
    OUT = selectors.EVENT_WRITE


class IoOutcome(str, enum.Enum):
    READY = "ready"
    ABORTED = "aborted"
    CLOSED = "closed"


@dataclass(frozen=True)
class Data:
    payload: bytes

    def __len__(self) -> int:
        return len(self.payload)


class Eof:
    """The peer closed its side of the connection."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "EOF"


EOF = Eof()

_allocation_hook: AllocationHook | None = None


def set_allocation_hook(hook: AllocationHook | None) -> AllocationHook | None:
    """Install a callable that `read_lazy` calls with the size of every buffer it allocates.

    Returns the previously installed hook, so that it can be restored.
    """
    global _allocation_hook  # noqa: PLW0603
    previous, _allocation_hook = _allocation_hook, hook
    return previous


def _allocate(size: int) -> bytearray:
    buffer = bytearray(size)
    if _allocation_hook is not None:
        _allocation_hook(size)
    return buffer


def _fileno(fd: FileDescriptor) -> int:
    if isinstance(fd, int):
        return fd
    return fd.fileno()


async def io_wait(
    fd: FileDescriptor, direction: IoDirection, token: AbortToken | None = None
) -> IoOutcome:
    """Suspend until `fd` is ready in `direction`, `token` fires, or `fd` is hung up.

    Only one task may wait on a given descriptor and direction at a time.
    """
    task = _require_attached("io_wait")
    number = _fileno(fd)
    if token is not None and token.fired:
        return IoOutcome.ABORTED
    runtime = task.runtime
    event = direction.value
    if runtime._has_waiter(number, event):
        msg = f"A task already waits for {direction.name} on descriptor {number}"
        raise DuplicateWaiter(msg)
    try:
        runtime._add_waiter(number, event, task, token)
    except (ValueError, KeyError, OSError) as exc:
        msg = f"Cannot wait on descriptor {number}: {exc}"
        raise InvalidDescriptor(msg) from exc
    outcome = await _Trap(_Op.PARK, None, "io")
    return IoOutcome(outcome)


async def read_lazy(
    sock: socket.socket, max_len: int, timeout_ms: float | None
) -> Data | TimedOut | Eof:
    """Wait for data, then read at most `max_len` bytes in one non-blocking call.

    The receive buffer is allocated only after the socket reported readiness, so a
    call that times out allocates nothing. A `timeout_ms` of `None` waits forever.
    """
    _require_attached("read_lazy")
    if max_len < 1:
        msg = f"max_len must be positive, got {max_len}"
        raise ValueError(msg)
    fd = sock.fileno()
    deadline = None if timeout_ms is None else time.monotonic() + timeout_ms / 1000
    while True:
        if deadline is None:
            outcome = await io_wait(fd, IoDirection.IN)
        else:
            remaining_ms = (deadline - time.monotonic()) * 1000
            result = await with_timeout(
                remaining_ms, lambda token: io_wait(fd, IoDirection.IN, token)
            )
            if result is TIMED_OUT:
                return TIMED_OUT
            outcome = result.value  # type: ignore[union-attr]
        if outcome is IoOutcome.CLOSED:
            return EOF
        if outcome is IoOutcome.ABORTED:
            return TIMED_OUT
        buffer = _allocate(max_len)
        try:
            size = sock.recv_into(buffer, max_len)
        except (BlockingIOError, InterruptedError):
            _LOGGER.debug(f"Spurious readiness on descriptor {fd}")
            continue
        if size == 0:
            return EOF
        return Data(bytes(memoryview(buffer)[:size]))


async def write_all(sock: socket.socket, data: bytes | bytearray | memoryview) -> int:
    """Send all of `data` and return the number of bytes written.

    Attached, the task alternates non-blocking sends with `io_wait` and the loop keeps
    serving other tasks. Detached, the pool worker blocks until the socket accepts
    the data and the event loop is not involved at all.
    """
    view = memoryview(data).cast("B")
    if not view.nbytes:
        return 0
    task = _require_task("write_all")
    if task.detached:
        return _write_blocking(sock, view)
    fd = sock.fileno()
    total = view.nbytes
    written = 0
    while written < total:
        try:
            written += sock.send(view[written:])
            continue
        except (BlockingIOError, InterruptedError):
            pass
        except OSError as exc:
            raise _partial(exc, written) from exc
        if await io_wait(fd, IoDirection.OUT) is IoOutcome.CLOSED:
            msg = f"Descriptor {fd} was hung up after {written} of {total} bytes"
            raise ConnectionClosed(errno.EPIPE, msg, written)
    return total


def _write_blocking(sock: socket.socket, view: memoryview) -> int:
    total = view.nbytes
    written = 0
    with selectors.DefaultSelector() as selector:
        selector.register(sock, selectors.EVENT_WRITE)
        while written < total:
            try:
                written += sock.send(view[written:])
            except (BlockingIOError, InterruptedError):
                selector.select()
            except OSError as exc:
                raise _partial(exc, written) from exc
    return total


def _partial(exc: OSError, written: int) -> PartialWriteError:
    msg = f"{exc.strerror or exc} after {written} bytes"
    return PartialWriteError(exc.errno, msg, written)


async def resolve_detached(
    name: str, port: int | str | None = None, family: int = 0
) -> list[Any]:
    """Resolve `name` with the system resolver, on a pool worker.

    Returns the distinct socket addresses, in resolver order. Resolver errors are
    raised once the caller is attached again.
    """
    _require_attached("resolve_detached")
    infos = await detached(
        lambda: socket.getaddrinfo(name, port, family, socket.SOCK_STREAM)
    )
    addresses: list[Any] = []
    for *_, address in infos:
        if address not in addresses:
            addresses.append(address)
    return addresses


def hangup(fd: FileDescriptor) -> int:
    """Wake every task waiting on `fd` with `IoOutcome.CLOSED`.

    Returns the number of woken waiters.
    """
    task = _require_attached("hangup")
    number = _fileno(fd)
    if number < 0:
        return 0
    return task.runtime._hangup(number)


def close(sock: socket.socket) -> None:
    """Hang up all waiters of `sock`, then close it."""
    hangup(sock)
    sock.close()


async def connect(sock: socket.socket, address: Any) -> None:
    """Connect a non-blocking socket, waiting for the handshake as an attached task."""
    _require_attached("connect")
    code = sock.connect_ex(address)
    if code in {errno.EINPROGRESS, errno.EWOULDBLOCK, errno.EAGAIN}:
        if await io_wait(sock, IoDirection.OUT) is IoOutcome.CLOSED:
            msg = f"Connecting to {address} was aborted"
            raise ConnectionAbortedError(errno.ECONNABORTED, msg)
        code = sock.getsockopt(socket.SOL_SOCKET, socket.SO_ERROR)
    if code:
        raise OSError(code, f"Cannot connect to {address}: {os.strerror(code)}")
