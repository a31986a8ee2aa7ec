"""Serving memory-mapped file regions without blocking the event loop.

Touching a page of a mapping that is not in the page cache blocks the touching thread
until the disk delivers it, and on the loop thread that stalls every attached task.
`send_file_chunk` avoids this the hybrid way:

1. ask the kernel to read the region ahead (`prefetch`),
2. yield, giving the read-ahead time to progress,
3. probe whether the region is resident (`incore`),
4. if not, yield once more,
5. and probe again;
6. if it is still not resident, write from a pool worker, where a page fault only
   blocks that worker;
7. otherwise write attached, as any other socket write.

The probes are racy by nature: a page found resident may be evicted before it is
sent, which only costs one blocking page fault.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import enum
import logging
import mmap
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING, Callable

from hybrid.io import write_all
from hybrid.scheduler import _require_attached, detached, yield_now

if TYPE_CHECKING:
    import socket
    from types import TracebackType

__all__ = [
    "DETACHED_WRITE_STEP",
    "FileRegion",
    "InvalidRegion",
    "MappedFile",
    "Residency",
    "ResidencyOracle",
    "incore",
    "mincore_oracle",
    "prefetch",
    "send_file_chunk",
]

_LOGGER = logging.getLogger(__name__)

PAGESIZE = mmap.PAGESIZE
PROT_NONE = 0x0
DETACHED_WRITE_STEP = 6


class InvalidRegion(ValueError):
    """A file region that is empty or reaches past the end of its file."""


class Residency(enum.Enum):
    RESIDENT = "resident"
    NOT_RESIDENT = "not-resident"


class MappedFile:
    """Read-only memory mapping of a whole, non-empty file."""

    def __init__(self, path: Path | str) -> None:
        self.path = Path(path)
        self._file = self.path.open("rb")
        try:
            self.size = os.fstat(self._file.fileno()).st_size
            if self.size == 0:
                msg = f"Cannot map {self.path}: the file is empty"
                raise ValueError(msg)
            self.mapping = mmap.mmap(self._file.fileno(), 0, access=mmap.ACCESS_READ)
        except BaseException:
            self._file.close()
            raise

    def __enter__(self) -> MappedFile:
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()

    def __repr__(self) -> str:
        return f"{type(self).__name__}({str(self.path)!r})"

    def fileno(self) -> int:
        return self._file.fileno()

    def region(self, offset: int, length: int) -> FileRegion:
        return FileRegion(self, offset, length)

    def read(self, offset: int, length: int) -> bytes:
        """Copy bytes out of the mapping; this touches the pages."""
        return self.mapping[offset : offset + length]

    @property
    def closed(self) -> bool:
        return self._file.closed

    def close(self) -> None:
        if self._file.closed:
            return
        try:
            self.mapping.close()
        except BufferError:
            _LOGGER.debug(f"{self!r} still has views, the mapping outlives close()")
        self._file.close()


@dataclass(frozen=True)
class FileRegion:
    """A non-empty byte range of a `MappedFile`."""

    store: MappedFile
    offset: int
    length: int

    def __post_init__(self) -> None:
        if self.length <= 0:
            msg = f"Region length must be positive, got {self.length}"
            raise InvalidRegion(msg)
        if self.offset < 0 or self.end > self.store.size:
            msg = (
                f"Region [{self.offset}, {self.end}) does not fit in"
                f" {self.store.size} bytes of {self.store.path}"
            )
            raise InvalidRegion(msg)

    @property
    def end(self) -> int:
        return self.offset + self.length

    def page_span(self) -> tuple[int, int]:
        """Start and end of the region, rounded outward to page boundaries."""
        start = self.offset - self.offset % PAGESIZE
        end = -(-self.end // PAGESIZE) * PAGESIZE
        return start, end

    def view(self) -> memoryview:
        """Zero-copy view of the region; no page is touched until the view is read."""
        return memoryview(self.store.mapping)[self.offset : self.end]


ResidencyOracle = Callable[[FileRegion], Residency]


def prefetch(region: FileRegion) -> None:
    """Request asynchronous read-ahead of `region`; never blocks, never raises."""
    start, end = region.page_span()
    try:
        region.store.mapping.madvise(mmap.MADV_WILLNEED, start, end - start)
    except (AttributeError, OSError, ValueError) as exc:
        _LOGGER.debug(f"Read-ahead advice for {region} failed: {exc}")


@lru_cache(maxsize=1)
def _libc() -> ctypes.CDLL:
    name = ctypes.util.find_library("c")
    if name is None:
        msg = "The C library cannot be found"
        raise OSError(msg)
    libc = ctypes.CDLL(name, use_errno=True)
    libc.mmap.restype = ctypes.c_void_p
    libc.mmap.argtypes = [
        ctypes.c_void_p,
        ctypes.c_size_t,
        ctypes.c_int,
        ctypes.c_int,
        ctypes.c_int,
        ctypes.c_long,
    ]
    libc.munmap.argtypes = [ctypes.c_void_p, ctypes.c_size_t]
    libc.mincore.argtypes = [
        ctypes.c_void_p,
        ctypes.c_size_t,
        ctypes.POINTER(ctypes.c_ubyte),
    ]
    return libc


_MAP_FAILED = ctypes.c_void_p(-1).value


def mincore_oracle(region: FileRegion) -> Residency:
    """Ask the kernel whether every page of `region` is in the page cache.

    The probe maps the pages again without any access rights, so that the probe
    itself cannot fault them in.
    """
    libc = _libc()
    start, end = region.page_span()
    length = end - start
    address = libc.mmap(
        None, length, PROT_NONE, mmap.MAP_SHARED, region.store.fileno(), start
    )
    if address in {None, _MAP_FAILED}:
        code = ctypes.get_errno()
        raise OSError(code, f"Probe mapping failed: {os.strerror(code)}")
    try:
        pages = length // PAGESIZE
        vector = (ctypes.c_ubyte * pages)()
        if libc.mincore(address, length, vector) != 0:
            code = ctypes.get_errno()
            raise OSError(code, f"mincore failed: {os.strerror(code)}")
        if all(flag & 1 for flag in vector):
            return Residency.RESIDENT
        return Residency.NOT_RESIDENT
    finally:
        libc.munmap(address, length)


def incore(region: FileRegion, oracle: ResidencyOracle = mincore_oracle) -> Residency:
    """Probe `region` with `oracle`; a failing probe counts as not resident."""
    try:
        return oracle(region)
    except Exception as exc:  # noqa: BLE001
        _LOGGER.debug(f"Residency probe of {region} failed: {exc}")
        return Residency.NOT_RESIDENT


async def send_file_chunk(
    sock: socket.socket,
    region: FileRegion,
    oracle: ResidencyOracle = mincore_oracle,
    steps: list[int] | None = None,
) -> int:
    """Write `region` to `sock` without letting a page fault stall the event loop.

    Returns the number of bytes written. If `steps` is given, the numbers of the
    steps taken (see the module documentation) are appended to it.
    """
    _require_attached("send_file_chunk")
    trace = steps if steps is not None else []
    with region.view() as data:
        prefetch(region)
        trace.append(1)
        await yield_now()
        trace.append(2)
        trace.append(3)
        if incore(region, oracle) is Residency.NOT_RESIDENT:
            await yield_now()
            trace.append(4)
            trace.append(5)
            if incore(region, oracle) is Residency.NOT_RESIDENT:
                trace.append(DETACHED_WRITE_STEP)
                _LOGGER.debug(f"{region} is not resident, writing it detached")
                return await detached(lambda: write_all(sock, data))
        trace.append(7)
        return await write_all(sock, data)
