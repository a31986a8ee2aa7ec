"""The single file a seeder serves."""

from __future__ import annotations

import hashlib
import logging
from typing import TYPE_CHECKING

from hybrid.disk import FileRegion, MappedFile
from seeder.wire import ProtocolError

if TYPE_CHECKING:
    from pathlib import Path

    from seeder.wire import ChunkRequest

__all__ = [
    "DEFAULT_PIECE_LENGTH",
    "ContentStore",
    "InvalidRequest",
]

_LOGGER = logging.getLogger(__name__)

DEFAULT_PIECE_LENGTH = 256 * 1024


class InvalidRequest(ProtocolError):
    """A request for bytes that lie outside of the served file or piece."""


def content_digest(store: MappedFile) -> bytes:
    return hashlib.sha1(store.mapping).digest()  # noqa: S324


class ContentStore(MappedFile):
    """Read-only mapping of the served file, cut into pieces of `piece_length` bytes.

    The info hash is the SHA-1 digest of the file content, so two stores of
    identical files always agree on it.
    """

    def __init__(
        self, path: Path | str, piece_length: int = DEFAULT_PIECE_LENGTH
    ) -> None:
        if piece_length <= 0 or piece_length & (piece_length - 1):
            msg = f"Piece length must be a power of two, got {piece_length}"
            raise ValueError(msg)
        super().__init__(path)
        self.piece_length = piece_length
        self.info_hash = content_digest(self)
        _LOGGER.info(
            f"Serving {self.path} ({self.size} bytes, {self.piece_count} pieces),"
            f" info hash {self.info_hash.hex()}"
        )

    @property
    def piece_count(self) -> int:
        return -(-self.size // self.piece_length)

    def piece_size(self, index: int) -> int:
        if not 0 <= index < self.piece_count:
            msg = f"Piece {index} does not exist, there are {self.piece_count}"
            raise InvalidRequest(msg)
        return min(self.piece_length, self.size - index * self.piece_length)

    def request_region(self, request: ChunkRequest) -> FileRegion:
        """Translate a chunk request into the file region it asks for."""
        piece_size = self.piece_size(request.index)
        if request.length <= 0 or request.begin < 0:
            msg = f"Invalid request {request}"
            raise InvalidRequest(msg)
        if request.begin + request.length > piece_size:
            msg = f"{request} reaches past the end of a {piece_size}-byte piece"
            raise InvalidRequest(msg)
        offset = request.index * self.piece_length + request.begin
        return FileRegion(self, offset, request.length)
