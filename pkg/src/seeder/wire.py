"""Handshake and message codec of the seeder's peer protocol.

A connection starts with a fixed 54-byte handshake in each direction:

======  =====  =============================================
offset  size   content
======  =====  =============================================
0       1      length of the protocol string, always 13
1       13     the protocol string :code:`HEKATE-MINI/1`
14      20     info hash of the served content
34      20     peer ID of the sender
======  =====  =============================================

After that, every message is a 4-byte big-endian length (covering the type byte and
the payload), a type byte and the payload. A length of zero is a keep-alive.

>>> encode_request(ChunkRequest(index=1, begin=0, length=16384)).hex()
'0000000d06000000010000000000004000'
>>> buffer = MessageBuffer()
>>> buffer.feed(bytes.fromhex("000000010200000000"))
>>> [message.type for message in buffer]
[<MessageType.INTERESTED: 2>, None]
"""

from __future__ import annotations

import enum
import struct
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from collections.abc import Iterator

__all__ = [
    "HANDSHAKE_LENGTH",
    "MAX_REQUEST_LENGTH",
    "PROTOCOL",
    "BadProtocolString",
    "ChunkRequest",
    "HandshakeTimeout",
    "InfoHashMismatch",
    "MalformedMessage",
    "Message",
    "MessageBuffer",
    "MessageType",
    "PeerClosed",
    "ProtocolError",
    "decode_handshake",
    "decode_piece",
    "decode_request",
    "encode_handshake",
    "encode_keep_alive",
    "encode_message",
    "encode_piece_header",
    "encode_request",
]

PROTOCOL = b"HEKATE-MINI/1"
HANDSHAKE_LENGTH = 1 + len(PROTOCOL) + 20 + 20
MAX_REQUEST_LENGTH = 16 * 1024

_LENGTH = struct.Struct(">I")
_HEADER = struct.Struct(">IB")
_REQUEST = struct.Struct(">III")
_PIECE = struct.Struct(">II")


class ProtocolError(Exception):
    """The remote peer does not follow the protocol."""


class BadProtocolString(ProtocolError):
    """The handshake names another protocol."""


class InfoHashMismatch(ProtocolError):
    """The handshake asks for content that is not served here."""


class MalformedMessage(ProtocolError):
    """A message has an unknown type, a wrong size, or an invalid field."""


class HandshakeTimeout(ProtocolError):
    """The handshake did not arrive in time."""


class PeerClosed(ProtocolError):
    """The peer closed the connection during the handshake."""


class MessageType(enum.IntEnum):
    CHOKE = 0
    UNCHOKE = 1
    INTERESTED = 2
    NOT_INTERESTED = 3
    REQUEST = 6
    PIECE = 7


@dataclass(frozen=True)
class ChunkRequest:
    index: int
    begin: int
    length: int


@dataclass(frozen=True)
class Message:
    """One decoded message; `type` is `None` for a keep-alive."""

    type: MessageType | None
    payload: bytes = b""


def encode_handshake(info_hash: bytes, peer_id: bytes) -> bytes:
    if len(info_hash) != 20 or len(peer_id) != 20:  # noqa: PLR2004
        msg = "Info hash and peer ID must both be 20 bytes long"
        raise ValueError(msg)
    return bytes([len(PROTOCOL)]) + PROTOCOL + info_hash + peer_id


def decode_handshake(data: bytes, info_hash: bytes) -> bytes:
    """Check a received handshake against the served `info_hash` and return the peer ID."""
    if len(data) != HANDSHAKE_LENGTH:
        msg = f"A handshake is {HANDSHAKE_LENGTH} bytes long, got {len(data)}"
        raise MalformedMessage(msg)
    protocol_end = 1 + len(PROTOCOL)
    if data[0] != len(PROTOCOL) or data[1:protocol_end] != PROTOCOL:
        msg = f"Unknown protocol {data[1:protocol_end]!r}"
        raise BadProtocolString(msg)
    received_hash = data[protocol_end : protocol_end + 20]
    if received_hash != info_hash:
        msg = f"Peer asks for {received_hash.hex()}, serving {info_hash.hex()}"
        raise InfoHashMismatch(msg)
    return data[protocol_end + 20 :]


def encode_message(message_type: MessageType, payload: bytes = b"") -> bytes:
    return _HEADER.pack(len(payload) + 1, message_type) + payload


def encode_keep_alive() -> bytes:
    return _LENGTH.pack(0)


def encode_request(request: ChunkRequest) -> bytes:
    payload = _REQUEST.pack(request.index, request.begin, request.length)
    return encode_message(MessageType.REQUEST, payload)


def decode_request(payload: bytes) -> ChunkRequest:
    if len(payload) != _REQUEST.size:
        msg = f"A request payload is {_REQUEST.size} bytes long, got {len(payload)}"
        raise MalformedMessage(msg)
    request = ChunkRequest(*_REQUEST.unpack(payload))
    if not 0 < request.length <= MAX_REQUEST_LENGTH:
        msg = f"Request length {request.length} is not in (0, {MAX_REQUEST_LENGTH}]"
        raise MalformedMessage(msg)
    return request


def encode_piece_header(index: int, begin: int, length: int) -> bytes:
    """Header of a piece message, to be followed by `length` bytes of data."""
    return _HEADER.pack(_PIECE.size + 1 + length, MessageType.PIECE) + _PIECE.pack(
        index, begin
    )


def decode_piece(payload: bytes) -> tuple[ChunkRequest, bytes]:
    """Split a piece payload into the request it answers and its data."""
    if len(payload) <= _PIECE.size:
        msg = f"A piece payload must be longer than {_PIECE.size} bytes"
        raise MalformedMessage(msg)
    index, begin = _PIECE.unpack_from(payload)
    data = payload[_PIECE.size :]
    return ChunkRequest(index, begin, len(data)), data


class MessageBuffer:
    """Reassemble messages from a byte stream that arrives in arbitrary pieces.

    Args:
        max_length: Largest accepted value of a length prefix. Anything larger is
            reported as a `MalformedMessage`.
    """

    def __init__(self, max_length: int = _PIECE.size + 1 + MAX_REQUEST_LENGTH) -> None:
        self.max_length = max_length
        self._data = bytearray()
        self._messages: deque[Message] = deque()

    def __len__(self) -> int:
        return len(self._messages)

    def __iter__(self) -> Iterator[Message]:
        while self._messages:
            yield self._messages.popleft()

    @property
    def buffered(self) -> int:
        """Number of received bytes that do not form a complete message yet."""
        return len(self._data)

    def feed(self, data: bytes) -> None:
        self._data += data
        view = self._data
        offset = 0
        while len(view) - offset >= _LENGTH.size:
            (length,) = _LENGTH.unpack_from(view, offset)
            if length > self.max_length:
                msg = f"Message length {length} exceeds {self.max_length}"
                raise MalformedMessage(msg)
            end = offset + _LENGTH.size + length
            if len(view) < end:
                break
            if length == 0:
                self._messages.append(Message(None))
            else:
                code = view[offset + _LENGTH.size]
                try:
                    message_type = MessageType(code)
                except ValueError:
                    msg = f"Unknown message type {code}"
                    raise MalformedMessage(msg) from None
                payload = bytes(view[offset + _LENGTH.size + 1 : end])
                self._messages.append(Message(message_type, payload))
            offset = end
        del self._data[:offset]
