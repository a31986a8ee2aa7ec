import pytest

from seeder.wire import (
    HANDSHAKE_LENGTH,
    MAX_REQUEST_LENGTH,
    PROTOCOL,
    BadProtocolString,
    ChunkRequest,
    InfoHashMismatch,
    MalformedMessage,
    Message,
    MessageBuffer,
    MessageType,
    decode_handshake,
    decode_piece,
    decode_request,
    encode_handshake,
    encode_keep_alive,
    encode_message,
    encode_piece_header,
    encode_request,
)

INFO_HASH = bytes(range(20))
PEER_ID = b"-SIM000-000000000001"


def test_handshake_layout():
    data = encode_handshake(INFO_HASH, PEER_ID)
    assert len(data) == HANDSHAKE_LENGTH == 54
    assert data[0] == 13
    assert data[1:14] == PROTOCOL == b"HEKATE-MINI/1"
    assert data[14:34] == INFO_HASH
    assert data[34:] == PEER_ID
    assert decode_handshake(data, INFO_HASH) == PEER_ID


@pytest.mark.parametrize(
    ("info_hash", "peer_id"),
    [(INFO_HASH[:19], PEER_ID), (INFO_HASH, PEER_ID + b"x")],
)
def test_handshake_needs_20_byte_fields(info_hash, peer_id):
    with pytest.raises(ValueError, match=r"20 bytes long"):
        encode_handshake(info_hash, peer_id)


def test_handshake_errors():
    data = encode_handshake(INFO_HASH, PEER_ID)
    with pytest.raises(InfoHashMismatch, match=INFO_HASH.hex()):
        decode_handshake(data, bytes(20))
    other = bytes([13]) + b"BITTORRENT/01" + data[14:]
    with pytest.raises(BadProtocolString):
        decode_handshake(other, INFO_HASH)
    with pytest.raises(BadProtocolString):
        decode_handshake(bytes([12]) + data[1:], INFO_HASH)
    with pytest.raises(MalformedMessage, match=r"54 bytes long, got 53"):
        decode_handshake(data[:-1], INFO_HASH)


@pytest.mark.parametrize(
    ("message_type", "payload", "expected"),
    [
        (MessageType.CHOKE, b"", "0000000100"),
        (MessageType.UNCHOKE, b"", "0000000101"),
        (MessageType.NOT_INTERESTED, b"", "0000000103"),
        (MessageType.PIECE, b"\0" * 8 + b"ab", "0000000b07" + "00" * 8 + "6162"),
    ],
)
def test_encode_message(message_type, payload, expected):
    assert encode_message(message_type, payload).hex() == expected


def test_keep_alive():
    assert encode_keep_alive() == b"\0\0\0\0"


def test_request():
    request = ChunkRequest(index=3, begin=16384, length=MAX_REQUEST_LENGTH)
    encoded = encode_request(request)
    assert encoded[4] == MessageType.REQUEST
    assert decode_request(encoded[5:]) == request


@pytest.mark.parametrize(
    ("payload", "match"),
    [
        (b"\0" * 11, r"12 bytes long, got 11"),
        (encode_request(ChunkRequest(0, 0, 0))[5:], r"not in \(0, 16384\]"),
        (encode_request(ChunkRequest(0, 0, 16385))[5:], r"Request length 16385"),
    ],
)
def test_bad_request(payload, match):
    with pytest.raises(MalformedMessage, match=match):
        decode_request(payload)


def test_piece():
    data = b"chunk of data"
    header = encode_piece_header(2, 512, len(data))
    buffer = MessageBuffer()
    buffer.feed(header + data)
    (message,) = list(buffer)
    assert message.type is MessageType.PIECE
    assert decode_piece(message.payload) == (ChunkRequest(2, 512, len(data)), data)
    with pytest.raises(MalformedMessage):
        decode_piece(b"\0" * 8)


def test_buffer_reassembles_split_stream():
    stream = (
        encode_message(MessageType.INTERESTED)
        + encode_keep_alive()
        + encode_request(ChunkRequest(1, 0, 1024))
        + encode_message(MessageType.UNCHOKE)
    )
    buffer = MessageBuffer()
    messages = []
    for i in range(len(stream)):
        buffer.feed(stream[i : i + 1])
        messages.extend(buffer)
    assert buffer.buffered == 0
    assert messages == [
        Message(MessageType.INTERESTED),
        Message(None),
        Message(MessageType.REQUEST, encode_request(ChunkRequest(1, 0, 1024))[5:]),
        Message(MessageType.UNCHOKE),
    ]


def test_buffer_keeps_incomplete_message():
    encoded = encode_request(ChunkRequest(0, 0, 1))
    buffer = MessageBuffer()
    buffer.feed(encoded[:7])
    assert len(buffer) == 0
    assert buffer.buffered == 7
    buffer.feed(encoded[7:])
    assert len(buffer) == 1


@pytest.mark.parametrize(
    ("data", "match"),
    [
        (bytes.fromhex("0000000109"), r"Unknown message type 9"),
        (bytes.fromhex("00ffffff"), r"exceeds 16393"),
    ],
)
def test_buffer_rejects_malformed(data, match):
    with pytest.raises(MalformedMessage, match=match):
        MessageBuffer().feed(data)
