"""WebSocket handshake and framing against RFC 6455 test vectors."""

import pytest

from twinnav import wsbridge
from twinnav.errors import ContractViolation


def client_frame(payload: bytes, opcode: int = wsbridge.OP_TEXT,
                 mask: bytes = b"\x01\x02\x03\x04") -> bytes:
    """Masked client-to-server frame, as a browser would send it."""
    head = bytearray([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head.append(0x80 | n)
    elif n < 1 << 16:
        head.append(0x80 | 126)
        head += n.to_bytes(2, "big")
    else:
        head.append(0x80 | 127)
        head += n.to_bytes(8, "big")
    body = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return bytes(head) + mask + body


def test_accept_key_reference_vector():
    # the worked example from the protocol specification
    assert (wsbridge.accept_key("dGhlIHNhbXBsZSBub25jZQ==")
            == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=")


def test_handshake_response_upgrades():
    request = (b"GET /feed HTTP/1.1\r\n"
               b"Host: localhost\r\n"
               b"Upgrade: websocket\r\n"
               b"Connection: Upgrade\r\n"
               b"Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\n"
               b"Sec-WebSocket-Version: 13\r\n\r\n")
    response = wsbridge.handshake_response(request)
    assert response.startswith(b"HTTP/1.1 101 ")
    assert b"Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo=\r\n" in response
    assert response.endswith(b"\r\n\r\n")


def test_handshake_requires_upgrade_and_key():
    with pytest.raises(ContractViolation):
        wsbridge.handshake_response(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n")
    with pytest.raises(ContractViolation):
        wsbridge.handshake_response(
            b"GET / HTTP/1.1\r\nUpgrade: websocket\r\n\r\n")
    with pytest.raises(ContractViolation):
        wsbridge.handshake_response(b"POST / HTTP/1.1\r\n\r\n")


def test_server_frames_are_unmasked_with_correct_lengths():
    short = wsbridge.encode_text("hi")
    assert short[0] == 0x81  # FIN + text
    assert short[1] == 2  # no mask bit, 2-byte payload
    assert short[2:] == b"hi"

    medium = wsbridge.encode_text("x" * 300)
    assert medium[1] == 126
    assert int.from_bytes(medium[2:4], "big") == 300

    large = wsbridge.encode_frame(b"y" * 70_000)
    assert large[1] == 127
    assert int.from_bytes(large[2:10], "big") == 70_000


def test_client_frame_round_trip():
    buffer = bytearray(client_frame(b'{"hello":1}'))
    frames = wsbridge.decode_frames(buffer)
    assert frames == [(wsbridge.OP_TEXT, b'{"hello":1}')]
    assert not buffer


def test_extended_length_client_frames():
    text = b"a" * 300
    big = b"b" * 70_000
    buffer = bytearray(client_frame(text) + client_frame(big))
    frames = wsbridge.decode_frames(buffer)
    assert [(op, len(p)) for op, p in frames] == [(1, 300), (1, 70_000)]
    assert frames[0][1] == text and frames[1][1] == big


def test_partial_frames_stay_buffered():
    frame = client_frame(b"payload")
    buffer = bytearray(frame[:5])
    assert wsbridge.decode_frames(buffer) == []
    assert len(buffer) == 5  # nothing consumed
    buffer += frame[5:]
    assert wsbridge.decode_frames(buffer) == [(wsbridge.OP_TEXT, b"payload")]


def test_unmasked_client_frames_are_rejected():
    unmasked = bytes([0x81, 2]) + b"no"
    with pytest.raises(ContractViolation, match="masked"):
        wsbridge.decode_frames(bytearray(unmasked))


def test_fragmented_frames_are_rejected():
    no_fin = bytearray(client_frame(b"part"))
    no_fin[0] &= 0x7F  # clear FIN
    with pytest.raises(ContractViolation, match="fragmented"):
        wsbridge.decode_frames(no_fin)


def test_control_frames_pass_through():
    buffer = bytearray(client_frame(b"", opcode=wsbridge.OP_PING)
                       + client_frame(b"", opcode=wsbridge.OP_CLOSE))
    ops = [op for op, _ in wsbridge.decode_frames(buffer)]
    assert ops == [wsbridge.OP_PING, wsbridge.OP_CLOSE]


def test_pong_and_close_encode():
    pong = wsbridge.encode_frame(b"", wsbridge.OP_PONG)
    assert pong[0] == (0x80 | wsbridge.OP_PONG)
    with pytest.raises(ContractViolation):
        wsbridge.encode_frame(b"", 0x3)
