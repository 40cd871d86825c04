"""Minimal server-side WebSocket (RFC 6455) handshake and text framing.

Just enough for a browser to exchange newline-delimited protocol messages
with a local session: HTTP upgrade handshake, unfragmented text frames,
ping/pong, and close. No extensions, no compression, no TLS.
"""

from __future__ import annotations

import base64
import hashlib

from .errors import ContractViolation

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def parse_handshake(request: bytes) -> dict:
    """Header map from an HTTP upgrade request; names lowercased."""
    try:
        head = request.split(b"\r\n\r\n", 1)[0].decode("latin-1")
    except UnicodeDecodeError:
        raise ContractViolation("malformed handshake request")
    lines = head.split("\r\n")
    if not lines or not lines[0].startswith("GET "):
        raise ContractViolation("websocket handshake must be an HTTP GET")
    headers = {}
    for line in lines[1:]:
        if ":" not in line:
            continue
        name, value = line.split(":", 1)
        headers[name.strip().lower()] = value.strip()
    return headers


def handshake_response(request: bytes) -> bytes:
    headers = parse_handshake(request)
    if headers.get("upgrade", "").lower() != "websocket":
        raise ContractViolation("missing Upgrade: websocket header")
    key = headers.get("sec-websocket-key")
    if not key:
        raise ContractViolation("missing Sec-WebSocket-Key header")
    return (b"HTTP/1.1 101 Switching Protocols\r\n"
            b"Upgrade: websocket\r\n"
            b"Connection: Upgrade\r\n"
            b"Sec-WebSocket-Accept: " + accept_key(key).encode("ascii")
            + b"\r\n\r\n")


def encode_frame(payload: bytes, opcode: int = OP_TEXT) -> bytes:
    """Server-to-client frame: FIN set, never masked."""
    if opcode not in (OP_TEXT, OP_BINARY, OP_CLOSE, OP_PING, OP_PONG):
        raise ContractViolation(f"unsupported opcode {opcode}")
    head = bytearray([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head.append(n)
    elif n < 1 << 16:
        head.append(126)
        head += n.to_bytes(2, "big")
    else:
        head.append(127)
        head += n.to_bytes(8, "big")
    return bytes(head) + payload


def encode_text(text: str) -> bytes:
    return encode_frame(text.encode("utf-8"), OP_TEXT)


def decode_frames(buffer: bytearray) -> list:
    """Consume complete client frames from the front of the buffer.

    Returns (opcode, payload-bytes) pairs; incomplete trailing bytes stay in
    the buffer. Client frames must be masked and unfragmented per RFC 6455.
    """
    frames = []
    while True:
        if len(buffer) < 2:
            return frames
        b0, b1 = buffer[0], buffer[1]
        fin = b0 & 0x80
        opcode = b0 & 0x0F
        masked = b1 & 0x80
        length = b1 & 0x7F
        offset = 2
        if length == 126:
            if len(buffer) < offset + 2:
                return frames
            length = int.from_bytes(buffer[offset:offset + 2], "big")
            offset += 2
        elif length == 127:
            if len(buffer) < offset + 8:
                return frames
            length = int.from_bytes(buffer[offset:offset + 8], "big")
            offset += 8
        if not fin or opcode == OP_CONT:
            raise ContractViolation("fragmented websocket frames are not supported")
        if not masked:
            raise ContractViolation("client frames must be masked")
        if len(buffer) < offset + 4 + length:
            return frames
        mask = buffer[offset:offset + 4]
        offset += 4
        payload = bytearray(buffer[offset:offset + length])
        for i in range(length):
            payload[i] ^= mask[i % 4]
        del buffer[:offset + length]
        frames.append((opcode, bytes(payload)))
