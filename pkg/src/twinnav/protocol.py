"""Newline-delimited message codec linking the physical proxy, the virtual
mirror, and the operator console.

One UTF-8 JSON object per line. Every message carries a protocol version
("ver"), a sender id ("src"), a variant tag ("type"), and a non-negative
tick. Field names are fixed; unknown fields are rejected so that typos fail
loudly instead of being silently dropped. Transcript files are just the wire
bytes, which makes captured sessions reusable as test fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .errors import ContractViolation, DecodeError, VersionError

PROTOCOL_VERSION = 1
PROXIMITY_FLAGS = ("near", "far")


def _check_tick(tick) -> int:
    if not isinstance(tick, int) or isinstance(tick, bool) or tick < 0:
        raise ContractViolation(f"tick must be a non-negative integer, got {tick!r}")
    return tick


def _check_str(value, name: str) -> str:
    if not isinstance(value, str) or not value:
        raise ContractViolation(f"{name} must be a non-empty string, got {value!r}")
    return value


@dataclass
class ObstacleEstimate:
    """Clustered lidar return: centroid in world coordinates plus extent."""

    centroid: tuple
    radius: float
    proximity_flag: str

    def __post_init__(self):
        self.centroid = (float(self.centroid[0]), float(self.centroid[1]))
        self.radius = float(self.radius)
        if self.radius <= 0.0:
            raise ContractViolation("obstacle estimate radius must be positive")
        if self.proximity_flag not in PROXIMITY_FLAGS:
            raise ContractViolation(f"proximity flag must be one of {PROXIMITY_FLAGS}")


@dataclass
class SensorFrame:
    src: str
    tick: int
    ranges: tuple
    pose: tuple

    def __post_init__(self):
        self.src = _check_str(self.src, "src")
        self.tick = _check_tick(self.tick)
        self.ranges = tuple(float(r) for r in self.ranges)
        self.pose = tuple(float(p) for p in self.pose)
        if len(self.pose) != 3:
            raise ContractViolation("pose must be (x, y, heading)")


@dataclass
class ObstacleReport:
    src: str
    tick: int
    obstacles: tuple

    def __post_init__(self):
        self.src = _check_str(self.src, "src")
        self.tick = _check_tick(self.tick)
        self.obstacles = tuple(
            ob if isinstance(ob, ObstacleEstimate) else ObstacleEstimate(**ob)
            for ob in self.obstacles
        )


@dataclass
class ActionCommand:
    src: str
    tick: int
    v: float
    w: float

    def __post_init__(self):
        self.src = _check_str(self.src, "src")
        self.tick = _check_tick(self.tick)
        self.v = float(self.v)
        self.w = float(self.w)


@dataclass
class HaltControl:
    src: str
    tick: int
    cause: str

    def __post_init__(self):
        self.src = _check_str(self.src, "src")
        self.tick = _check_tick(self.tick)
        self.cause = _check_str(self.cause, "cause")


@dataclass
class RetrainBegin:
    src: str
    tick: int
    snapshot_id: str

    def __post_init__(self):
        self.src = _check_str(self.src, "src")
        self.tick = _check_tick(self.tick)
        self.snapshot_id = _check_str(self.snapshot_id, "snapshot_id")


@dataclass
class RetrainEnd:
    src: str
    tick: int
    checkpoint_id: str

    def __post_init__(self):
        self.src = _check_str(self.src, "src")
        self.tick = _check_tick(self.tick)
        self.checkpoint_id = _check_str(self.checkpoint_id, "checkpoint_id")


@dataclass
class HumanCommand:
    src: str
    tick: int
    key: str
    v: float
    w: float

    def __post_init__(self):
        self.src = _check_str(self.src, "src")
        self.tick = _check_tick(self.tick)
        self.key = _check_str(self.key, "key")
        self.v = float(self.v)
        self.w = float(self.w)


@dataclass
class StateSync:
    src: str
    tick: int
    pose: tuple

    def __post_init__(self):
        self.src = _check_str(self.src, "src")
        self.tick = _check_tick(self.tick)
        self.pose = tuple(float(p) for p in self.pose)
        if len(self.pose) != 3:
            raise ContractViolation("pose must be (x, y, heading)")


_VARIANTS = {
    "sensor_frame": SensorFrame,
    "obstacle_report": ObstacleReport,
    "action_command": ActionCommand,
    "halt_control": HaltControl,
    "retrain_begin": RetrainBegin,
    "retrain_end": RetrainEnd,
    "human_command": HumanCommand,
    "state_sync": StateSync,
}
_TAGS = {cls: tag for tag, cls in _VARIANTS.items()}

TwinMessage = tuple(_VARIANTS.values())  # isinstance-friendly union


def message_to_dict(msg) -> dict:
    tag = _TAGS.get(type(msg))
    if tag is None:
        raise ContractViolation(f"not a protocol message: {type(msg).__name__}")
    out = {"ver": PROTOCOL_VERSION, "type": tag}
    for f in fields(msg):
        value = getattr(msg, f.name)
        if f.name == "ranges" or f.name == "pose":
            value = list(value)
        elif f.name == "obstacles":
            value = [
                {"centroid": list(ob.centroid), "radius": ob.radius,
                 "proximity": ob.proximity_flag}
                for ob in value
            ]
        out[f.name] = value
    return out


def message_from_dict(data: dict):
    if not isinstance(data, dict):
        raise DecodeError("frame is not an object", 0)
    if "ver" not in data:
        raise DecodeError("missing protocol version field 'ver'", 0)
    if data["ver"] != PROTOCOL_VERSION:
        raise VersionError(
            f"unsupported protocol version {data['ver']!r}, supported {PROTOCOL_VERSION}", 0)
    tag = data.get("type")
    cls = _VARIANTS.get(tag)
    if cls is None:
        raise DecodeError(f"unknown message type {tag!r}", 0)
    payload = {k: v for k, v in data.items() if k not in ("ver", "type")}
    expected = {f.name for f in fields(cls)}
    unknown = set(payload) - expected
    if unknown:
        raise DecodeError(f"unknown fields for {tag}: {sorted(unknown)}", 0)
    missing = expected - set(payload)
    if missing:
        raise DecodeError(f"missing fields for {tag}: {sorted(missing)}", 0)
    if tag == "obstacle_report":
        obstacles = []
        for entry in payload["obstacles"]:
            if not isinstance(entry, dict) or set(entry) != {"centroid", "radius", "proximity"}:
                raise DecodeError("malformed obstacle estimate", 0)
            obstacles.append(ObstacleEstimate(
                centroid=tuple(entry["centroid"]), radius=entry["radius"],
                proximity_flag=entry["proximity"]))
        payload["obstacles"] = tuple(obstacles)
    try:
        return cls(**payload)
    except (ContractViolation, TypeError, ValueError, IndexError) as exc:
        raise DecodeError(f"invalid {tag} payload: {exc}", 0) from exc


def encode(msg) -> bytes:
    """One message as a newline-terminated UTF-8 JSON line."""
    text = json.dumps(message_to_dict(msg), separators=(",", ":"), sort_keys=True,
                      allow_nan=False)
    return text.encode("utf-8") + b"\n"


def decode_line(line: bytes, offset: int = 0):
    """Decode a single frame; offset is reported in raised errors."""
    try:
        data = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"malformed frame: {exc}", offset) from exc
    try:
        return message_from_dict(data)
    except DecodeError as exc:
        raise type(exc)(exc.reason, offset) from exc


class StreamDecoder:
    """Incremental framing over a byte stream.

    Partial lines are buffered until their newline arrives. Malformed frames
    are recorded in `errors` with the absolute byte offset of the frame start,
    and decoding resumes at the next newline.
    """

    def __init__(self):
        self._buffer = b""
        self._consumed = 0  # absolute offset of the start of _buffer
        self.errors: list = []

    def feed(self, chunk: bytes) -> list:
        self._buffer += chunk
        out = []
        while True:
            nl = self._buffer.find(b"\n")
            if nl < 0:
                return out
            line = self._buffer[:nl]
            start = self._consumed
            self._buffer = self._buffer[nl + 1:]
            self._consumed += nl + 1
            if not line.strip():
                continue
            try:
                out.append(decode_line(line, offset=start))
            except DecodeError as exc:
                self.errors.append(exc)

    @property
    def pending_bytes(self) -> int:
        return len(self._buffer)


class TickMonitor:
    """Per-sender tick ordering guard: regressions are rejected loudly."""

    def __init__(self):
        self._last: dict = {}

    def observe(self, msg) -> None:
        last = self._last.get(msg.src)
        if last is not None and msg.tick < last:
            raise ContractViolation(
                f"tick regression from {msg.src!r}: {msg.tick} after {last}")
        self._last[msg.src] = msg.tick


def save_transcript(path, messages) -> None:
    with open(path, "wb") as fh:
        for msg in messages:
            fh.write(encode(msg))


def load_transcript(path) -> list:
    decoder = StreamDecoder()
    with open(path, "rb") as fh:
        messages = decoder.feed(fh.read())
    if decoder.errors:
        raise decoder.errors[0]
    return messages
