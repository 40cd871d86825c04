"""Socket transport for the twin: lock-step server and physical-side client.

Wire format is the newline-delimited JSON codec from `protocol`. Each tick
the physical side sends its telemetry trio (sensor frame, obstacle report,
state sync, in that order) and then blocks until exactly one control message
comes back. A halt suspends the exchange: the twin either closes the
connection (no retraining path, the session stays halted) or brackets a
retraining window in RetrainBegin/RetrainEnd; pose syncs sent inside the
window are progress feed for observers, not part of the tick exchange.
The physical signals episode end by closing the connection between ticks.
"""

from __future__ import annotations

import socket
import threading
from collections import deque
from dataclasses import dataclass, field

from . import wsbridge
from .errors import ContractViolation
from .hitl import decode_human_command
from .protocol import (
    ActionCommand,
    HaltControl,
    HumanCommand,
    RetrainBegin,
    RetrainEnd,
    SensorFrame,
    StateSync,
    StreamDecoder,
    decode_line,
    encode,
    save_transcript,
)
from .twin import PhysicalProxy, TwinController, VirtualMirror
from .world import SimParams, WorldSpec

_RECV_CHUNK = 65536


def parse_addr(text: str) -> tuple:
    """'host:port' -> (host, port); bare ':port' binds all interfaces."""
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ContractViolation(f"address must look like host:port, got {text!r}")
    return host or "0.0.0.0", int(port)


class MessageStream:
    """Blocking message framing over a connected socket.

    Unlike the tolerant file-transcript reader, transport decoding is strict:
    a malformed frame or a connection closed mid-frame raises immediately.
    `recv` returns None only on an orderly close between frames.
    """

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._decoder = StreamDecoder()
        self._queue: deque = deque()

    def send(self, msg) -> None:
        self.sock.sendall(encode(msg))

    def recv(self):
        while not self._queue:
            chunk = self.sock.recv(_RECV_CHUNK)
            if not chunk:
                if self._decoder.pending_bytes:
                    raise ContractViolation("connection closed mid-frame")
                return None
            self._queue.extend(self._decoder.feed(chunk))
            if self._decoder.errors:
                raise self._decoder.errors[0]
        return self._queue.popleft()

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


@dataclass
class ServeReport:
    """Twin-side summary of one served session."""

    mode: str = "deploy"
    ticks: int = 0
    commands: int = 0
    halts: list = field(default_factory=list)  # (tick, cause)
    checkpoint_ids: list = field(default_factory=list)
    transcript: list = field(default_factory=list)


def serve_connection(conn: socket.socket, world_spec: WorldSpec,
                     params: SimParams, twin_params, policy,
                     retrainer=None, src: str = "twin",
                     observer=None) -> ServeReport:
    """Drive one lock-step session over an accepted connection.

    policy: observation vector -> action in [-1, 1]^2.
    retrainer: callable(controller, cause, emit_progress) -> checkpoint id,
    or None when unsolved; without one the first halt ends the session.
    observer: called with every message in transcript order plus progress
    syncs, for live feeds.
    """
    mirror = VirtualMirror(world_spec, params, twin_params)
    controller = TwinController(mirror, src=src)
    stream = MessageStream(conn)
    report = ServeReport()
    notify = observer or (lambda msg: None)

    def send(msg):
        stream.send(msg)
        notify(msg)

    try:
        while True:
            first = stream.recv()
            if first is None:
                break
            trio = [first]
            for _ in range(2):
                msg = stream.recv()
                if msg is None:
                    raise ContractViolation("connection closed mid-tick")
                trio.append(msg)
            for msg in trio:
                notify(msg)
            by_type = controller.ingest(trio)
            sensor = by_type.get(SensorFrame)
            if sensor is None or mirror.pose is None:
                raise ContractViolation("tick exchange requires a sensor frame and a pose sync")
            tick = first.tick
            cmd, halt, _ = controller.decide(tick, sensor, policy)
            report.ticks += 1
            if cmd is not None:
                send(cmd)
                report.commands += 1
                continue
            report.halts.append((tick, halt.cause))
            send(halt)
            if retrainer is None:
                break
            begin = controller.begin_retraining(tick, f"snap-{tick}")
            send(begin)

            def emit_progress(pose, _tick=tick):
                sync = StateSync(src, _tick, tuple(pose))
                stream.send(sync)
                notify(sync)

            checkpoint_id = retrainer(controller, halt.cause, emit_progress)
            if checkpoint_id is None:
                controller.fail_retraining()
                break
            end = controller.complete_retraining(tick, str(checkpoint_id))
            send(end)
            report.checkpoint_ids.append(str(checkpoint_id))
    finally:
        stream.close()
    report.mode = controller.mode
    report.transcript = controller.transcript
    return report


def open_listener(addr: str) -> socket.socket:
    host, port = parse_addr(addr)
    listener = socket.create_server((host, port))
    listener.listen(1)
    return listener


def serve_twin(listener: socket.socket, world_spec: WorldSpec,
               params: SimParams, twin_params, policy, retrainer=None,
               transcript_path=None, observer=None) -> ServeReport:
    """Accept one physical connection on an open listener and serve it."""
    conn, _ = listener.accept()
    try:
        report = serve_connection(conn, world_spec, params, twin_params,
                                  policy, retrainer=retrainer,
                                  observer=observer)
    finally:
        conn.close()
    if transcript_path is not None:
        save_transcript(transcript_path, report.transcript)
    return report


@dataclass
class PhysicalReport:
    """Physical-side summary of one session."""

    ticks: int = 0
    done_reason: str = "none"
    halted: bool = False
    halts: list = field(default_factory=list)  # (tick, cause)
    checkpoint_ids: list = field(default_factory=list)
    progress_syncs: int = 0
    final_pose: tuple | None = None


def run_physical(sock: socket.socket, world_spec: WorldSpec,
                 params: SimParams, twin_params, spawn_seed: int = 0,
                 max_ticks: int = 2000, src: str = "physical",
                 on_tick=None) -> PhysicalReport:
    """Client loop: emit telemetry, obey the one control message per tick."""
    proxy = PhysicalProxy(world_spec, params, twin_params,
                          spawn_seed=spawn_seed, src=src)
    stream = MessageStream(sock)
    report = PhysicalReport()
    try:
        for tick in range(max_ticks):
            for msg in proxy.sense(tick):
                stream.send(msg)
            reply = stream.recv()
            if reply is None:
                raise ContractViolation("connection closed while awaiting control")
            report.ticks += 1
            if on_tick is not None:
                on_tick(tick, proxy.pose)
            if isinstance(reply, ActionCommand):
                outcome = proxy.apply(reply)
                if outcome.done:
                    report.done_reason = outcome.done_reason
                    break
                continue
            if not isinstance(reply, HaltControl):
                raise ContractViolation(
                    f"expected a control message, got {type(reply).__name__}")
            report.halts.append((reply.tick, reply.cause))
            nxt = stream.recv()
            if nxt is None:
                report.halted = True
                break
            if not isinstance(nxt, RetrainBegin):
                raise ContractViolation(
                    f"expected RetrainBegin after halt, got {type(nxt).__name__}")
            resumed = False
            while True:
                msg = stream.recv()
                if msg is None:
                    break
                if isinstance(msg, StateSync):
                    report.progress_syncs += 1
                    continue
                if isinstance(msg, RetrainEnd):
                    report.checkpoint_ids.append(msg.checkpoint_id)
                    resumed = True
                    break
                raise ContractViolation(
                    f"unexpected {type(msg).__name__} inside retraining window")
            if not resumed:
                report.halted = True
                break
            proxy.prev_action = (0.0, 0.0)
    finally:
        report.final_pose = proxy.pose
        stream.close()
    return report


def connect_physical(addr: str, timeout: float = 10.0) -> socket.socket:
    host, port = parse_addr(addr)
    return socket.create_connection((host, port), timeout=timeout)


class ConsoleHub:
    """Fan-out of the live message feed to browser clients over WebSocket.

    Outbound: every transcript message as one text frame holding the JSON
    line. Inbound: teleop key presses as HumanCommand frames, validated and
    queued first-in first-out for the retraining loop to drain one per step.
    """

    def __init__(self):
        self._clients: list = []
        self._lock = threading.Lock()
        self._keys: deque = deque()

    def broadcast(self, msg) -> None:
        frame = wsbridge.encode_frame(encode(msg).rstrip(b"\n"))
        with self._lock:
            clients = list(self._clients)
        for sock in clients:
            try:
                sock.sendall(frame)
            except OSError:
                self._drop(sock)

    def pop_key(self):
        with self._lock:
            return self._keys.popleft() if self._keys else None

    def pending_keys(self) -> int:
        with self._lock:
            return len(self._keys)

    def _drop(self, sock) -> None:
        with self._lock:
            if sock in self._clients:
                self._clients.remove(sock)
        try:
            sock.close()
        except OSError:
            pass

    def attach(self, sock: socket.socket) -> None:
        """Complete the upgrade handshake and start reading frames."""
        request = b""
        while b"\r\n\r\n" not in request:
            chunk = sock.recv(_RECV_CHUNK)
            if not chunk:
                sock.close()
                return
            request += chunk
        sock.sendall(wsbridge.handshake_response(request))
        with self._lock:
            self._clients.append(sock)
        thread = threading.Thread(target=self._reader, args=(sock,), daemon=True)
        thread.start()

    def _reader(self, sock: socket.socket) -> None:
        buffer = bytearray()
        try:
            while True:
                chunk = sock.recv(_RECV_CHUNK)
                if not chunk:
                    break
                buffer += chunk
                for opcode, payload in wsbridge.decode_frames(buffer):
                    if opcode == wsbridge.OP_PING:
                        sock.sendall(wsbridge.encode_frame(payload, wsbridge.OP_PONG))
                    elif opcode == wsbridge.OP_CLOSE:
                        sock.sendall(wsbridge.encode_frame(payload, wsbridge.OP_CLOSE))
                        return
                    elif opcode == wsbridge.OP_TEXT:
                        self._ingest(payload)
        except (OSError, ContractViolation):
            pass
        finally:
            self._drop(sock)

    def _ingest(self, payload: bytes) -> None:
        try:
            msg = decode_line(payload)
        except Exception:
            return
        if isinstance(msg, HumanCommand):
            try:
                decode_human_command(msg)
            except ContractViolation:
                return
            with self._lock:
                self._keys.append(msg.key)

    def serve(self, listener: socket.socket) -> threading.Thread:
        """Accept console clients on a background thread until closed."""

        def loop():
            while True:
                try:
                    conn, _ = listener.accept()
                except OSError:
                    return
                try:
                    self.attach(conn)
                except (OSError, ContractViolation):
                    conn.close()

        thread = threading.Thread(target=loop, daemon=True)
        thread.start()
        return thread
