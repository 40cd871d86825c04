"""Physical proxy, virtual mirror, risk gate, and the deployment loop.

The physical proxy is itself an arena instance standing in for the real
robot. Each tick it emits a sensor frame, a clustered obstacle report, and a
pose sync; the twin mirrors them into a virtual arena, gates on proximity,
computes an action on the mirrored state, rehearses that action one step
ahead in the mirror, and only then forwards the command. Once the gate trips,
control transfer stops until a retraining hook hands back a checkpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .protocol import (
    ActionCommand,
    HaltControl,
    ObstacleEstimate,
    ObstacleReport,
    RetrainBegin,
    RetrainEnd,
    SensorFrame,
    StateSync,
    TickMonitor,
)
from .world import (
    Obstacle,
    Observation,
    RobotState,
    SimParams,
    WorldSpec,
    build_observation,
    copy_world,
    lidar_scan,
    spawn_episode,
    step,
)


@dataclass
class TwinParams:
    """Gate and perception thresholds (meters)."""

    risk_threshold: float = 1.0  # halt strictly below this minimum range
    proximity_threshold: float = 1.5  # near/far flag boundary
    cluster_gap: float = 0.3  # Euclidean clustering gap between returns
    min_estimate_radius: float = 0.05  # floor for single-return clusters
    lookahead: bool = True  # rehearse each command in the mirror first


@dataclass
class GateDecision:
    halt: bool
    cause: str = ""
    min_range: float = math.inf


def risk_gate(observation: Observation, params: SimParams,
              twin_params: TwinParams) -> GateDecision:
    """Halt strictly below the proximity threshold, deploy otherwise."""
    min_range = float(np.min(observation.z)) * params.max_range
    if min_range < twin_params.risk_threshold:
        return GateDecision(halt=True, cause="proximity", min_range=min_range)
    return GateDecision(halt=False, min_range=min_range)


def gate_min_range(ranges) -> float:
    return float(np.min(np.asarray(ranges, dtype=np.float64)))


def detect_obstacles(ranges, pose, params: SimParams,
                     twin_params: TwinParams) -> list:
    """Cluster sub-max-range returns into centroid + enclosing-radius blobs.

    Returns are walked in beam order; a new cluster starts whenever the
    Euclidean gap between consecutive hit points exceeds the threshold. The
    proximity flag compares surface distance (centroid minus radius) against
    the near/far boundary.
    """
    ranges = np.asarray(ranges, dtype=np.float64)
    px, py, heading = pose
    if params.n_beams == 1:
        offsets = np.array([0.0])
    else:
        offsets = np.linspace(-0.5 * params.fov, 0.5 * params.fov, len(ranges))
    points = []
    for r, off in zip(ranges, offsets):
        if r < params.max_range - 1e-9:
            angle = heading + off
            points.append((px + r * math.cos(angle), py + r * math.sin(angle)))
    clusters: list = []
    current: list = []
    for pt in points:
        if current and math.dist(current[-1], pt) > twin_params.cluster_gap:
            clusters.append(current)
            current = []
        current.append(pt)
    if current:
        clusters.append(current)

    estimates = []
    for cluster in clusters:
        xs = [p[0] for p in cluster]
        ys = [p[1] for p in cluster]
        cx, cy = sum(xs) / len(xs), sum(ys) / len(ys)
        radius = max(max(math.dist((cx, cy), p) for p in cluster),
                     twin_params.min_estimate_radius)
        surface = math.dist((px, py), (cx, cy)) - radius
        flag = "near" if surface < twin_params.proximity_threshold else "far"
        estimates.append(ObstacleEstimate(centroid=(cx, cy), radius=radius,
                                          proximity_flag=flag))
    return estimates


class VirtualMirror:
    """The twin's arena: configured bounds and goal, obstacles from reports."""

    def __init__(self, base_spec: WorldSpec, params: SimParams,
                 twin_params: TwinParams):
        self.world = copy_world(base_spec)
        self.world.obstacles = []  # populated only by obstacle reports
        self.world.start = None
        self.params = params
        self.twin_params = twin_params
        self.pose: tuple | None = None
        self.last_synced_tick = -1
        self.dropped_stale = 0
        self.prev_action = (0.0, 0.0)

    def update(self, report: ObstacleReport | None, sync: StateSync | None) -> bool:
        """Mirror one tick of telemetry; stale ticks are dropped and counted."""
        tick = max(m.tick for m in (report, sync) if m is not None) if (report or sync) else None
        if tick is None:
            return False
        if tick < self.last_synced_tick:
            self.dropped_stale += 1
            return False
        if report is not None:
            self.world.obstacles = self._estimates_to_obstacles(report.obstacles)
        if sync is not None:
            self.pose = tuple(sync.pose)
        self.last_synced_tick = tick
        return True

    def _estimates_to_obstacles(self, estimates) -> list:
        obstacles = []
        for est in estimates:
            cx, cy = est.centroid
            r = est.radius
            # walls are already part of the mirror; skip estimates that are
            # wall returns or would extend outside the arena
            if (cx - r <= 0.0 or cx + r >= self.world.width
                    or cy - r <= 0.0 or cy + r >= self.world.height):
                continue
            obstacles.append(Obstacle("circle", cx, cy, radius=r))
        return obstacles

    def observation(self) -> Observation:
        if self.pose is None:
            raise ContractViolation("mirror has no synced pose yet")
        robot = RobotState(*self.pose)
        return build_observation(self.world, robot, self.prev_action, self.params)

    def min_range(self) -> float:
        """Minimum lidar range at the synced pose, in the mirrored arena."""
        return float(np.min(self.observation().z)) * self.params.max_range

    def lookahead_safe(self, action) -> bool:
        """Rehearse one step in the mirror; reject gate breaches up front.

        Estimated obstacles are inflated (their radius covers the whole
        observed arc), so the mirror can read under the gate threshold even
        when the physical ranges do not. A command that strictly increases
        the predicted minimum range is therefore always allowed: retreat must
        stay possible or a halted session could never be resumed.
        """
        if self.pose is None:
            return False
        current = self.min_range()
        world = copy_world(self.world)
        robot = RobotState(*self.pose)
        nxt, outcome = step(world, robot, action, self.params)
        if outcome.done_reason == "collision":
            return False
        predicted = float(np.min(outcome.observation.z)) * self.params.max_range
        return predicted >= self.twin_params.risk_threshold or predicted > current


def mirror_update(mirror: VirtualMirror, report: ObstacleReport | None,
                  sync: StateSync | None) -> bool:
    return mirror.update(report, sync)


class PhysicalProxy:
    """Arena instance standing in for the robot; speaks only in messages."""

    def __init__(self, world_spec: WorldSpec, params: SimParams,
                 twin_params: TwinParams, spawn_seed: int = 0, src: str = "physical"):
        self.world, self.robot = spawn_episode(world_spec, spawn_seed, params)
        self.params = params
        self.twin_params = twin_params
        self.src = src
        self.prev_action = (0.0, 0.0)
        self.last_outcome = None

    @property
    def pose(self) -> tuple:
        return self.robot.pose

    def sense(self, tick: int) -> list:
        ranges = lidar_scan(self.world, self.robot.pose, self.params)
        report = detect_obstacles(ranges, self.robot.pose, self.params,
                                  self.twin_params)
        return [
            SensorFrame(self.src, tick, tuple(ranges), self.robot.pose),
            ObstacleReport(self.src, tick, tuple(report)),
            StateSync(self.src, tick, self.robot.pose),
        ]

    def apply(self, cmd: ActionCommand):
        action = (max(-1.0, min(1.0, cmd.v / self.params.v_max)),
                  max(-1.0, min(1.0, cmd.w / self.params.w_max)))
        prev_obs = build_observation(self.world, self.robot, self.prev_action,
                                     self.params)
        self.robot, outcome = step(self.world, self.robot, action, self.params,
                                   prev_obs=prev_obs)
        self.prev_action = action
        self.last_outcome = outcome
        return outcome


class LocalLink:
    """In-process message channel with seeded random drop injection."""

    def __init__(self, drop_rate: float = 0.0, seed: int = 0):
        if not 0.0 <= drop_rate < 1.0:
            raise ContractViolation("drop_rate must lie in [0, 1)")
        self.drop_rate = drop_rate
        self._rng = np.random.default_rng(seed)
        self.sent = 0
        self.dropped = 0

    def transmit(self, msg):
        self.sent += 1
        if self.drop_rate > 0.0 and self._rng.random() < self.drop_rate:
            self.dropped += 1
            return None
        return msg


@dataclass
class TickRecord:
    tick: int
    physical_pose: tuple
    mirror_pose: tuple | None
    min_range: float
    forwarded: bool


@dataclass
class SessionResult:
    mode: str
    ticks: int
    done_reason: str  # physical episode outcome, or "none"
    halts: list = field(default_factory=list)  # (tick, cause)
    resume_poses: list = field(default_factory=list)
    halt_poses: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # per-tick records


class TwinController:
    """Mirror-side decision core, shared by in-process and socket sessions.

    Owns the mode state machine (deploy, halted, retraining), the message
    transcript, and the per-tick decision: gate on raw ranges, compute the
    policy action on the mirrored observation, rehearse it one step ahead,
    and only then construct a command. Action commands are only ever built
    in deploy mode, which makes the safety invariant assertable on the
    transcript alone.
    """

    def __init__(self, mirror: VirtualMirror, src: str = "twin"):
        self.mirror = mirror
        self.src = src
        self.mode = "deploy"
        self.transcript: list = []
        self.monitor = TickMonitor()
        self.halts: list = []  # (tick, cause)

    def ingest(self, delivered: list) -> dict:
        """Record delivered telemetry and mirror it; returns messages by type."""
        for msg in delivered:
            self.monitor.observe(msg)
            self.transcript.append(msg)
        by_type = {type(m): m for m in delivered}
        mirror_update(self.mirror, by_type.get(ObstacleReport),
                      by_type.get(StateSync))
        return by_type

    def decide(self, tick: int, sensor: SensorFrame | None, policy) -> tuple:
        """One control decision; returns (command, halt, min_range).

        Exactly one of command/halt is set unless telemetry is missing or the
        mirror has never synced (both None, range infinite).
        """
        if sensor is None or self.mirror.pose is None:
            return None, None, math.inf
        if self.mode != "deploy":
            raise ContractViolation("control decision requested outside deploy mode")
        min_range = gate_min_range(sensor.ranges)
        if min_range < self.mirror.twin_params.risk_threshold:
            return None, self._halt(tick, "proximity"), min_range
        obs = self.mirror.observation()
        action = np.clip(np.asarray(policy(obs.vector()), dtype=np.float64),
                         -1.0, 1.0)
        if (self.mirror.twin_params.lookahead
                and not self.mirror.lookahead_safe(action)):
            return None, self._halt(tick, "predicted-proximity"), min_range
        params = self.mirror.params
        cmd = ActionCommand(self.src, tick, float(action[0]) * params.v_max,
                            float(action[1]) * params.w_max)
        self.transcript.append(cmd)
        return cmd, None, min_range

    def _halt(self, tick: int, cause: str) -> HaltControl:
        self.mode = "halted"
        halt = HaltControl(self.src, tick, cause)
        self.transcript.append(halt)
        self.halts.append((tick, cause))
        return halt

    def begin_retraining(self, tick: int, snapshot_id: str) -> RetrainBegin:
        if self.mode != "halted":
            raise ContractViolation("retraining must start from a halt")
        self.mode = "retraining"
        msg = RetrainBegin(self.src, tick, snapshot_id)
        self.transcript.append(msg)
        return msg

    def fail_retraining(self) -> None:
        """Unsolved retraining: keep the old checkpoint, stay halted."""
        if self.mode != "retraining":
            raise ContractViolation("no retraining window to fail")
        self.mode = "halted"

    def complete_retraining(self, tick: int, checkpoint_id: str) -> RetrainEnd:
        if self.mode != "retraining":
            raise ContractViolation("cannot complete retraining outside a retrain window")
        msg = RetrainEnd(self.src, tick, checkpoint_id)
        self.transcript.append(msg)
        self.mode = "deploy"
        self.mirror.prev_action = (0.0, 0.0)
        return msg


class TwinSession:
    """In-process deployment driver tying proxy, link, and controller together.

    Single-threaded actor interleaving: each tick the proxy emits telemetry,
    the twin mirrors and decides, and at most one command flows back.
    """

    def __init__(self, physical: PhysicalProxy, mirror: VirtualMirror,
                 link: LocalLink | None = None, src: str = "twin"):
        self.physical = physical
        self.mirror = mirror
        self.link = link or LocalLink()
        self.controller = TwinController(mirror, src=src)
        self.tick = 0

    @property
    def mode(self) -> str:
        return self.controller.mode

    @mode.setter
    def mode(self, value: str) -> None:
        self.controller.mode = value

    @property
    def transcript(self) -> list:
        return self.controller.transcript

    @property
    def monitor(self) -> TickMonitor:
        return self.controller.monitor

    def run(self, policy, max_ticks: int, retrain_hook=None) -> SessionResult:
        """Drive the loop until episode end, an unrecoverable halt, or the cap.

        policy: observation vector -> action in [-1, 1]^2.
        retrain_hook: callable(session, cause) -> checkpoint id (None when
        unsolved); absent, the first halt ends the session in halted mode.
        """
        result = SessionResult(mode=self.mode, ticks=0, done_reason="none")
        params = self.physical.params
        while self.tick < max_ticks:
            tick = self.tick
            emitted = self.physical.sense(tick)
            delivered = [m for m in (self.link.transmit(m) for m in emitted)
                         if m is not None]
            by_type = self.controller.ingest(delivered)
            cmd, halt, min_range = self.controller.decide(
                tick, by_type.get(SensorFrame), policy)
            record = TickRecord(tick=tick, physical_pose=self.physical.pose,
                                mirror_pose=self.mirror.pose,
                                min_range=min_range, forwarded=cmd is not None)
            if halt is not None:
                result.halts.append((tick, halt.cause))
                result.halt_poses.append(self.physical.pose)
                if not self._maybe_retrain(tick, retrain_hook, result):
                    result.trace.append(record)
                    break
            result.trace.append(record)
            result.ticks += 1
            self.tick += 1

            if cmd is not None:
                outcome = self.physical.apply(cmd)
                self.mirror.prev_action = (cmd.v / params.v_max,
                                           cmd.w / params.w_max)
                if outcome.done:
                    # episode termination is not a halt: the session simply ends
                    result.done_reason = outcome.done_reason
                    break
        result.mode = self.mode
        return result

    def _maybe_retrain(self, tick: int, retrain_hook, result: SessionResult) -> bool:
        if retrain_hook is None:
            return False
        self.controller.begin_retraining(tick, f"snap-{tick}")
        checkpoint_id = retrain_hook(self, result.halts[-1][1])
        if checkpoint_id is None:
            self.controller.fail_retraining()
            return False
        self.complete_retraining(tick, str(checkpoint_id), result)
        return True

    def complete_retraining(self, tick: int, checkpoint_id: str,
                            result: SessionResult | None = None) -> None:
        """Hand control back after a solved retraining session."""
        self.controller.complete_retraining(tick, str(checkpoint_id))
        if result is not None:
            result.resume_poses.append(self.physical.pose)
        self.physical.prev_action = (0.0, 0.0)


def assert_transcript_safety(transcript, risk_threshold: float = 1.0) -> None:
    """No command may follow a sensor frame that breached the gate.

    A completed retraining clears the breach: control is legitimately handed
    back once a new checkpoint is in place. Raises on violation; usable on
    any recorded transcript.
    """
    breached_at = None
    for msg in transcript:
        if isinstance(msg, SensorFrame) and msg.ranges:
            if gate_min_range(msg.ranges) < risk_threshold:
                breached_at = msg.tick
        elif isinstance(msg, RetrainEnd):
            breached_at = None
        elif isinstance(msg, ActionCommand) and breached_at is not None:
            raise ContractViolation(
                f"command at tick {msg.tick} after gate breach at tick {breached_at}")
