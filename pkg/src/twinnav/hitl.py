"""Human-guided retraining: teleop decoding, arbitration, sandbox episodes.

A halted deployment snapshots the mirrored arena and reruns it as a sandbox:
episodes start at the halt pose, a human operator may steer the first steps of
each episode through the nine-key teleop map, and every transition (human- or
policy-sourced) feeds the same buffers and per-step learning as pre-training.
Human influence decays geometrically across episodes so the model cannot
simply mimic the operator. The session concludes the first time an episode
reaches the goal; the caller then saves a checkpoint and resumes deployment
from the pose where control was halted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agent import TD3Agent
from .buffers import PriorityBuffer, ReplayBuffer, Transition
from .errors import ContractViolation
from .protocol import HumanCommand
from .twin import TwinSession
from .world import (
    RobotState,
    SimParams,
    WorldSpec,
    build_observation,
    copy_world,
    step,
)

# key -> (linear velocity m/s, angular velocity rad/s)
TELEOP_TABLE = {
    "w": (0.5, 0.5),  # forward-right
    "z": (-0.5, 0.5),  # backward-right
    "a": (0.5, -0.5),  # forward-left
    "d": (-0.5, -0.5),  # backward-left
    "l": (0.0, -0.5),  # left
    "r": (0.0, 0.5),  # right
    "f": (0.5, 0.0),  # forward
    "b": (-0.5, 0.0),  # backward
    "s": (0.0, 0.0),  # stop: releases human control
}

RELEASE_KEY = "s"


@dataclass(frozen=True)
class TeleopCommand:
    key: str
    v: float
    w: float

    @property
    def releases_control(self) -> bool:
        return self.key == RELEASE_KEY

    def action(self, params: SimParams) -> tuple:
        """Velocities normalized to the actuator range, clipped to [-1, 1]."""
        return (float(np.clip(self.v / params.v_max, -1.0, 1.0)),
                float(np.clip(self.w / params.w_max, -1.0, 1.0)))


def teleop_decode(key: str) -> TeleopCommand:
    try:
        v, w = TELEOP_TABLE[key]
    except KeyError:
        known = "".join(sorted(TELEOP_TABLE))
        raise ContractViolation(f"unknown teleop key {key!r}; known keys: {known}")
    return TeleopCommand(key=key, v=v, w=w)


def decode_human_command(msg: HumanCommand) -> TeleopCommand:
    """Validate a wire-level human command against the teleop table."""
    cmd = teleop_decode(msg.key)
    if (msg.v, msg.w) != (cmd.v, cmd.w):
        raise ContractViolation(
            f"human command velocities ({msg.v}, {msg.w}) do not match key {msg.key!r}")
    return cmd


@dataclass
class ArbitratedAction:
    action: tuple  # [-1, 1]^2
    source: str  # "human" | "policy"


@dataclass
class HitlParams:
    """Retraining-session knobs."""

    human_budget0: int = 50  # human-priority steps in episode 0
    budget_decay: float = 0.8  # geometric decay per episode
    max_retrain_episodes: int = 200
    sandbox_margin: float = 0.3  # extra keep-out grown onto estimated obstacles
    start_pad: float = 0.05  # inflation never pulls the halt pose this close

    def __post_init__(self):
        if self.human_budget0 < 0:
            raise ContractViolation("human budget must be non-negative")
        if not 0.0 <= self.budget_decay <= 1.0:
            raise ContractViolation("budget decay must lie in [0, 1]")
        if self.max_retrain_episodes < 0:
            raise ContractViolation("episode cap must be non-negative")
        if self.sandbox_margin < 0.0 or self.start_pad < 0.0:
            raise ContractViolation("sandbox margins must be non-negative")


def budget_for_episode(hitl: HitlParams, episode: int) -> int:
    return math.floor(hitl.human_budget0 * hitl.budget_decay ** episode)


def arbitrate(policy_action, active_teleop: TeleopCommand | None,
              session: "RetrainSession") -> ArbitratedAction:
    """Human control wins while a non-release key is held and budget remains.

    The budget is decremented only on human-sourced steps; the release key
    yields to the policy without spending budget.
    """
    if (active_teleop is not None and not active_teleop.releases_control
            and session.human_budget > 0):
        session.human_budget -= 1
        return ArbitratedAction(action=active_teleop.action(session.params),
                                source="human")
    a = np.clip(np.asarray(policy_action, dtype=np.float64), -1.0, 1.0)
    return ArbitratedAction(action=(float(a[0]), float(a[1])), source="policy")


def build_sandbox(snapshot: WorldSpec, halt_pose: tuple, params: SimParams,
                  hitl: HitlParams) -> WorldSpec:
    """Clone the snapshot, growing circle obstacles into a keep-out margin.

    Estimated obstacles are optimistic hulls of the visible arc, so the
    sandbox trains against slightly fatter circles. Growth is capped so the
    halt pose stays clear of collision, the goal stays reachable, and no
    obstacle is pushed into a wall.
    """
    world = copy_world(snapshot)
    world.start = None
    px, py = float(halt_pose[0]), float(halt_pose[1])
    gx, gy = world.goal
    for ob in world.obstacles:
        if ob.shape != "circle":
            continue
        room_start = (ob.signed_distance(px, py)
                      - params.collision_clearance - hitl.start_pad)
        room_goal = (ob.signed_distance(gx, gy) - params.goal_radius
                     - params.collision_clearance - hitl.start_pad)
        room_walls = min(ob.x, world.width - ob.x,
                         ob.y, world.height - ob.y) - ob.radius
        grow = min(hitl.sandbox_margin, room_start, room_goal, room_walls)
        if grow > 0.0:
            ob.radius += grow
    return world


@dataclass
class EpisodeRecord:
    episode: int
    budget: int
    reward: float
    steps: int
    human_steps: int
    done_reason: str


RETRAIN_CSV_HEADER = "episode,budget,reward,steps,human_steps,done_reason"


def retrain_csv_row(record: EpisodeRecord) -> str:
    return ",".join([str(record.episode), str(record.budget), repr(record.reward),
                     str(record.steps), str(record.human_steps), record.done_reason])


class RetrainSession:
    """One halt-to-resume retraining window over a snapshotted arena."""

    def __init__(self, snapshot_world: WorldSpec, halt_pose: tuple,
                 params: SimParams, hitl: HitlParams | None = None):
        self.hitl = hitl or HitlParams()
        self.snapshot_world = copy_world(snapshot_world)
        self.origin_pose = tuple(float(p) for p in halt_pose)
        if len(self.origin_pose) != 3:
            raise ContractViolation("halt pose must be (x, y, heading)")
        self.params = params
        self.sandbox = build_sandbox(self.snapshot_world, self.origin_pose,
                                     params, self.hitl)
        self.episode_index = 0
        self.human_budget = 0
        self.status = "active"  # active | solved | exhausted
        self.budgets: list = []  # per-episode allotments, audit trail
        self.episodes: list = []  # EpisodeRecord per episode
        self.human_steps = 0
        self.total_env_steps = 0

    @classmethod
    def from_twin(cls, twin: TwinSession, hitl: HitlParams | None = None):
        """Snapshot the mirrored arena and halt pose of a live twin session."""
        if twin.mirror.pose is None:
            raise ContractViolation("cannot snapshot a mirror with no synced pose")
        return cls(twin.mirror.world, twin.mirror.pose, twin.mirror.params, hitl)


def policy_solves_sandbox(session: RetrainSession, agent: TD3Agent) -> bool:
    """Noise-free, human-free rollout from the halt pose; True on goal.

    Pure evaluation: nothing is stored, no learning step runs, and the
    agent's counters stay untouched, so budget accounting is unaffected.
    """
    params = session.params
    world = copy_world(session.sandbox)
    robot = RobotState(*session.origin_pose)
    obs = build_observation(world, robot, (0.0, 0.0), params)
    for _ in range(agent.hp.max_steps_per_episode):
        action = agent.select_action(obs.vector(), explore=False)
        robot, outcome = step(world, robot, action, params, prev_obs=obs)
        if outcome.done:
            return outcome.done_reason == "goal"
        obs = outcome.observation
    return False


def retrain(session: RetrainSession, agent: TD3Agent, replay: ReplayBuffer,
            priority: PriorityBuffer, human_source=None, on_step=None) -> RetrainSession:
    """Run sandbox episodes until the policy can solve the scene alone.

    A goal-reaching episode only closes the session once a verification
    rollout (no human, no exploration noise) also reaches the goal from the
    halt pose; until then sandbox episodes continue and the budget keeps
    decaying. human_source: callable(episode, step, observation) -> teleop
    key or None, sampled once per control step (latest key wins within a
    step). Every transition goes to both buffers and triggers one learning
    step, exactly as in pre-training.
    """
    if session.status != "active":
        raise ContractViolation(f"retraining session is {session.status}, not active")
    params = session.params
    for episode in range(session.hitl.max_retrain_episodes):
        session.episode_index = episode
        session.human_budget = budget_for_episode(session.hitl, episode)
        session.budgets.append(session.human_budget)
        world = copy_world(session.sandbox)
        robot = RobotState(*session.origin_pose)
        obs = build_observation(world, robot, (0.0, 0.0), params)
        total = 0.0
        steps = 0
        human_steps = 0
        done_reason = "timeout"
        for step_index in range(agent.hp.max_steps_per_episode):
            key = None
            if human_source is not None:
                key = human_source(episode, step_index, obs)
            teleop = teleop_decode(key) if key is not None else None
            policy_action = agent.select_action(obs.vector(), explore=True)
            arb = arbitrate(policy_action, teleop, session)
            if arb.source == "human":
                human_steps += 1
                session.human_steps += 1
            agent.env_step_count += 1
            session.total_env_steps += 1
            robot, outcome = step(world, robot, arb.action, params, prev_obs=obs)
            steps += 1
            total += outcome.reward
            transition = Transition(obs.vector(), np.asarray(arb.action),
                                    outcome.reward, outcome.observation.vector(),
                                    outcome.done)
            replay.push(transition)
            priority.push(transition)
            agent.train_step(replay, priority)
            if on_step is not None:
                on_step(episode, step_index, robot, arb)
            obs = outcome.observation
            if outcome.done:
                done_reason = outcome.done_reason
                break
        session.episodes.append(EpisodeRecord(episode, session.budgets[-1], total,
                                              steps, human_steps, done_reason))
        if done_reason == "goal" and policy_solves_sandbox(session, agent):
            session.status = "solved"
            return session
    session.status = "exhausted"
    return session


def resume(session: RetrainSession, twin: TwinSession, checkpoint_id: str) -> None:
    """Hand control back: reset the virtual robot to the halt pose and redeploy."""
    if session.status != "solved":
        raise ContractViolation("resume requires a solved retraining session")
    twin.mirror.pose = tuple(session.origin_pose)
    twin.complete_retraining(twin.tick, str(checkpoint_id))


def scripted_source(keys):
    """Teleop source replaying a fixed key sequence at the start of each episode."""
    keys = list(keys)

    def source(episode, step_index, obs):
        return keys[step_index] if step_index < len(keys) else None

    return source
