"""Reference arenas and the end-to-end halt, retrain, resume demonstration.

The desk arena is sized so a full training run fits in CPU minutes. The trap
arena reuses its bounds but pins the start pose 1.6 m from an obstacle
surface, inside the 2 m clearance every training spawn guarantees, so a
policy trained on the desk arena meets a situation it has never seen.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .agent import TD3Agent
from .buffers import PriorityBuffer, ReplayBuffer
from .errors import ContractViolation
from .hitl import (
    RETRAIN_CSV_HEADER,
    HitlParams,
    RetrainSession,
    resume,
    retrain,
    retrain_csv_row,
    scripted_source,
)
from .twin import (
    PhysicalProxy,
    TwinParams,
    TwinSession,
    VirtualMirror,
)
from .world import Obstacle, SimParams, WorldSpec


def desk_world() -> WorldSpec:
    """Small training arena: obstacle cluster low, goal on the right.

    The cluster is compact so the spawn constraints (2 m obstacle clearance,
    3 m goal distance) leave one connected region whose goal distances cover
    3 m to 8 m densely; spread layouts fuse their clearance zones into a wall
    that splits spawns into near-goal and far-goal pockets with nothing in
    between, which starves training of intermediate starts.
    """
    return WorldSpec(
        width=10.0,
        height=8.0,
        goal=(8.5, 4.0),
        obstacles=[
            Obstacle("circle", 3.5, 1.0, radius=0.3),
            Obstacle("circle", 5.5, 1.2, radius=0.3),
            Obstacle("circle", 4.5, 2.4, radius=0.3),
        ],
        seed=3,
    )


def trap_world() -> WorldSpec:
    """Desk arena variant with an obstacle dead ahead of a fixed start pose.

    Every training episode spawns the robot at least 2 m from any obstacle;
    here the nearest surface sits 1.6 m ahead, so a forward drive is in gate
    range within a few ticks. The goal lies past the obstacle, so finishing
    requires getting around it from close quarters.
    """
    start = (2.0, 4.0, 0.0)
    return WorldSpec(
        width=10.0,
        height=8.0,
        goal=(8.5, 4.0),
        obstacles=[
            # surface 1.6 m ahead of the start; the gate halts the approach
            Obstacle("circle", 4.1, 4.0, radius=0.5),
        ],
        start=start,
        seed=7,
    )


def pocket_trap() -> WorldSpec:
    """Concave cul-de-sac around a fixed start, open away from the goal.

    A convex obstacle can be skirted by any competent reactive policy, so it
    cannot separate a plain deployment from a retrained one. This pocket
    cannot: the facing wall sits 1.1 m ahead (inside the 2 m clearance every
    training spawn guarantees), the arms flank the start at 0.9 m, and the
    only way out is to back through the mouth behind the robot and go around,
    which goal attraction alone never does.
    """
    return WorldSpec(
        width=10.0,
        height=8.0,
        goal=(8.5, 4.0),
        obstacles=[
            # back wall: facing surface at x = 3.1, 1.1 m ahead of the start
            Obstacle("box", 3.25, 4.0, width=0.3, height=2.4),
            # arms reach back past the start, leaving a mouth at x = 1.6
            Obstacle("box", 2.5, 5.05, width=1.8, height=0.3),
            Obstacle("box", 2.5, 2.95, width=1.8, height=0.3),
        ],
        start=(2.0, 4.0, 0.0),
        seed=7,
    )


def approach_policy(obs_vector):
    """Full speed ahead; the deterministic way to walk into the gate."""
    return (1.0, 0.0)


def retreat_policy(obs_vector):
    """Full speed astern; opens range to whatever is ahead.

    Safe only for short pulls: the rear wall is invisible to the forward
    beams but not to the lookahead, which starts predicting wall contact
    once the robot backs within the clearance margin of the boundary.
    """
    return (-1.0, 0.0)


# 20 teleop keys: back straight off the obstacle, then arc away to the side
DETOUR_KEYS = ("b",) * 8 + ("d",) * 12


@dataclass
class DemoReport:
    """Everything observable about one halt/retrain/resume cycle."""

    halted: bool = False
    halt_tick: int | None = None
    halt_cause: str = ""
    halt_pose: tuple | None = None
    origin_pose: tuple | None = None
    retrain_status: str = "skipped"  # solved | exhausted | skipped
    episodes_used: int = 0
    human_steps: int = 0
    retrain_env_steps: int = 0
    checkpoint_id: str | None = None
    resume_pose: tuple | None = None
    resume_exact: bool = False
    post_resume_ticks: int = 0
    post_resume_mode: str = ""
    transcript: list = field(default_factory=list)
    episode_rows: list = field(default_factory=list)

    @property
    def solved(self) -> bool:
        return self.retrain_status == "solved"


def run_retrain_demo(agent: TD3Agent, replay: ReplayBuffer,
                     priority: PriorityBuffer, world_spec: WorldSpec | None = None,
                     params: SimParams | None = None,
                     twin_params: TwinParams | None = None,
                     hitl: HitlParams | None = None, seed: int = 0,
                     detour_keys=DETOUR_KEYS, max_ticks: int = 200,
                     retreat_ticks: int = 10, checkpoint_path=None,
                     csv_path=None, log=None) -> DemoReport:
    """Drive an agent into the trap, retrain it through the halt, hand back.

    Deployment approaches under a scripted forward policy until the twin
    halts, retrains in the sandbox with a scripted human detour opening each
    episode, resumes at the halt pose, then backs off for a few ticks to show
    control flowing again. The agent is the thing being retrained; the
    scripted policies only steer the demonstration itself.
    """
    params = params or SimParams()
    twin_params = twin_params or TwinParams()
    hitl = hitl or HitlParams()
    world = world_spec or trap_world()
    say = log or (lambda text: None)

    physical = PhysicalProxy(world, params, twin_params, spawn_seed=seed)
    mirror = VirtualMirror(world, params, twin_params)
    session = TwinSession(physical, mirror)
    report = DemoReport()

    first = session.run(approach_policy, max_ticks=max_ticks)
    if session.mode != "halted" or not first.halts:
        raise ContractViolation("approach run ended without tripping the gate")
    report.halted = True
    report.halt_tick, report.halt_cause = first.halts[-1]
    report.halt_pose = physical.pose
    say(f"halt at tick {report.halt_tick} ({report.halt_cause}), "
        f"pose {physical.pose}")

    session.controller.begin_retraining(report.halt_tick,
                                        f"snap-{report.halt_tick}")
    rsession = RetrainSession.from_twin(session, hitl)
    report.origin_pose = rsession.origin_pose
    retrain(rsession, agent, replay, priority,
            human_source=scripted_source(detour_keys))
    report.retrain_status = rsession.status
    report.episodes_used = len(rsession.episodes)
    report.human_steps = rsession.human_steps
    report.retrain_env_steps = rsession.total_env_steps
    report.episode_rows = [RETRAIN_CSV_HEADER]
    report.episode_rows += [retrain_csv_row(r) for r in rsession.episodes]
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(report.episode_rows) + "\n")
    say(f"retraining {rsession.status} after {len(rsession.episodes)} episodes, "
        f"{rsession.human_steps} human steps")

    if rsession.status != "solved":
        session.controller.fail_retraining()
        report.transcript = list(session.transcript)
        return report

    if checkpoint_path is not None:
        agent.save(checkpoint_path)
        report.checkpoint_id = os.path.basename(str(checkpoint_path))
    else:
        report.checkpoint_id = f"retrain-{rsession.episode_index}"
    resume(rsession, session, report.checkpoint_id)
    report.resume_pose = physical.pose
    report.resume_exact = tuple(physical.pose) == tuple(rsession.origin_pose)
    say(f"resumed at {physical.pose} with checkpoint {report.checkpoint_id}")

    if retreat_ticks > 0:
        after = session.run(retreat_policy,
                            max_ticks=report.halt_tick + 1 + retreat_ticks)
        report.post_resume_ticks = after.ticks
        report.post_resume_mode = session.mode
        say(f"post-resume drive: {after.ticks} ticks, mode {session.mode}")
    report.transcript = list(session.transcript)
    return report
