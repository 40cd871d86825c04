"""Deterministic-policy evaluation: success, collision, and timeout rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .agent import TD3Agent
from .errors import ContractViolation
from .world import SimParams, WorldSpec, build_observation, spawn_episode, step


@dataclass
class TrialRecord:
    trial: int
    spawn_seed: int
    reward: float
    steps: int
    travel_time: float  # simulated seconds
    done_reason: str


@dataclass
class EvalReport:
    trials: int
    successes: int
    collisions: int
    timeouts: int
    success_rate: float
    collision_rate: float
    timeout_rate: float
    mean_travel_time: float  # over successful trials; nan when none succeeded
    records: list = field(default_factory=list)

    def __post_init__(self):
        if self.successes + self.collisions + self.timeouts != self.trials:
            raise ContractViolation("trial outcomes must partition the trial count")


EVAL_CSV_HEADER = "trial,spawn_seed,reward,steps,travel_time,done_reason"


def eval_csv_row(record: TrialRecord) -> str:
    return ",".join([str(record.trial), str(record.spawn_seed), repr(record.reward),
                     str(record.steps), repr(record.travel_time), record.done_reason])


def run_trial(world_spec: WorldSpec, agent: TD3Agent, params: SimParams,
              spawn_seed: int, max_steps: int | None = None) -> tuple:
    """One noise-free episode without learning; the agent is left untouched.

    Returns (reward, steps, done_reason).
    """
    world, robot = spawn_episode(world_spec, spawn_seed, params)
    obs = build_observation(world, robot, (0.0, 0.0), params)
    total = 0.0
    steps = 0
    done_reason = "timeout"
    cap = params.max_steps if max_steps is None else max_steps
    for _ in range(cap):
        action = agent.select_action(obs.vector(), explore=False)
        robot, outcome = step(world, robot, action, params, prev_obs=obs)
        steps += 1
        total += outcome.reward
        obs = outcome.observation
        if outcome.done:
            done_reason = outcome.done_reason
            break
    return total, steps, done_reason


def evaluate(agent: TD3Agent, world_spec: WorldSpec, params: SimParams,
             trials: int, seed: int = 0) -> EvalReport:
    """Seeded independent trials, merged by trial index."""
    if trials <= 0:
        raise ContractViolation("evaluation needs at least one trial")
    records = []
    counts = {"goal": 0, "collision": 0, "timeout": 0}
    for trial in range(trials):
        spawn_seed = seed * 1_000_003 + trial
        reward, steps, done_reason = run_trial(world_spec, agent, params, spawn_seed)
        counts[done_reason] += 1
        records.append(TrialRecord(trial=trial, spawn_seed=spawn_seed, reward=reward,
                                   steps=steps, travel_time=steps * params.dt,
                                   done_reason=done_reason))
    times = [r.travel_time for r in records if r.done_reason == "goal"]
    mean_time = sum(times) / len(times) if times else math.nan
    return EvalReport(
        trials=trials,
        successes=counts["goal"],
        collisions=counts["collision"],
        timeouts=counts["timeout"],
        success_rate=counts["goal"] / trials,
        collision_rate=counts["collision"] / trials,
        timeout_rate=counts["timeout"] / trials,
        mean_travel_time=mean_time,
        records=records,
    )


def report_to_dict(report: EvalReport) -> dict:
    return {
        "trials": report.trials,
        "successes": report.successes,
        "collisions": report.collisions,
        "timeouts": report.timeouts,
        "success_rate": report.success_rate,
        "collision_rate": report.collision_rate,
        "timeout_rate": report.timeout_rate,
        "mean_travel_time": report.mean_travel_time,
    }
