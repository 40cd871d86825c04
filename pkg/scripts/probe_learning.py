"""Quick learning probe: empty arena, does the policy find the goal at all.

Sweeps a few exploration and optimizer settings in one process and prints a
compact table. Meant for calibration, not for the benchmark pipeline.
"""

import argparse
import sys
import time

import numpy as np

from twinnav.agent import Hyperparams, TD3Agent, pretrain
from twinnav.buffers import PriorityBuffer, ReplayBuffer
from twinnav.evaluation import evaluate
from twinnav.world import SimParams, WorldSpec


def run(tag: str, episodes: int, seed: int, **hp_over):
    params = SimParams()
    world = WorldSpec(width=10.0, height=8.0, goal=(8.0, 4.0), obstacles=[])
    hp = Hyperparams(replay_capacity=200_000, priority_capacity=200_000, **hp_over)
    agent = TD3Agent(params.state_dim, hp, seed=seed)
    replay = ReplayBuffer(hp.replay_capacity, params.state_dim)
    priority = PriorityBuffer(hp.priority_capacity, params.state_dim,
                              alpha=hp.priority_alpha)
    t0 = time.monotonic()
    stats = pretrain(world, agent, episodes, params=params, seed=seed,
                     replay=replay, priority=priority)
    goals = sum(1 for s in stats if s.done_reason == "goal")
    last50 = stats[-50:]
    goals_last = sum(1 for s in last50 if s.done_reason == "goal")
    rep = evaluate(agent, world, params, trials=20, seed=99)
    mins = (time.monotonic() - t0) / 60.0
    print(f"{tag:28s} goals {goals:3d}/{episodes} last50 {goals_last:2d} "
          f"eval {rep.success_rate:.2f} (col {rep.collision_rate:.2f}) "
          f"{mins:.1f} min", flush=True)
    return rep.success_rate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=150)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    e, s = args.episodes, args.seed
    run("defaults", e, s)
    run("decay10k", e, s, noise_decay_steps=10_000)
    run("decay4k", e, s, noise_decay_steps=4_000)
    run("decay10k-batch100", e, s, noise_decay_steps=10_000, batch=100)
    return 0


if __name__ == "__main__":
    sys.exit(main())
