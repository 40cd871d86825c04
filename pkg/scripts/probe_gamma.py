"""Discount sweep on the empty arena with per-phase Q diagnostics."""

import sys
import time

import numpy as np

from twinnav import nets
from twinnav.agent import Hyperparams, TD3Agent, run_episode
from twinnav.buffers import PriorityBuffer, ReplayBuffer
from twinnav.evaluation import evaluate
from twinnav.world import SimParams, WorldSpec


def run(tag, gamma, episodes=150, seed=0, **hp_over):
    params = SimParams()
    world = WorldSpec(width=10.0, height=8.0, goal=(8.0, 4.0), obstacles=[])
    hp = Hyperparams(gamma=gamma, noise_decay_steps=10_000,
                     replay_capacity=200_000, priority_capacity=200_000,
                     **hp_over)
    agent = TD3Agent(params.state_dim, hp, seed=seed)
    replay = ReplayBuffer(hp.replay_capacity, params.state_dim)
    priority = PriorityBuffer(hp.priority_capacity, params.state_dim,
                              alpha=hp.priority_alpha)
    probe_states = None
    t0 = time.monotonic()
    reasons = []
    for ep in range(episodes):
        total, steps, done_reason = run_episode(
            world, agent, params, spawn_seed=seed * 1_000_003 + ep,
            replay=replay, priority=priority)
        reasons.append(done_reason)
        if probe_states is None and len(replay) > 200:
            probe_states = replay.sample_uniform(64, np.random.default_rng(7)).states
        if (ep + 1) % 50 == 0 and probe_states is not None:
            acts = nets.actor_forward(agent.actor, probe_states)
            q = nets.critic_forward(agent.critic1, probe_states, acts)
            hist = {r: reasons[-50:].count(r) for r in set(reasons[-50:])}
            print(f"  {tag} ep {ep+1}: meanQ {np.mean(q):9.2f} "
                  f"sigma {agent.current_noise():.2f} last50 {hist}", flush=True)
    rep = evaluate(agent, world, params, trials=20, seed=99)
    mins = (time.monotonic() - t0) / 60.0
    print(f"{tag:20s} eval {rep.success_rate:.2f} (col {rep.collision_rate:.2f} "
          f"to {rep.timeout_rate:.2f}) {mins:.1f} min", flush=True)


def main():
    run("gamma-0.99999", 0.99999)
    run("gamma-0.999", 0.999)
    run("gamma-0.99", 0.99)
    return 0


if __name__ == "__main__":
    sys.exit(main())
