"""Inspect what a trained desk policy actually does on its failed trials.

Loads a checkpoint saved by run_desk_benchmark.py, replays the evaluation
seeds deterministically, and dumps per-trial outcomes plus step traces for
the first few timeouts: position, goal distance, commanded action, and
minimum lidar range, every 25 steps. Diagnostic only.
"""

import argparse
import sys
import os

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from twinnav.agent import TD3Agent
from twinnav.scenarios import desk_world
from twinnav.world import SimParams, build_observation, goal_distance, spawn_episode, step

def trace_trial(world_spec, agent, params, spawn_seed, every=25):
    world, robot = spawn_episode(world_spec, spawn_seed, params)
    obs = build_observation(world, robot, (0.0, 0.0), params)
    rows = []
    done_reason = "timeout"
    for i in range(params.max_steps):
        action = agent.select_action(obs.vector(), explore=False)
        robot, outcome = step(world, robot, action, params, prev_obs=obs)
        if i % every == 0 or outcome.done:
            rows.append((i, robot.x, robot.y, robot.heading, float(action[0]),
                         float(action[1]), obs.d, float(np.min(obs.z)) * params.max_range))
        obs = outcome.observation
        if outcome.done:
            done_reason = outcome.done_reason
            break
    return done_reason, rows, (world, robot)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("checkpoint")
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--seed", type=int, default=9)
    parser.add_argument("--traces", type=int, default=4)
    args = parser.parse_args()

    params = SimParams()
    world_spec = desk_world()
    agent = TD3Agent.load(args.checkpoint)
    print(f"loaded agent: {agent.env_step_count} env steps, hidden {agent.hp.hidden}, "
          f"gamma {agent.hp.gamma}")

    outcomes = {}
    failures = []
    spawn_seeds = [args.seed * 1_000_003 + trial for trial in range(args.trials)]
    for trial, spawn_seed in enumerate(spawn_seeds):
        done_reason, rows, (world, robot) = trace_trial(world_spec, agent, params, spawn_seed)
        outcomes[done_reason] = outcomes.get(done_reason, 0) + 1
        start = rows[0]
        end = rows[-1]
        print(f"trial {trial:2d} seed {spawn_seed:10d}: {done_reason:9s} "
              f"start ({start[1]:.1f},{start[2]:.1f}) end ({end[1]:.2f},{end[2]:.2f}) "
              f"d_end {goal_distance(world, robot.x, robot.y):.2f}")
        if done_reason != "goal" and len(failures) < args.traces:
            failures.append((trial, rows))
    print("outcomes:", outcomes)

    for trial, rows in failures:
        print(f"\n--- trace of failed trial {trial} ---")
        print(f"{'step':>5} {'x':>6} {'y':>6} {'hdg':>6} {'a1':>6} {'a2':>6} {'d':>6} {'min_r':>6}")
        for (i, x, y, h, a1, a2, d, mr) in rows:
            print(f"{i:5d} {x:6.2f} {y:6.2f} {h:6.2f} {a1:6.2f} {a2:6.2f} {d:6.2f} {mr:6.2f}")


if __name__ == "__main__":
    main()
