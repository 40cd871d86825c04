"""Desk-scale benchmark: pre-train, evaluate, then the trap comparison.

Trains a policy on the desk arena, measures its deterministic success rate,
then compares plain deployment against the gated-and-retrained system on a
held-out arena whose obstacle sits 1.1 m ahead of the start, well inside the
2 m clearance every training spawn guarantees. The comparison holds the
environment-step budget equal: whatever the retrained branch consumes in the
sandbox, the plain branch gets as additional desk-arena training.

Run from the repository root:

    python scripts/run_desk_benchmark.py --out runs/bench
    python scripts/run_desk_benchmark.py --quick   # smoke-test sizing
"""

import argparse
import copy
import json
import os
import sys
import time

from twinnav.agent import Hyperparams, TD3Agent, pretrain, run_episode
from twinnav.buffers import PriorityBuffer, ReplayBuffer
from twinnav.evaluation import evaluate, report_to_dict
from twinnav.scenarios import desk_world, pocket_trap, run_retrain_demo, trap_world
from twinnav.twin import PhysicalProxy, TwinParams, TwinSession, VirtualMirror
from twinnav.world import SimParams


def gated_run(agent, world, params, twin_params, max_ticks=600):
    """Deploy the policy through the gate with no retraining available."""
    physical = PhysicalProxy(world, params, twin_params, spawn_seed=0)
    session = TwinSession(physical, VirtualMirror(world, params, twin_params))

    def policy(vector):
        return agent.select_action(vector, explore=False)

    result = session.run(policy, max_ticks=max_ticks)
    return session, result


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=400)
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--noise-decay", type=int, default=40_000,
                        help="exploration decay horizon in env steps")
    parser.add_argument("--capacity", type=int, default=120_000,
                        help="buffer capacity (sized to the run, keeps copies cheap)")
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--batch", type=int, default=40)
    parser.add_argument("--gamma", type=float, default=None,
                        help="override the discount for this run")
    parser.add_argument("--updates", type=int, default=1,
                        help="gradient steps per environment step")
    parser.add_argument("--noise0", type=float, default=None,
                        help="override the initial exploration sigma")
    parser.add_argument("--noise-floor", type=float, default=None,
                        help="override the exploration sigma floor")
    parser.add_argument("--actor-lr", type=float, default=None)
    parser.add_argument("--critic-lr", type=float, default=None)
    parser.add_argument("--out", default=None, help="directory for CSVs and the summary")
    parser.add_argument("--quick", action="store_true",
                        help="tiny sizing for a smoke run")
    parser.add_argument("--skip-trap", action="store_true",
                        help="stop after desk training and evaluation")
    args = parser.parse_args(argv)
    if args.quick:
        args.episodes, args.trials = 60, 10

    params = SimParams()
    twin_params = TwinParams()
    hp_kwargs = dict(hidden=args.hidden, batch=args.batch,
                     noise_decay_steps=args.noise_decay,
                     replay_capacity=args.capacity,
                     priority_capacity=args.capacity,
                     updates_per_step=args.updates)
    if args.gamma is not None:
        hp_kwargs["gamma"] = args.gamma
    if args.noise0 is not None:
        hp_kwargs["initial_noise"] = args.noise0
    if args.noise_floor is not None:
        hp_kwargs["min_noise"] = args.noise_floor
    if args.actor_lr is not None:
        hp_kwargs["actor_lr"] = args.actor_lr
    if args.critic_lr is not None:
        hp_kwargs["critic_lr"] = args.critic_lr
    hp = Hyperparams(**hp_kwargs)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    summary = {"episodes": args.episodes, "seed": args.seed,
               "noise_decay": args.noise_decay, "hidden": args.hidden,
               "batch": args.batch, "gamma": hp.gamma,
               "updates_per_step": args.updates,
               "initial_noise": hp.initial_noise, "min_noise": hp.min_noise,
               "actor_lr": hp.actor_lr, "critic_lr": hp.critic_lr}

    def say(text):
        print(text, flush=True)

    # ---------------------------------------------------- desk pre-training
    agent = TD3Agent(params.state_dim, hp, seed=args.seed)
    replay = ReplayBuffer(args.capacity, params.state_dim)
    priority = PriorityBuffer(args.capacity, params.state_dim, alpha=hp.priority_alpha)
    t0 = time.monotonic()
    stats = pretrain(desk_world(), agent, args.episodes, params=params,
                     seed=args.seed, replay=replay, priority=priority,
                     csv_path=os.path.join(args.out, "episodes.csv") if args.out else None)
    train_minutes = (time.monotonic() - t0) / 60.0
    goals = sum(1 for s in stats if s.done_reason == "goal")
    say(f"trained {len(stats)} episodes in {train_minutes:.1f} min; "
        f"{goals} training episodes reached the goal; "
        f"{agent.env_step_count} env steps")
    summary["train_minutes"] = round(train_minutes, 2)
    summary["train_env_steps"] = agent.env_step_count
    if args.out:
        agent.save(os.path.join(args.out, "desk_checkpoint.npz"))

    report = evaluate(agent, desk_world(), params, trials=args.trials, seed=9)
    say(f"desk eval: success {report.success_rate:.2f} collision "
        f"{report.collision_rate:.2f} timeout {report.timeout_rate:.2f} "
        f"mean travel {report.mean_travel_time:.1f} s")
    summary["desk_eval"] = report_to_dict(report)
    if args.skip_trap:
        finish(summary, args)
        return 0

    # ------------------------------------------------- plain on the trap
    trap = held_out_trap()
    plain_before = evaluate(agent, trap, params, trials=1, seed=1)
    say(f"plain policy on the trap (pre top-up): "
        f"{plain_before.records[0].done_reason}")

    session, gated = gated_run(agent, trap, params, twin_params)
    say(f"gated deployment on the trap: mode {session.mode}, "
        f"halts {gated.halts}, done {gated.done_reason}")
    summary["gated_halts"] = gated.halts
    summary["gated_done"] = gated.done_reason

    # --------------------------------- retrained branch (warm buffers)
    retrained = copy.deepcopy(agent)
    r_replay = copy.deepcopy(replay)
    r_priority = copy.deepcopy(priority)
    t1 = time.monotonic()
    demo = run_retrain_demo(retrained, r_replay, r_priority, world_spec=trap,
                            params=params, twin_params=twin_params,
                            seed=args.seed, log=say,
                            csv_path=os.path.join(args.out, "retrain.csv") if args.out else None)
    say(f"retraining took {(time.monotonic() - t1) / 60.0:.1f} min, "
        f"status {demo.retrain_status}, {demo.episodes_used} episodes, "
        f"{demo.retrain_env_steps} env steps, resume exact {demo.resume_exact}")
    summary["retrain_status"] = demo.retrain_status
    summary["retrain_episodes"] = demo.episodes_used
    summary["retrain_env_steps"] = demo.retrain_env_steps

    # ------------------------------ plain branch topped up to equal budget
    plain = copy.deepcopy(agent)
    p_replay = copy.deepcopy(replay)
    p_priority = copy.deepcopy(priority)
    target_steps = retrained.env_step_count
    episode = args.episodes
    while plain.env_step_count < target_steps:
        run_episode(desk_world(), plain, params,
                    spawn_seed=args.seed * 1_000_003 + episode, replay=p_replay,
                    priority=p_priority)
        episode += 1
    say(f"plain branch topped up to {plain.env_step_count} env steps "
        f"({episode - args.episodes} extra desk episodes) vs retrained "
        f"{retrained.env_step_count}")
    summary["plain_env_steps"] = plain.env_step_count
    summary["retrained_env_steps"] = retrained.env_step_count

    plain_eval = evaluate(plain, trap, params, trials=args.trials, seed=1)
    retrained_eval = evaluate(retrained, trap, params, trials=args.trials, seed=1)
    say(f"trap eval at equal budget: plain success {plain_eval.success_rate:.2f} "
        f"({plain_eval.records[0].done_reason}), retrained success "
        f"{retrained_eval.success_rate:.2f} ({retrained_eval.records[0].done_reason})")
    summary["trap_plain"] = report_to_dict(plain_eval)
    summary["trap_retrained"] = report_to_dict(retrained_eval)

    # --------------------------------------- lifecycle demo, named scenario
    life_agent = copy.deepcopy(agent)
    l_replay = copy.deepcopy(replay)
    l_priority = copy.deepcopy(priority)
    life = run_retrain_demo(life_agent, l_replay, l_priority,
                            world_spec=trap_world(), params=params,
                            twin_params=twin_params, seed=args.seed)
    say(f"lifecycle demo on the named trap arena: {life.retrain_status} in "
        f"{life.episodes_used} episodes, halt tick {life.halt_tick}, "
        f"resume exact {life.resume_exact}")
    summary["lifecycle_status"] = life.retrain_status
    summary["lifecycle_episodes"] = life.episodes_used

    finish(summary, args)
    return 0


def finish(summary, args):
    print(json.dumps(summary, indent=2, sort_keys=True), flush=True)
    if args.out:
        with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


if __name__ == "__main__":
    sys.exit(main())
