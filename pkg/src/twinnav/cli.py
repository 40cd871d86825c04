"""Command line driver.

Subcommands: train, eval, twin-serve, twin-physical, retrain-demo,
oracle-check. Exit codes: 0 success, 1 usage, 2 contract violation,
3 a retraining session ended unsolved (or a served session stayed halted).

Configuration layers, lowest to highest precedence: built-in defaults, a
JSON file via --config, repeated --set section.key=value overrides, then
explicit flags like --seed or --episodes.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
import time

from .agent import TD3Agent, pretrain
from .buffers import PriorityBuffer, ReplayBuffer
from .config import RunConfig, load_config, save_config
from .errors import (
    EXIT_CONTRACT,
    EXIT_OK,
    EXIT_UNSOLVED,
    EXIT_USAGE,
    ContractViolation,
    DecodeError,
    SpawnFailure,
)
from .evaluation import EVAL_CSV_HEADER, eval_csv_row, evaluate, report_to_dict
from .hitl import RetrainSession, retrain
from .protocol import save_transcript
from .scenarios import desk_world, run_retrain_demo, trap_world
from .service import (
    ConsoleHub,
    connect_physical,
    open_listener,
    run_physical,
    serve_twin,
)
from . import oracles
from .world import load_world


def _say(text: str) -> None:
    print(text, flush=True)


def _load_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None),
                      getattr(args, "overrides", ()) or ())
    if getattr(args, "seed", None) is not None:
        cfg.run.seed = args.seed
    return cfg


def _world_or(args, fallback):
    if getattr(args, "world", None):
        return load_world(args.world)
    return fallback()


def _fresh_buffers(cfg: RunConfig):
    dim = cfg.sim.state_dim
    replay = ReplayBuffer(cfg.agent.replay_capacity, dim)
    priority = PriorityBuffer(cfg.agent.priority_capacity, dim,
                              alpha=cfg.agent.priority_alpha)
    return replay, priority


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.episodes is not None:
        cfg.run.episodes = args.episodes
    world = _world_or(args, desk_world)
    os.makedirs(args.out, exist_ok=True)
    save_config(cfg, os.path.join(args.out, "config.json"))
    agent = TD3Agent(cfg.sim.state_dim, cfg.agent, seed=cfg.run.seed)
    replay, priority = _fresh_buffers(cfg)

    def log(entry):
        if entry.episode % 25 == 0 or entry.episode == cfg.run.episodes - 1:
            _say(f"episode {entry.episode}: reward {entry.reward:.1f} "
                 f"steps {entry.steps} ({entry.done_reason})")

    stats = pretrain(world, agent, cfg.run.episodes, params=cfg.sim,
                     seed=cfg.run.seed, replay=replay, priority=priority,
                     csv_path=os.path.join(args.out, "episodes.csv"),
                     log=log if not args.quiet else None)
    checkpoint = os.path.join(args.out, "checkpoint.npz")
    agent.save(checkpoint)
    goals = sum(1 for s in stats if s.done_reason == "goal")
    _say(f"trained {len(stats)} episodes ({goals} reached the goal); "
         f"checkpoint at {checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    if args.trials is not None:
        cfg.run.trials = args.trials
    world = _world_or(args, desk_world)
    agent = TD3Agent.load(args.checkpoint)
    report = evaluate(agent, world, cfg.sim, trials=cfg.run.trials,
                      seed=cfg.run.seed)
    _say(json.dumps(report_to_dict(report), indent=2, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        rows = [EVAL_CSV_HEADER] + [eval_csv_row(r) for r in report.records]
        with open(os.path.join(args.out, "eval.csv"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def _make_retrainer(agent, cfg, out_dir, hub):
    """Service-side retraining: sandbox episodes fed by console teleop keys."""
    replay, priority = _fresh_buffers(cfg)
    counter = {"n": 0}

    def human_source(episode, step_index, obs):
        return hub.pop_key() if hub is not None else None

    def retrainer(controller, cause, emit_progress):
        session = RetrainSession(controller.mirror.world, controller.mirror.pose,
                                 controller.mirror.params, cfg.hitl)

        def on_step(episode, step_index, robot, arb):
            if step_index % 10 == 0:
                emit_progress(robot.pose)

        retrain(session, agent, replay, priority,
                human_source=human_source if hub is not None else None,
                on_step=on_step)
        _say(f"retraining {session.status} after {len(session.episodes)} episodes")
        if session.status != "solved":
            return None
        counter["n"] += 1
        name = f"retrain-{counter['n']}.npz"
        if out_dir is not None:
            path = os.path.join(out_dir, name)
            agent.save(path)
            _say(f"saved {path}")
        return name

    return retrainer


def cmd_twin_serve(args) -> int:
    cfg = _load_config(args)
    world = load_world(args.world)
    agent = TD3Agent.load(args.checkpoint)

    def policy(vector):
        return agent.select_action(vector, explore=False)

    hub = None
    if args.console:
        hub = ConsoleHub()
        hub.serve(open_listener(args.console))
        _say(f"console on ws://{args.console}")
    retrainer = None
    if not args.no_retrain:
        retrainer = _make_retrainer(agent, cfg, args.out, hub)
    listener = open_listener(args.listen)
    _say(f"listening on {args.listen}")
    try:
        report = serve_twin(listener, world, cfg.sim, cfg.twin, policy,
                            retrainer=retrainer,
                            transcript_path=args.transcript,
                            observer=hub.broadcast if hub else None)
    finally:
        listener.close()
    _say(f"session over: mode {report.mode}, {report.ticks} ticks, "
         f"{report.commands} commands, halts {report.halts}")
    return EXIT_OK if report.mode == "deploy" else EXIT_UNSOLVED


def cmd_twin_physical(args) -> int:
    cfg = _load_config(args)
    world = load_world(args.world)
    sock = None
    deadline = time.monotonic() + args.connect_timeout
    while True:
        try:
            sock = connect_physical(args.connect)
            break
        except OSError:
            if time.monotonic() >= deadline:
                raise ContractViolation(f"could not connect to {args.connect}")
            time.sleep(0.1)
    report = run_physical(sock, world, cfg.sim, cfg.twin,
                          spawn_seed=cfg.run.seed, max_ticks=cfg.run.max_ticks,
                          on_tick=None)
    _say(f"episode over: {report.done_reason} after {report.ticks} ticks, "
         f"halts {report.halts}, final pose {report.final_pose}")
    if report.done_reason == "collision":
        print("collision under twin control", file=sys.stderr)
        return EXIT_CONTRACT
    if report.halted:
        return EXIT_UNSOLVED
    return EXIT_OK


def cmd_retrain_demo(args) -> int:
    cfg = _load_config(args)
    world = _world_or(args, trap_world)
    os.makedirs(args.out, exist_ok=True)
    save_config(cfg, os.path.join(args.out, "config.json"))
    replay, priority = _fresh_buffers(cfg)
    if args.checkpoint:
        agent = TD3Agent.load(args.checkpoint)
    else:
        agent = TD3Agent(cfg.sim.state_dim, cfg.agent, seed=cfg.run.seed)
    if args.pretrain_episodes:
        _say(f"pre-training {args.pretrain_episodes} episodes on the desk arena")
        pretrain(desk_world(), agent, args.pretrain_episodes, params=cfg.sim,
                 seed=cfg.run.seed, replay=replay, priority=priority)
    if cfg.run.cold_start:
        replay, priority = _fresh_buffers(cfg)
    report = run_retrain_demo(
        agent, replay, priority, world_spec=world, params=cfg.sim,
        twin_params=cfg.twin, hitl=cfg.hitl, seed=cfg.run.seed,
        checkpoint_path=os.path.join(args.out, "checkpoint.npz"),
        csv_path=os.path.join(args.out, "retrain.csv"),
        log=_say)
    save_transcript(os.path.join(args.out, "transcript.ndjson"),
                    report.transcript)
    _say(f"demo {report.retrain_status}: halt at tick {report.halt_tick} "
         f"({report.halt_cause}), {report.episodes_used} retraining episodes, "
         f"{report.human_steps} human steps, resume exact: {report.resume_exact}")
    return EXIT_OK if report.solved else EXIT_UNSOLVED


def cmd_oracle_check(args) -> int:
    results = oracles.run_all()
    for res in results:
        _say(f"{'PASS' if res.ok else 'FAIL'} {res.name}: {res.detail}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_CONTRACT


def _add_config_flags(sub) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="SECTION.KEY=VALUE",
                     help="override one config value (repeatable)")
    sub.add_argument("--seed", type=int, help="run seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twinnav",
        description="digital-twin navigation: training, evaluation, "
                    "gated deployment, human-assisted retraining")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="pre-train a policy")
    _add_config_flags(train)
    train.add_argument("--world", help="world JSON file (default: desk arena)")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--episodes", type=int, help="training episodes")
    train.add_argument("--quiet", action="store_true")
    train.set_defaults(func=cmd_train)

    evl = commands.add_parser("eval", help="evaluate a checkpoint")
    _add_config_flags(evl)
    evl.add_argument("--world", help="world JSON file (default: desk arena)")
    evl.add_argument("--checkpoint", required=True, help="policy checkpoint")
    evl.add_argument("--trials", type=int, help="evaluation trials")
    evl.add_argument("--out", help="directory for eval.csv and report.json")
    evl.set_defaults(func=cmd_eval)

    serve = commands.add_parser("twin-serve", help="serve one gated session")
    _add_config_flags(serve)
    serve.add_argument("--world", required=True, help="world JSON file")
    serve.add_argument("--checkpoint", required=True, help="policy checkpoint")
    serve.add_argument("--listen", required=True, metavar="HOST:PORT")
    serve.add_argument("--transcript", help="write the session transcript here")
    serve.add_argument("--console", metavar="HOST:PORT",
                       help="also serve a browser console on this address")
    serve.add_argument("--out", help="directory for retraining checkpoints")
    serve.add_argument("--no-retrain", action="store_true",
                       help="halt permanently instead of retraining")
    serve.set_defaults(func=cmd_twin_serve)

    phys = commands.add_parser("twin-physical",
                               help="run the physical side against a twin")
    _add_config_flags(phys)
    phys.add_argument("--world", required=True, help="world JSON file")
    phys.add_argument("--connect", required=True, metavar="HOST:PORT")
    phys.add_argument("--connect-timeout", type=float, default=10.0)
    phys.set_defaults(func=cmd_twin_physical)

    demo = commands.add_parser("retrain-demo",
                               help="halt, retrain, resume, end to end")
    _add_config_flags(demo)
    demo.add_argument("--world", help="world JSON file (default: trap arena)")
    demo.add_argument("--out", required=True, help="output directory")
    demo.add_argument("--checkpoint", help="start from this policy checkpoint")
    demo.add_argument("--pretrain-episodes", type=int,
                      help="pre-train this many desk episodes first")
    demo.set_defaults(func=cmd_retrain_demo)

    oracle = commands.add_parser("oracle-check",
                                 help="verify core laws against independent oracles")
    oracle.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (ContractViolation, DecodeError, SpawnFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConnectionError, socket.timeout) as exc:
        print(f"error: connection failed: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
