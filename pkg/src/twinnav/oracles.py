"""Fast self-checks against independently computed expectations.

Each check validates one law the rest of the package leans on: analytic
gradients against finite differences, the discounted fixed point against
its closed form, lidar returns against ray-circle algebra, codec round
trips, the Polyak blend, the teleop table, and the human-budget decay.
They are cheap enough to run before every experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nets
from .hitl import TELEOP_TABLE, budget_for_episode, HitlParams
from .protocol import (
    ActionCommand,
    HaltControl,
    HumanCommand,
    ObstacleEstimate,
    ObstacleReport,
    RetrainBegin,
    RetrainEnd,
    SensorFrame,
    StateSync,
    decode_line,
    encode,
)
from .world import Obstacle, SimParams, WorldSpec, lidar_scan


@dataclass
class OracleResult:
    name: str
    ok: bool
    detail: str


def _finite_diff(loss, tree, h: float = 1e-6):
    """Central-difference gradient with the same structure as the params."""

    def grad_leaf(leaf):
        g = np.zeros_like(leaf)
        it = np.nditer(leaf, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            keep = leaf[idx]
            leaf[idx] = keep + h
            up = loss()
            leaf[idx] = keep - h
            down = loss()
            leaf[idx] = keep
            g[idx] = (up - down) / (2.0 * h)
        return g

    return nets.tree_map(grad_leaf, tree)


def _max_grad_gap(analytic, numeric) -> float:
    gap = 0.0
    for a, n in zip(nets.leaves(analytic), nets.leaves(numeric)):
        gap = max(gap, float(np.max(np.abs(a - n))))
    return gap


def check_actor_gradient(seed: int = 0, tol: float = 1e-4) -> OracleResult:
    rng = np.random.default_rng(seed)
    actor = nets.init_actor(6, 10, seed)
    states = rng.normal(size=(3, 6))
    weights = rng.normal(size=(3, 2))

    def loss():
        return float(np.sum(weights * nets.actor_forward(actor, states)))

    _, cache = nets.actor_forward_cached(actor, states)
    analytic, _ = nets.actor_backward(actor, cache, weights)
    gap = _max_grad_gap(analytic, _finite_diff(loss, actor))
    return OracleResult("actor-gradient", gap < tol, f"max gap {gap:.3e}")


def check_critic_gradient(seed: int = 0, tol: float = 1e-4) -> OracleResult:
    rng = np.random.default_rng(seed)
    critic = nets.init_critic(6, 2, 10, seed)
    states = rng.normal(size=(3, 6))
    actions = rng.uniform(-1, 1, size=(3, 2))
    weights = rng.normal(size=3)

    def loss():
        return float(np.sum(weights * nets.critic_forward(critic, states, actions)))

    _, cache = nets.critic_forward_cached(critic, states, actions)
    analytic, _, _ = nets.critic_backward(critic, cache, weights)
    gap = _max_grad_gap(analytic, _finite_diff(loss, critic))
    return OracleResult("critic-gradient", gap < tol, f"max gap {gap:.3e}")


def check_discount_fixed_point(gamma: float = 0.99999, reward: float = 1.0,
                               tol: float = 1e-10) -> OracleResult:
    """Iterating q <- r + gamma*q must reach r / (1 - gamma)."""
    expected = reward / (1.0 - gamma)
    q = 0.0
    for _ in range(5_000_000):
        nxt = reward + gamma * q
        if nxt == q:
            break
        q = nxt
    gap = abs(q - expected) / expected
    return OracleResult("discount-fixed-point", gap < tol,
                        f"relative gap {gap:.3e}")


def check_lidar_geometry(tol: float = 1e-9) -> OracleResult:
    """Beams through a lone circle must match ray-circle algebra exactly."""
    params = SimParams(n_beams=9, fov=math.pi, max_range=10.0)
    world = WorldSpec(width=40.0, height=40.0, goal=(35.0, 20.0),
                      obstacles=[Obstacle("circle", 24.0, 20.0, radius=1.5)])
    pose = (20.0, 20.0, 0.0)
    ranges = lidar_scan(world, pose, params)
    offsets = np.linspace(-0.5 * params.fov, 0.5 * params.fov, params.n_beams)
    gap = 0.0
    for r, off in zip(ranges, offsets):
        d, rad = 4.0, 1.5
        b = -d * math.cos(off)
        disc = b * b - (d * d - rad * rad)
        if disc >= 0.0 and -b - math.sqrt(disc) >= 0.0:
            expected = -b - math.sqrt(disc)
        else:
            expected = params.max_range
        gap = max(gap, abs(float(r) - expected))
    return OracleResult("lidar-geometry", gap < tol, f"max gap {gap:.3e}")


def check_codec(seed: int = 0, rounds: int = 200) -> OracleResult:
    rng = np.random.default_rng(seed)
    makers = [
        lambda t: SensorFrame("physical", t, tuple(rng.uniform(0, 10, 4)),
                              tuple(rng.uniform(0, 5, 3))),
        lambda t: ObstacleReport("physical", t, (
            ObstacleEstimate(tuple(rng.uniform(0, 5, 2)),
                             float(rng.uniform(0.05, 1)), "near"),)),
        lambda t: ActionCommand("twin", t, float(rng.uniform(-1, 1)),
                                float(rng.uniform(-1, 1))),
        lambda t: HaltControl("twin", t, "proximity"),
        lambda t: RetrainBegin("twin", t, f"snap-{t}"),
        lambda t: RetrainEnd("twin", t, f"ckpt-{t}"),
        lambda t: HumanCommand("console", t, "f", 0.5, 0.0),
        lambda t: StateSync("physical", t, tuple(rng.uniform(0, 5, 3))),
    ]
    for i in range(rounds):
        msg = makers[i % len(makers)](i)
        back = decode_line(encode(msg).rstrip(b"\n"))
        if back != msg:
            return OracleResult("codec-round-trip", False,
                                f"round {i}: {msg} != {back}")
    return OracleResult("codec-round-trip", True, f"{rounds} messages")


def check_teleop_table() -> OracleResult:
    expected = {
        "w": (0.5, 0.5), "z": (-0.5, 0.5), "a": (0.5, -0.5), "d": (-0.5, -0.5),
        "l": (0.0, -0.5), "r": (0.0, 0.5), "f": (0.5, 0.0), "b": (-0.5, 0.0),
        "s": (0.0, 0.0),
    }
    ok = TELEOP_TABLE == expected
    return OracleResult("teleop-table", ok,
                        "9 keys match" if ok else "table drifted")


def check_polyak(seed: int = 0, tol: float = 1e-15) -> OracleResult:
    rng = np.random.default_rng(seed)
    net = nets.init_actor(4, 6, seed)
    target = nets.init_actor(4, 6, seed + 1)
    tau = 0.005
    expected = nets.tree_map(lambda a, b: tau * a + (1.0 - tau) * b, net, target)
    blended = nets.soft_update(net, target, tau)
    gap = _max_grad_gap(expected, blended)
    return OracleResult("polyak-blend", gap < tol, f"max gap {gap:.3e}")


def check_budget_decay() -> OracleResult:
    expected = [50, 40, 32, 25, 20, 16, 13, 10, 8, 6, 5, 4, 3, 2, 2, 1, 1, 1, 0]
    got = [budget_for_episode(HitlParams(), k) for k in range(len(expected))]
    ok = got == expected
    return OracleResult("budget-decay", ok,
                        "19 episodes match" if ok else f"got {got}")


def run_all() -> list:
    return [
        check_actor_gradient(),
        check_critic_gradient(),
        check_discount_fixed_point(),
        check_lidar_geometry(),
        check_codec(),
        check_teleop_table(),
        check_polyak(),
        check_budget_decay(),
    ]
