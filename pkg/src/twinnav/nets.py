"""Minimal dense-network engine for the actor and the two-pathway critic.

Everything is a plain function over value-semantic parameter dataclasses, in
float64. The actor is a 3-layer MLP (ReLU, ReLU, tanh) emitting two bounded
action components. The critic embeds the state and the action through
separate input layers, concatenates the two embeddings, and passes the joint
features through a combining hidden layer into an affine scalar Q head. The
joint layer is what lets the Q surface couple state and action; a critic
whose pathways only meet by summing two scalar heads ranks actions the same
way in every state, and a policy trained against it collapses to a constant
command. Backward passes are hand-written analytic gradients against caches
recorded by the forward passes.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np

from .errors import ContractViolation


@dataclass
class LayerParams:
    weights: np.ndarray  # [fan_out, fan_in]
    bias: np.ndarray  # [fan_out]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ContractViolation("layer weights must be 2-d and bias 1-d")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ContractViolation("bias length must equal weight row count")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class ActorParams:
    l1: LayerParams
    l2: LayerParams
    l3: LayerParams

    def __post_init__(self):
        if self.l1.fan_out != self.l2.fan_in or self.l2.fan_out != self.l3.fan_in:
            raise ContractViolation("actor layer dims do not chain")
        if self.l3.fan_out != 2:
            raise ContractViolation("actor output dim must be 2")

    @property
    def state_dim(self) -> int:
        return self.l1.fan_in


@dataclass
class CriticParams:
    state_in: LayerParams  # state embedding, ReLU
    action_in: LayerParams  # action embedding, ReLU
    merge: LayerParams  # joint features over both embeddings, ReLU
    head: LayerParams  # affine scalar Q

    def __post_init__(self):
        if self.merge.fan_in != self.state_in.fan_out + self.action_in.fan_out:
            raise ContractViolation("critic merge layer must consume both embeddings")
        if self.merge.fan_out != self.head.fan_in:
            raise ContractViolation("critic merge/head dims do not chain")
        if self.head.fan_out != 1:
            raise ContractViolation("critic head must be scalar")

    @property
    def state_dim(self) -> int:
        return self.state_in.fan_in

    @property
    def action_dim(self) -> int:
        return self.action_in.fan_in


def leaves(tree) -> Iterator[np.ndarray]:
    """Depth-first iterator over every parameter array in a params dataclass."""
    if isinstance(tree, np.ndarray):
        yield tree
    elif isinstance(tree, LayerParams):
        yield tree.weights
        yield tree.bias
    elif isinstance(tree, (tuple, list)):
        for item in tree:
            yield from leaves(item)
    else:
        for f in fields(tree):
            yield from leaves(getattr(tree, f.name))


def tree_map(fn, tree, *rest):
    """Rebuild a params structure by applying fn leaf-wise across trees."""
    if isinstance(tree, np.ndarray):
        return fn(tree, *rest)
    if isinstance(tree, LayerParams):
        return LayerParams(
            fn(tree.weights, *(r.weights for r in rest)),
            fn(tree.bias, *(r.bias for r in rest)),
        )
    if isinstance(tree, tuple):
        return tuple(tree_map(fn, t, *r) for t, *r in zip(tree, *rest))
    if isinstance(tree, list):
        return [tree_map(fn, t, *r) for t, *r in zip(tree, *rest)]
    kwargs = {}
    for f in fields(tree):
        kwargs[f.name] = tree_map(fn, getattr(tree, f.name), *(getattr(r, f.name) for r in rest))
    return type(tree)(**kwargs)


def tree_copy(tree):
    return tree_map(np.copy, tree)


def assert_all_finite(tree, what: str = "parameters") -> None:
    for leaf in leaves(tree):
        if not np.all(np.isfinite(leaf)):
            raise ContractViolation(f"non-finite entries in {what}")


# ---------------------------------------------------------------------------
# initialization

def init_layer(fan_in: int, fan_out: int, rng: np.random.Generator) -> LayerParams:
    if fan_in <= 0 or fan_out <= 0:
        raise ContractViolation("layer dims must be positive")
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    b = rng.uniform(-bound, bound, size=fan_out)
    return LayerParams(w, b)


def init_actor(state_dim: int, hidden: int, seed) -> ActorParams:
    rng = np.random.default_rng(seed)
    return ActorParams(
        init_layer(state_dim, hidden, rng),
        init_layer(hidden, hidden, rng),
        init_layer(hidden, 2, rng),
    )


def init_critic(state_dim: int, action_dim: int, hidden: int, seed) -> CriticParams:
    rng = np.random.default_rng(seed)
    return CriticParams(
        state_in=init_layer(state_dim, hidden, rng),
        action_in=init_layer(action_dim, hidden, rng),
        merge=init_layer(2 * hidden, hidden, rng),
        head=init_layer(hidden, 1, rng),
    )


# ---------------------------------------------------------------------------
# forward passes

def _as_batch(x, dim: int, what: str):
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ContractViolation(f"{what} has shape {np.asarray(x).shape}, expected (..., {dim})")
    return arr, squeeze


@dataclass
class ActorCache:
    states: np.ndarray
    pre1: np.ndarray
    h1: np.ndarray
    pre2: np.ndarray
    h2: np.ndarray
    actions: np.ndarray


def actor_forward_cached(params: ActorParams, states) -> tuple:
    states, squeeze = _as_batch(states, params.state_dim, "state")
    pre1 = states @ params.l1.weights.T + params.l1.bias
    h1 = np.maximum(pre1, 0.0)
    pre2 = h1 @ params.l2.weights.T + params.l2.bias
    h2 = np.maximum(pre2, 0.0)
    pre3 = h2 @ params.l3.weights.T + params.l3.bias
    actions = np.tanh(pre3)
    cache = ActorCache(states, pre1, h1, pre2, h2, actions)
    return (actions[0] if squeeze else actions), cache


def actor_forward(params: ActorParams, state) -> np.ndarray:
    actions, _ = actor_forward_cached(params, state)
    return actions


@dataclass
class CriticCache:
    states: np.ndarray
    actions: np.ndarray
    pre_s: np.ndarray
    h_s: np.ndarray
    pre_a: np.ndarray
    h_a: np.ndarray
    joint: np.ndarray
    pre_m: np.ndarray
    h_m: np.ndarray
    q: np.ndarray  # [n]


def critic_forward_cached(params: CriticParams, states, actions) -> tuple:
    states, squeeze_s = _as_batch(states, params.state_dim, "state")
    actions, squeeze_a = _as_batch(actions, params.action_dim, "action")
    if states.shape[0] != actions.shape[0]:
        raise ContractViolation("state/action batch sizes differ")
    pre_s = states @ params.state_in.weights.T + params.state_in.bias
    h_s = np.maximum(pre_s, 0.0)
    pre_a = actions @ params.action_in.weights.T + params.action_in.bias
    h_a = np.maximum(pre_a, 0.0)
    joint = np.concatenate([h_s, h_a], axis=1)
    pre_m = joint @ params.merge.weights.T + params.merge.bias
    h_m = np.maximum(pre_m, 0.0)
    q = (h_m @ params.head.weights.T + params.head.bias)[:, 0]
    cache = CriticCache(states, actions, pre_s, h_s, pre_a, h_a, joint, pre_m, h_m, q)
    squeeze = squeeze_s and squeeze_a
    return (float(q[0]) if squeeze else q), cache


def critic_forward(params: CriticParams, state, action):
    q, _ = critic_forward_cached(params, state, action)
    return q


# ---------------------------------------------------------------------------
# backward passes

def actor_backward(params: ActorParams, cache: ActorCache, grad_actions) -> tuple:
    """Gradients of sum(grad_actions * actions) w.r.t. actor params and states.

    Requires the cache from actor_forward_cached on the same inputs.
    Returns (ActorParams-shaped gradients, grad wrt states).
    """
    if cache is None:
        raise ContractViolation("actor_backward needs a recorded forward cache")
    g = np.asarray(grad_actions, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.actions.shape:
        raise ContractViolation("upstream gradient shape mismatch")
    dpre3 = g * (1.0 - cache.actions**2)
    gw3 = dpre3.T @ cache.h2
    gb3 = dpre3.sum(axis=0)
    dh2 = dpre3 @ params.l3.weights
    dpre2 = dh2 * (cache.pre2 > 0.0)
    gw2 = dpre2.T @ cache.h1
    gb2 = dpre2.sum(axis=0)
    dh1 = dpre2 @ params.l2.weights
    dpre1 = dh1 * (cache.pre1 > 0.0)
    gw1 = dpre1.T @ cache.states
    gb1 = dpre1.sum(axis=0)
    grad_states = dpre1 @ params.l1.weights
    grads = ActorParams(LayerParams(gw1, gb1), LayerParams(gw2, gb2), LayerParams(gw3, gb3))
    return grads, grad_states


def critic_backward(params: CriticParams, cache: CriticCache, grad_q) -> tuple:
    """Gradients of sum(grad_q * q) w.r.t. critic params, states and actions.

    Returns (CriticParams-shaped gradients, grad_states, grad_actions).
    """
    if cache is None:
        raise ContractViolation("critic_backward needs a recorded forward cache")
    g = np.asarray(grad_q, dtype=np.float64)
    if g.ndim == 0:
        g = g[None]
    if g.shape != cache.q.shape:
        raise ContractViolation("upstream gradient shape mismatch")
    dpre_head = g[:, None]  # affine head, no activation
    g_head = LayerParams(dpre_head.T @ cache.h_m, dpre_head.sum(axis=0))
    dh_m = dpre_head @ params.head.weights
    dpre_m = dh_m * (cache.pre_m > 0.0)
    g_merge = LayerParams(dpre_m.T @ cache.joint, dpre_m.sum(axis=0))
    djoint = dpre_m @ params.merge.weights
    n_s = params.state_in.fan_out
    dpre_s = djoint[:, :n_s] * (cache.pre_s > 0.0)
    dpre_a = djoint[:, n_s:] * (cache.pre_a > 0.0)
    g_state = LayerParams(dpre_s.T @ cache.states, dpre_s.sum(axis=0))
    g_action = LayerParams(dpre_a.T @ cache.actions, dpre_a.sum(axis=0))
    grad_states = dpre_s @ params.state_in.weights
    grad_actions = dpre_a @ params.action_in.weights
    grads = CriticParams(g_state, g_action, g_merge, g_head)
    return grads, grad_states, grad_actions


# ---------------------------------------------------------------------------
# optimizer and target maintenance

@dataclass
class AdamState:
    m: list
    v: list
    step_count: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(
            m=[np.zeros_like(leaf) for leaf in leaves(params)],
            v=[np.zeros_like(leaf) for leaf in leaves(params)],
        )


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One adaptive-moment update with bias correction.

    Non-finite gradients reject the whole batch: params and moments are left
    untouched and (params, state, False) is returned.
    """
    grad_leaves = list(leaves(grads))
    param_leaves = list(leaves(params))
    if len(grad_leaves) != len(param_leaves):
        raise ContractViolation("gradient structure does not match parameters")
    for g, p in zip(grad_leaves, param_leaves):
        if g.shape != p.shape:
            raise ContractViolation("gradient shape does not match parameter")
    if any(not np.all(np.isfinite(g)) for g in grad_leaves):
        return params, state, False

    t = state.step_count + 1
    new_m, new_v, new_leaves = [], [], []
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for p, g, m, v in zip(param_leaves, grad_leaves, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_m.append(m)
        new_v.append(v)
        new_leaves.append(p - update)

    it = iter(new_leaves)
    new_params = tree_map(lambda _: next(it), params)
    return new_params, AdamState(new_m, new_v, t), True


def soft_update(net, target, tau: float):
    """Polyak blend: every target entry becomes tau*net + (1-tau)*target."""
    if not 0.0 <= tau <= 1.0:
        raise ContractViolation(f"tau must be within [0, 1], got {tau}")
    return tree_map(lambda n, t: tau * n + (1.0 - tau) * t, net, target)
