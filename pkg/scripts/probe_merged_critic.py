"""Standalone probe: TD3 with a state/action-merging critic, empty arena.

Self-contained critic implementation so nothing in the package changes while
the architecture question is still open. The actor and environment come from
the package unchanged.
"""

import sys
import time
from dataclasses import dataclass

import numpy as np

from twinnav import nets
from twinnav.buffers import PriorityBuffer, ReplayBuffer, Transition, sample_mixed
from twinnav.world import SimParams, WorldSpec, build_observation, spawn_episode, step


@dataclass
class MergedCritic:
    state_in: nets.LayerParams
    action_in: nets.LayerParams
    merge: nets.LayerParams
    head: nets.LayerParams


def init_merged(state_dim, action_dim, hidden, seed):
    rng = np.random.default_rng(seed)
    return MergedCritic(
        nets.init_layer(state_dim, hidden, rng),
        nets.init_layer(action_dim, hidden, rng),
        nets.init_layer(2 * hidden, hidden, rng),
        nets.init_layer(hidden, 1, rng),
    )


def mc_leaves(c):
    for layer in (c.state_in, c.action_in, c.merge, c.head):
        yield layer.weights
        yield layer.bias


def mc_copy(c):
    return MergedCritic(*[nets.LayerParams(l.weights.copy(), l.bias.copy())
                          for l in (c.state_in, c.action_in, c.merge, c.head)])


def mc_forward(c, s, a):
    hs = np.maximum(s @ c.state_in.weights.T + c.state_in.bias, 0.0)
    ha = np.maximum(a @ c.action_in.weights.T + c.action_in.bias, 0.0)
    joint = np.concatenate([hs, ha], axis=1)
    pm = joint @ c.merge.weights.T + c.merge.bias
    hm = np.maximum(pm, 0.0)
    q = (hm @ c.head.weights.T + c.head.bias)[:, 0]
    return q, (s, a, hs, ha, joint, pm, hm)


def mc_backward(c, cache, dq):
    s, a, hs, ha, joint, pm, hm = cache
    dpre_head = dq[:, None]
    g_head = nets.LayerParams(dpre_head.T @ hm, dpre_head.sum(axis=0))
    dhm = dpre_head @ c.head.weights
    dpm = dhm * (pm > 0.0)
    g_merge = nets.LayerParams(dpm.T @ joint, dpm.sum(axis=0))
    djoint = dpm @ c.merge.weights
    h = hs.shape[1]
    dhs = djoint[:, :h] * (hs > 0.0)
    dha = djoint[:, h:] * (ha > 0.0)
    g_state = nets.LayerParams(dhs.T @ s, dhs.sum(axis=0))
    g_action = nets.LayerParams(dha.T @ a, dha.sum(axis=0))
    grad_actions = dha @ c.action_in.weights
    return MergedCritic(g_state, g_action, g_merge, g_head), grad_actions


def mc_soft(net, tgt, tau):
    return MergedCritic(*[nets.LayerParams(tau * n.weights + (1 - tau) * t.weights,
                                           tau * n.bias + (1 - tau) * t.bias)
                          for n, t in zip((net.state_in, net.action_in, net.merge, net.head),
                                          (tgt.state_in, tgt.action_in, tgt.merge, tgt.head))])


class Adam:
    def __init__(self, params_like):
        self.m = [np.zeros_like(x) for x in mc_leaves(params_like)]
        self.v = [np.zeros_like(x) for x in mc_leaves(params_like)]
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        new = []
        for i, (p, g) in enumerate(zip(mc_leaves(params), mc_leaves(grads))):
            self.m[i] = 0.9 * self.m[i] + 0.1 * g
            self.v[i] = 0.999 * self.v[i] + 0.001 * g * g
            mh = self.m[i] / (1 - 0.9**self.t)
            vh = self.v[i] / (1 - 0.999**self.t)
            new.append(p - lr * mh / (np.sqrt(vh) + 1e-8))
        it = iter(new)
        return MergedCritic(*[nets.LayerParams(next(it), next(it))
                              for _ in range(4)])


def train(tag, gamma, episodes, seed, hidden=64, noise_decay=10_000,
          bootstrap_timeout=False):
    params = SimParams()
    world = WorldSpec(width=10.0, height=8.0, goal=(8.0, 4.0), obstacles=[])
    rng = np.random.default_rng(seed + 1)

    actor = nets.init_actor(params.state_dim, hidden, seed)
    actor_t = nets.tree_copy(actor)
    opt_a = nets.AdamState.for_params(actor)
    c1, c2 = init_merged(params.state_dim, 2, hidden, seed + 10), \
        init_merged(params.state_dim, 2, hidden, seed + 20)
    c1_t, c2_t = mc_copy(c1), mc_copy(c2)
    o1, o2 = Adam(c1), Adam(c2)

    replay = ReplayBuffer(200_000, params.state_dim)
    priority = PriorityBuffer(200_000, params.state_dim, alpha=0.6)
    env_steps = 0
    critic_updates = 0
    reasons = []
    t0 = time.monotonic()
    for ep in range(episodes):
        w, robot = spawn_episode(world, seed * 1_000_003 + ep, params)
        prev = (0.0, 0.0)
        obs = build_observation(w, robot, prev, params)
        for _ in range(500):
            sigma = 1.0 + min(env_steps / noise_decay, 1.0) * (0.1 - 1.0)
            a = np.clip(nets.actor_forward(actor, obs.vector())
                        + rng.normal(0, sigma, 2), -1, 1)
            env_steps += 1
            robot, out = step(w, robot, a, params, prev_obs=obs)
            done_flag = out.done and not (bootstrap_timeout
                                          and out.done_reason == "timeout")
            t = Transition(obs.vector(), a, out.reward,
                           out.observation.vector(), done_flag)
            replay.push(t)
            priority.push(t)
            obs = out.observation
            # one train step
            try:
                batch = sample_mixed(replay, priority, 40, 0.5, rng)
            except Exception:
                batch = None
            if batch is not None:
                na = nets.actor_forward(actor_t, batch.next_states)
                noise = np.clip(rng.normal(0, 0.2, (len(batch), 2)), -0.5, 0.5)
                na = np.clip(na + noise, -1, 1)
                q1t, _ = mc_forward(c1_t, batch.next_states, na)
                q2t, _ = mc_forward(c2_t, batch.next_states, na)
                y = batch.rewards + gamma * (1.0 - batch.dones) * np.minimum(q1t, q2t)
                for (c, o, which) in ((c1, o1, 1), (c2, o2, 2)):
                    q, cache = mc_forward(c, batch.states, batch.actions)
                    diff = q - y
                    grads, _ = mc_backward(c, cache, 2.0 * diff / len(batch))
                    cnew = o.step(c, grads, 1e-3)
                    if which == 1:
                        c1 = cnew
                        td = diff
                    else:
                        c2 = cnew
                n_pri = batch.n_priority
                if n_pri:
                    priority.update_priorities(batch.indices[:n_pri], td[:n_pri],
                                               stamps=batch.stamps[:n_pri])
                critic_updates += 1
                if critic_updates % 2 == 0:
                    acts, acache = nets.actor_forward_cached(actor, batch.states)
                    qa, ccache = mc_forward(c1, batch.states, acts)
                    _, ga = mc_backward(c1, ccache,
                                        np.full(len(batch), -1.0 / len(batch)))
                    agrads, _ = nets.actor_backward(actor, acache, ga)
                    actor, opt_a, _ = nets.adam_step(params=actor, grads=agrads,
                                                     state=opt_a, lr=1e-3)
                    actor_t = nets.soft_update(actor, actor_t, 0.005)
                    c1_t = mc_soft(c1, c1_t, 0.005)
                    c2_t = mc_soft(c2, c2_t, 0.005)
            if out.done:
                break
        reasons.append(out.done_reason if out.done else "timeout")
        if (ep + 1) % 50 == 0:
            hist = {r: reasons[-50:].count(r) for r in set(reasons[-50:])}
            print(f"  {tag} ep {ep+1}: sigma {sigma:.2f} last50 {hist}", flush=True)

    # deterministic eval
    succ = 0
    for trial in range(20):
        w, robot = spawn_episode(world, 99 * 1_000_003 + trial, params)
        prev = (0.0, 0.0)
        obs = build_observation(w, robot, prev, params)
        for _ in range(500):
            a = nets.actor_forward(actor, obs.vector())
            robot, out = step(w, robot, a, params, prev_obs=obs)
            obs = out.observation
            if out.done:
                break
        succ += out.done_reason == "goal"
    mins = (time.monotonic() - t0) / 60.0
    print(f"{tag:34s} eval {succ}/20 in {mins:.1f} min", flush=True)


def main():
    train("merged gamma=0.99999", 0.99999, 150, 0)
    train("merged gamma=0.99", 0.99, 150, 0)
    train("merged gamma=0.99999 bootstrap-to", 0.99999, 150, 0, bootstrap_timeout=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
