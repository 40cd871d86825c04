"""Twin-delayed actor-critic learner and its pre-training loop.

Two critics are regressed onto a shared min-target with smoothing noise; the
actor and the three target networks update only every policy_freq critic
updates. Each environment step triggers updates_per_step gradient steps. All
randomness flows from a single generator seeded at construction, so full
runs replay exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import checkpoint, nets
from .buffers import PriorityBuffer, ReplayBuffer, Transition, sample_mixed
from .errors import ContractViolation, NotEnoughSamples, SpawnFailure
from .world import SimParams, WorldSpec, build_observation, spawn_episode, step


@dataclass
class Hyperparams:
    """Learner constants; defaults are the published operating point."""

    max_steps_per_episode: int = 500
    initial_noise: float = 1.0
    noise_decay_steps: int = 500_000
    min_noise: float = 0.1
    batch: int = 40
    gamma: float = 0.99999
    tau: float = 0.005
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_freq: int = 2
    updates_per_step: int = 1
    replay_capacity: int = 1_000_000
    priority_capacity: int = 1_000_000
    priority_alpha: float = 0.6
    priority_mix: float = 0.5  # fraction of each batch drawn by priority
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    hidden: int = 64
    device: str = "cpu"

    def __post_init__(self):
        positive = ("max_steps_per_episode", "initial_noise", "noise_decay_steps",
                    "min_noise", "batch", "gamma", "tau", "policy_noise",
                    "policy_freq", "updates_per_step", "replay_capacity",
                    "priority_capacity", "actor_lr", "critic_lr", "hidden")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ContractViolation(f"{name} must be positive")
        if self.noise_clip < 0:
            raise ContractViolation("noise_clip must be non-negative")
        if self.min_noise > self.initial_noise:
            raise ContractViolation("min_noise must not exceed initial_noise")
        if not 0.0 <= self.priority_mix <= 1.0:
            raise ContractViolation("priority_mix must lie in [0, 1]")
        if self.device != "cpu":
            raise ContractViolation("only cpu execution is supported")


@dataclass
class TrainReport:
    skipped: bool = False
    reason: str = ""
    critic_loss: float = 0.0
    actor_loss: float | None = None
    mean_abs_td: float = 0.0
    actor_updated: bool = False


@dataclass
class EpisodeStats:
    episode: int
    reward: float
    steps: int
    travel_time: float  # simulated seconds, steps * dt
    sigma: float  # exploration noise at episode end
    done_reason: str
    aborted: bool = False


class TD3Agent:
    """Owns the six parameter sets, optimizer states, and counters."""

    def __init__(self, state_dim: int, hp: Hyperparams | None = None, seed: int = 0):
        self.hp = hp or Hyperparams()
        self.state_dim = state_dim
        self.seed = seed
        seq = np.random.SeedSequence(seed)
        s_actor, s_c1, s_c2, s_rng = seq.spawn(4)
        self.actor = nets.init_actor(state_dim, self.hp.hidden, s_actor)
        self.critic1 = nets.init_critic(state_dim, 2, self.hp.hidden, s_c1)
        self.critic2 = nets.init_critic(state_dim, 2, self.hp.hidden, s_c2)
        self.actor_target = nets.tree_copy(self.actor)
        self.critic1_target = nets.tree_copy(self.critic1)
        self.critic2_target = nets.tree_copy(self.critic2)
        self.opt_actor = nets.AdamState.for_params(self.actor)
        self.opt_critic1 = nets.AdamState.for_params(self.critic1)
        self.opt_critic2 = nets.AdamState.for_params(self.critic2)
        self.critic_update_count = 0
        self.actor_update_count = 0
        self.env_step_count = 0
        self.rng = np.random.default_rng(s_rng)
        self.last_smoothing_noise: np.ndarray | None = None

    # ------------------------------------------------------------- acting

    def current_noise(self, step: int | None = None) -> float:
        """Exploration sigma: linear from the initial value to the floor."""
        if step is None:
            step = self.env_step_count
        if step < 0:
            raise ContractViolation("step must be non-negative")
        frac = min(step / self.hp.noise_decay_steps, 1.0)
        return self.hp.initial_noise + frac * (self.hp.min_noise - self.hp.initial_noise)

    def select_action(self, state, explore: bool) -> np.ndarray:
        action = nets.actor_forward(self.actor, np.asarray(state, dtype=np.float64))
        if explore:
            sigma = self.current_noise()
            action = action + self.rng.normal(0.0, sigma, size=2)
        return np.clip(action, -1.0, 1.0)

    # ------------------------------------------------------------ learning

    def compute_target(self, batch) -> np.ndarray:
        """Clipped double-Q target with clamped smoothing noise."""
        n = len(batch)
        if n == 0:
            raise ContractViolation("target computation needs a nonempty batch")
        next_actions = nets.actor_forward(self.actor_target, batch.next_states)
        noise = self.rng.normal(0.0, self.hp.policy_noise, size=(n, 2))
        noise = np.clip(noise, -self.hp.noise_clip, self.hp.noise_clip)
        self.last_smoothing_noise = noise
        next_actions = np.clip(next_actions + noise, -1.0, 1.0)
        q1 = nets.critic_forward(self.critic1_target, batch.next_states, next_actions)
        q2 = nets.critic_forward(self.critic2_target, batch.next_states, next_actions)
        return batch.rewards + self.hp.gamma * (1.0 - batch.dones) * np.minimum(q1, q2)

    def _critic_step(self, params, opt, batch, y) -> tuple:
        q, cache = nets.critic_forward_cached(params, batch.states, batch.actions)
        diff = q - y
        loss = float(np.mean(diff * diff))
        grads, _, _ = nets.critic_backward(params, cache, 2.0 * diff / len(batch))
        params, opt, _ = nets.adam_step(params, grads, opt, self.hp.critic_lr)
        return params, opt, loss, diff

    def train_step(self, replay: ReplayBuffer, priority: PriorityBuffer) -> TrainReport:
        try:
            batch = sample_mixed(replay, priority, self.hp.batch,
                                 self.hp.priority_mix, self.rng)
        except NotEnoughSamples as exc:
            return TrainReport(skipped=True, reason=str(exc))

        y = self.compute_target(batch)
        self.critic1, self.opt_critic1, loss1, td = self._critic_step(
            self.critic1, self.opt_critic1, batch, y)
        self.critic2, self.opt_critic2, loss2, _ = self._critic_step(
            self.critic2, self.opt_critic2, batch, y)
        self.critic_update_count += 1

        n_pri = batch.n_priority
        if n_pri:
            priority.update_priorities(batch.indices[:n_pri], td[:n_pri],
                                       stamps=batch.stamps[:n_pri])

        report = TrainReport(critic_loss=0.5 * (loss1 + loss2),
                             mean_abs_td=float(np.mean(np.abs(td))))
        if self.critic_update_count % self.hp.policy_freq == 0:
            report.actor_loss = self._actor_step(batch)
            report.actor_updated = True
            self.actor_update_count += 1
            tau = self.hp.tau
            self.actor_target = nets.soft_update(self.actor, self.actor_target, tau)
            self.critic1_target = nets.soft_update(self.critic1, self.critic1_target, tau)
            self.critic2_target = nets.soft_update(self.critic2, self.critic2_target, tau)
        return report

    def _actor_step(self, batch) -> float:
        actions, actor_cache = nets.actor_forward_cached(self.actor, batch.states)
        q, critic_cache = nets.critic_forward_cached(self.critic1, batch.states, actions)
        n = len(batch)
        # maximizing mean Q equals minimizing -mean Q
        _, _, grad_actions = nets.critic_backward(self.critic1, critic_cache,
                                                  np.full(n, -1.0 / n))
        grads, _ = nets.actor_backward(self.actor, actor_cache, grad_actions)
        self.actor, self.opt_actor, _ = nets.adam_step(grads=grads, params=self.actor,
                                                       state=self.opt_actor,
                                                       lr=self.hp.actor_lr)
        return float(-np.mean(q))

    # ---------------------------------------------------------- checkpoint

    def save(self, path) -> None:
        entries = {}
        entries.update(checkpoint.actor_entries("actor", self.actor))
        entries.update(checkpoint.critic_entries("critic1", self.critic1))
        entries.update(checkpoint.critic_entries("critic2", self.critic2))
        entries.update(checkpoint.actor_entries("actor_target", self.actor_target))
        entries.update(checkpoint.critic_entries("critic1_target", self.critic1_target))
        entries.update(checkpoint.critic_entries("critic2_target", self.critic2_target))
        entries.update(checkpoint.adam_entries("opt_actor", self.opt_actor))
        entries.update(checkpoint.adam_entries("opt_critic1", self.opt_critic1))
        entries.update(checkpoint.adam_entries("opt_critic2", self.opt_critic2))
        entries["counters"] = np.array([self.critic_update_count,
                                        self.actor_update_count,
                                        self.env_step_count], dtype=np.int64)
        entries["state_dim"] = np.int64(self.state_dim)
        entries["seed"] = np.int64(self.seed)
        hp = asdict(self.hp)
        entries["hp_names"] = np.array(sorted(hp), dtype=np.str_)
        entries["hp_values"] = np.array([str(hp[k]) for k in sorted(hp)], dtype=np.str_)
        checkpoint.save_entries(path, entries)

    @classmethod
    def load(cls, path) -> "TD3Agent":
        entries = checkpoint.load_entries(path)
        names = [str(n) for n in entries["hp_names"]]
        values = [str(v) for v in entries["hp_values"]]
        defaults = Hyperparams()
        kwargs = {}
        for name, value in zip(names, values):
            current = getattr(defaults, name)
            kwargs[name] = type(current)(value) if not isinstance(current, bool) else value == "True"
        agent = cls(int(entries["state_dim"]), Hyperparams(**kwargs),
                    seed=int(entries["seed"]))
        agent.actor = checkpoint.actor_from_entries(entries, "actor")
        agent.critic1 = checkpoint.critic_from_entries(entries, "critic1")
        agent.critic2 = checkpoint.critic_from_entries(entries, "critic2")
        agent.actor_target = checkpoint.actor_from_entries(entries, "actor_target")
        agent.critic1_target = checkpoint.critic_from_entries(entries, "critic1_target")
        agent.critic2_target = checkpoint.critic_from_entries(entries, "critic2_target")
        agent.opt_actor = checkpoint.adam_from_entries(entries, "opt_actor")
        agent.opt_critic1 = checkpoint.adam_from_entries(entries, "opt_critic1")
        agent.opt_critic2 = checkpoint.adam_from_entries(entries, "opt_critic2")
        counters = entries["counters"]
        agent.critic_update_count = int(counters[0])
        agent.actor_update_count = int(counters[1])
        agent.env_step_count = int(counters[2])
        return agent


# ------------------------------------------------------------- pre-training

EPISODE_CSV_HEADER = "episode,reward,steps,travel_time,sigma,done_reason"


def episode_csv_row(stats: EpisodeStats) -> str:
    return ",".join([
        str(stats.episode),
        repr(float(stats.reward)),
        str(stats.steps),
        repr(float(stats.travel_time)),
        repr(float(stats.sigma)),
        stats.done_reason,
    ])


def run_episode(world_spec: WorldSpec, agent: TD3Agent, params: SimParams,
                spawn_seed: int, replay: ReplayBuffer | None = None,
                priority: PriorityBuffer | None = None, explore: bool = True,
                learn: bool = True) -> tuple:
    """One episode; stores transitions and learns after each step when asked.

    The stored done flag marks true terminals only: a step-cap cut ends the
    episode but is recorded with done=0 so the critic still bootstraps
    through it, since the cap is bookkeeping rather than part of the task.

    Returns (cumulative reward, steps, done_reason).
    """
    world, robot = spawn_episode(world_spec, spawn_seed, params)
    prev_action = (0.0, 0.0)
    obs = build_observation(world, robot, prev_action, params)
    total = 0.0
    steps = 0
    done_reason = "timeout"
    for _ in range(agent.hp.max_steps_per_episode):
        action = agent.select_action(obs.vector(), explore=explore)
        agent.env_step_count += 1
        robot, outcome = step(world, robot, action, params, prev_obs=obs)
        steps += 1
        total += outcome.reward
        terminal = outcome.done and outcome.done_reason != "timeout"
        t = Transition(obs.vector(), action, outcome.reward,
                       outcome.observation.vector(), terminal)
        if replay is not None:
            replay.push(t)
        if priority is not None:
            priority.push(t)
        if learn and replay is not None and priority is not None:
            for _ in range(agent.hp.updates_per_step):
                agent.train_step(replay, priority)
        obs = outcome.observation
        if outcome.done:
            done_reason = outcome.done_reason
            break
    return total, steps, done_reason


def pretrain(world_spec: WorldSpec, agent: TD3Agent, episodes: int,
             params: SimParams | None = None, seed: int = 0,
             replay: ReplayBuffer | None = None,
             priority: PriorityBuffer | None = None,
             csv_path=None, log=None) -> list:
    """Training driver: spawn, roll out with exploration, learn every step.

    Episode spawn seeds derive deterministically from the run seed. A spawn
    failure aborts that episode, records it, and training continues.
    """
    params = params or SimParams()
    dim = params.state_dim
    if replay is None:
        replay = ReplayBuffer(agent.hp.replay_capacity, dim)
    if priority is None:
        priority = PriorityBuffer(agent.hp.priority_capacity, dim,
                                  alpha=agent.hp.priority_alpha)
    stats: list = []
    rows = [EPISODE_CSV_HEADER]
    for episode in range(episodes):
        spawn_seed = seed * 1_000_003 + episode
        try:
            total, steps, done_reason = run_episode(
                world_spec, agent, params, spawn_seed, replay, priority)
            entry = EpisodeStats(episode, total, steps, steps * params.dt,
                                 agent.current_noise(), done_reason)
        except SpawnFailure as exc:
            entry = EpisodeStats(episode, 0.0, 0, 0.0, agent.current_noise(),
                                 f"aborted:{exc.constraint}", aborted=True)
        stats.append(entry)
        rows.append(episode_csv_row(entry))
        if log is not None:
            log(entry)
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")
    return stats
