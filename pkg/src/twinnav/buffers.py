"""Dual experience store: uniform ring replay plus TD-error-prioritized buffer.

Both buffers keep transitions in preallocated float64 arrays. The priority
buffer layers a sum tree over priorities raised to a fixed exponent; new
entries always enter at the current maximum raw priority so nothing is starved
before its first TD error arrives. Mixed sampling splits a batch between the
two stores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NotEnoughSamples

PRIORITY_FLOOR = 1e-6


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.float64)
        self.action = np.asarray(self.action, dtype=np.float64)
        self.next_state = np.asarray(self.next_state, dtype=np.float64)
        if self.state.shape != self.next_state.shape:
            raise ContractViolation("state and next_state must have the same length")
        if self.action.shape != (2,):
            raise ContractViolation("action must have exactly two components")
        if np.any(np.abs(self.action) > 1.0 + 1e-12):
            raise ContractViolation("action components must lie in [-1, 1]")


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    indices: np.ndarray  # slot indices within the source buffer(s)
    stamps: np.ndarray  # per-slot insertion ids, for stale-update detection
    probs: np.ndarray | None = None  # sampling probabilities (prioritized only)
    is_weights: np.ndarray | None = None  # importance weights, 1.0 when beta = 0
    n_priority: int = 0  # first n_priority rows came from the priority buffer

    def __len__(self):
        return self.states.shape[0]


class _Storage:
    """Preallocated ring storage shared by both buffer flavours."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity <= 0 or state_dim <= 0:
            raise ContractViolation("capacity and state_dim must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, 2))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity)
        self.stamps = np.full(capacity, -1, dtype=np.int64)
        self.cursor = 0
        self.size = 0
        self.total_pushed = 0

    def write(self, t: Transition) -> int:
        slot = self.cursor
        self.states[slot] = t.state
        self.actions[slot] = t.action
        self.rewards[slot] = t.reward
        self.next_states[slot] = t.next_state
        self.dones[slot] = 1.0 if t.done else 0.0
        self.stamps[slot] = self.total_pushed
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.total_pushed += 1
        return slot

    def gather(self, idx: np.ndarray) -> Batch:
        return Batch(
            states=self.states[idx].copy(),
            actions=self.actions[idx].copy(),
            rewards=self.rewards[idx].copy(),
            next_states=self.next_states[idx].copy(),
            dones=self.dones[idx].copy(),
            indices=np.asarray(idx, dtype=np.int64),
            stamps=self.stamps[idx].copy(),
        )


class ReplayBuffer:
    """Uniform circular buffer; once full, inserts overwrite the oldest entry."""

    def __init__(self, capacity: int = 100_000, state_dim: int = 24):
        self._store = _Storage(capacity, state_dim)

    @property
    def capacity(self) -> int:
        return self._store.capacity

    def __len__(self):
        return self._store.size

    def push(self, t: Transition) -> None:
        self._store.write(t)

    def sample_uniform(self, n: int, rng: np.random.Generator) -> Batch:
        if len(self) < n:
            raise NotEnoughSamples(f"replay buffer holds {len(self)} < {n}")
        idx = rng.integers(0, len(self), size=n)
        return self._store.gather(idx)

    def stored_transitions(self) -> list:
        """Every stored transition, oldest first (test and snapshot helper)."""
        s = self._store
        order = np.argsort(s.stamps[: s.size])
        return [
            Transition(s.states[i], s.actions[i], float(s.rewards[i]), s.next_states[i], bool(s.dones[i]))
            for i in order
        ]


class SumTree:
    """Fixed-capacity binary sum tree; leaves padded up to a power of two.

    Parents are recomputed as left + right on each update path, so every
    internal node is exactly the float64 sum of its children at all times.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._n_leaves = 1
        while self._n_leaves < capacity:
            self._n_leaves *= 2
        self._nodes = np.zeros(2 * self._n_leaves)

    @property
    def total(self) -> float:
        return float(self._nodes[1])

    def get(self, idx: int) -> float:
        return float(self._nodes[self._n_leaves + idx])

    def set(self, idx: int, value: float) -> None:
        if not 0 <= idx < self.capacity:
            raise ContractViolation(f"leaf index {idx} out of range")
        node = self._n_leaves + idx
        self._nodes[node] = value
        node //= 2
        while node >= 1:
            self._nodes[node] = self._nodes[2 * node] + self._nodes[2 * node + 1]
            node //= 2

    def find_prefix(self, mass: float) -> int:
        """Leaf index i such that mass falls in i's cumulative-sum bucket."""
        node = 1
        while node < self._n_leaves:
            left = 2 * node
            if mass <= self._nodes[left] or self._nodes[left + 1] == 0.0:
                node = left
            else:
                mass -= self._nodes[left]
                node = left + 1
        return node - self._n_leaves

    def leaf_values(self) -> np.ndarray:
        return self._nodes[self._n_leaves : self._n_leaves + self.capacity].copy()


class PriorityBuffer:
    """Prioritized store: P(i) proportional to priority_i ** alpha."""

    def __init__(self, capacity: int = 100_000, state_dim: int = 24, alpha: float = 0.6):
        if alpha < 0:
            raise ContractViolation("alpha must be non-negative")
        self._store = _Storage(capacity, state_dim)
        self._tree = SumTree(capacity)
        self._raw = np.zeros(capacity)
        self.alpha = alpha
        self.stale_updates = 0

    @property
    def capacity(self) -> int:
        return self._store.capacity

    def __len__(self):
        return self._store.size

    def max_priority(self) -> float:
        if len(self) == 0:
            return 1.0  # bootstrap priority for the very first entry
        return float(self._raw[: len(self)].max())

    def push(self, t: Transition) -> None:
        p = self.max_priority()
        slot = self._store.write(t)
        self._raw[slot] = p
        self._tree.set(slot, p**self.alpha)

    def sample_prioritized(self, n: int, rng: np.random.Generator, beta: float = 0.0) -> Batch:
        if len(self) == 0:
            raise NotEnoughSamples("priority buffer is empty")
        total = self._tree.total
        idx = np.empty(n, dtype=np.int64)
        for k in range(n):
            idx[k] = self._tree.find_prefix(rng.random() * total)
        batch = self._store.gather(idx)
        probs = np.array([self._tree.get(int(i)) / total for i in idx])
        weights = (len(self) * probs) ** (-beta)
        batch.probs = probs
        batch.is_weights = weights / weights.max()
        batch.n_priority = n
        return batch

    def update_priorities(self, indices, td_errors, stamps=None) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        td_errors = np.asarray(td_errors, dtype=np.float64)
        if indices.shape != td_errors.shape:
            raise ContractViolation("indices and td_errors must align")
        if np.any(indices < 0) or np.any(indices >= self.capacity):
            raise ContractViolation("priority index out of range")
        for k, slot in enumerate(indices):
            if stamps is not None and self._store.stamps[slot] != stamps[k]:
                self.stale_updates += 1  # slot was overwritten since sampling
                continue
            p = abs(float(td_errors[k])) + PRIORITY_FLOOR
            self._raw[slot] = p
            self._tree.set(int(slot), p**self.alpha)

    def priorities(self) -> np.ndarray:
        return self._raw[: len(self)].copy()

    def tree_total(self) -> float:
        return self._tree.total

    def tree_leaves(self) -> np.ndarray:
        return self._tree.leaf_values()[: len(self)]


def sample_mixed(replay: ReplayBuffer, priority: PriorityBuffer, n: int, rho: float,
                 rng: np.random.Generator, beta: float = 0.0) -> Batch:
    """ceil(rho * n) prioritized draws, the remainder uniform from replay."""
    if not 0.0 <= rho <= 1.0:
        raise ContractViolation(f"rho must be within [0, 1], got {rho}")
    n_pri = int(np.ceil(rho * n))
    n_uni = n - n_pri
    if (n_pri > 0 and len(priority) == 0) or len(replay) < n_uni:
        raise NotEnoughSamples(
            f"need {n_pri} prioritized + {n_uni} uniform, have {len(priority)} + {len(replay)}"
        )
    parts = []
    if n_pri:
        parts.append(priority.sample_prioritized(n_pri, rng, beta))
    if n_uni:
        parts.append(replay.sample_uniform(n_uni, rng))
    if len(parts) == 1:
        return parts[0]
    a, b = parts
    ones = np.ones(len(b))
    return Batch(
        states=np.concatenate([a.states, b.states]),
        actions=np.concatenate([a.actions, b.actions]),
        rewards=np.concatenate([a.rewards, b.rewards]),
        next_states=np.concatenate([a.next_states, b.next_states]),
        dones=np.concatenate([a.dones, b.dones]),
        indices=np.concatenate([a.indices, b.indices]),
        stamps=np.concatenate([a.stamps, b.stamps]),
        probs=np.concatenate([a.probs, ones / max(len(replay), 1)]),
        is_weights=np.concatenate([a.is_weights, ones]),
        n_priority=a.n_priority,
    )


def save_buffers(path, replay: ReplayBuffer, priority: PriorityBuffer) -> None:
    """Snapshot both stores into the npz checkpoint container."""
    from . import checkpoint

    entries = {}
    for name, buf in (("replay", replay._store), ("priority", priority._store)):
        entries[f"{name}.states"] = buf.states[: buf.size]
        entries[f"{name}.actions"] = buf.actions[: buf.size]
        entries[f"{name}.rewards"] = buf.rewards[: buf.size]
        entries[f"{name}.next_states"] = buf.next_states[: buf.size]
        entries[f"{name}.dones"] = buf.dones[: buf.size]
        entries[f"{name}.stamps"] = buf.stamps[: buf.size]
        entries[f"{name}.cursor"] = np.int64(buf.cursor)
        entries[f"{name}.total_pushed"] = np.int64(buf.total_pushed)
        entries[f"{name}.capacity"] = np.int64(buf.capacity)
    entries["priority.raw"] = priority._raw[: len(priority)]
    entries["priority.alpha"] = np.float64(priority.alpha)
    checkpoint.save_entries(path, entries)


def load_buffers(path) -> tuple:
    from . import checkpoint

    entries = checkpoint.load_entries(path)
    state_dim = entries["replay.states"].shape[1] if entries["replay.states"].size else entries["priority.states"].shape[1]

    replay = ReplayBuffer(int(entries["replay.capacity"]), state_dim)
    priority = PriorityBuffer(int(entries["priority.capacity"]), state_dim, float(entries["priority.alpha"]))
    for name, buf in (("replay", replay._store), ("priority", priority._store)):
        n = entries[f"{name}.states"].shape[0]
        buf.states[:n] = entries[f"{name}.states"]
        buf.actions[:n] = entries[f"{name}.actions"]
        buf.rewards[:n] = entries[f"{name}.rewards"]
        buf.next_states[:n] = entries[f"{name}.next_states"]
        buf.dones[:n] = entries[f"{name}.dones"]
        buf.stamps[:n] = entries[f"{name}.stamps"]
        buf.size = n
        buf.cursor = int(entries[f"{name}.cursor"])
        buf.total_pushed = int(entries[f"{name}.total_pushed"])
    raw = entries["priority.raw"]
    priority._raw[: raw.shape[0]] = raw
    for i, p in enumerate(raw):
        priority._tree.set(i, float(p) ** priority.alpha)
    return replay, priority
