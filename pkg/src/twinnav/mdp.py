"""Finite MDP value iteration, used as a ground-truth oracle for value targets.

The navigation task itself is continuous, but the value recursions it relies
on are checked here on small tabular problems where the fixed point can be
computed to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation


@dataclass
class TabularMdp:
    """Finite MDP with dense transition and reward tensors.

    transitions[s, a, s'] is the probability of landing in s' after taking a
    in s; rewards[s, a, s'] is the reward collected on that transition.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if self.transitions.ndim != 3 or self.transitions.shape[0] != self.transitions.shape[2]:
            raise ContractViolation("transitions must have shape [S, A, S]")
        if self.rewards.shape != self.transitions.shape:
            raise ContractViolation("rewards must match transitions in shape")
        if np.any(self.transitions < 0):
            raise ContractViolation("transition probabilities must be non-negative")
        row_sums = self.transitions.sum(axis=2)
        if np.any(np.abs(row_sums - 1.0) > 1e-12):
            raise ContractViolation("each P(.|s,a) must sum to 1 within 1e-12")
        if not 0.0 <= self.gamma < 1.0:
            raise ContractViolation(f"gamma must lie in [0, 1), got {self.gamma}")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


def value_iteration(mdp: TabularMdp, tol: float = 1e-10, max_iters: int = 1_000_000) -> np.ndarray:
    """Fixed point of the Bellman optimality backup, within tol in max-norm.

    Iterates V <- max_a sum_s' P(s'|s,a) [R(s,a,s') + gamma V(s')] until the
    sup-norm change falls below tol * (1 - gamma) / gamma, which bounds the
    distance to the true fixed point by tol.
    """
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    v = np.zeros(mdp.n_states)
    # expected immediate reward per (s, a), constant across iterations
    expected_r = (mdp.transitions * mdp.rewards).sum(axis=2)
    if mdp.gamma == 0.0:
        return expected_r.max(axis=1)
    stop = tol * (1.0 - mdp.gamma) / mdp.gamma
    for _ in range(max_iters):
        q = expected_r + mdp.gamma * mdp.transitions @ v
        v_next = q.max(axis=1)
        delta = np.max(np.abs(v_next - v))
        v = v_next
        if delta < stop:
            return v
    raise ContractViolation(f"value iteration failed to reach tol={tol} in {max_iters} iters")


def q_from_v(mdp: TabularMdp, v: np.ndarray) -> np.ndarray:
    """State-action values induced by a state-value table.

    Q(s, a) = sum_s' P(s'|s,a) [R(s,a,s') + gamma V(s')]. When v is the
    optimality fixed point, max_a Q(s, a) recovers v(s).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (mdp.n_states,):
        raise ContractViolation(f"v must have shape ({mdp.n_states},), got {v.shape}")
    return (mdp.transitions * (mdp.rewards + mdp.gamma * v[None, None, :])).sum(axis=2)


def random_mdp(n_states: int, n_actions: int, gamma: float, seed: int) -> TabularMdp:
    """Dense random MDP with Dirichlet transition rows; handy for oracles."""
    rng = np.random.default_rng(seed)
    transitions = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    rewards = rng.normal(size=(n_states, n_actions, n_states))
    return TabularMdp(transitions, rewards, gamma)
