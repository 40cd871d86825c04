"""Value-iteration oracle tests against closed forms and brute-force backups."""

import numpy as np
import pytest

from twinnav.errors import ContractViolation
from twinnav.mdp import TabularMdp, q_from_v, random_mdp, value_iteration


def brute_force_backup(mdp: TabularMdp, iters: int) -> np.ndarray:
    """Plain triple-loop optimality backup, independent of the implementation."""
    S, A = mdp.n_states, mdp.n_actions
    v = [0.0] * S
    for _ in range(iters):
        v_next = []
        for s in range(S):
            best = -float("inf")
            for a in range(A):
                total = 0.0
                for s2 in range(S):
                    total += mdp.transitions[s, a, s2] * (
                        mdp.rewards[s, a, s2] + mdp.gamma * v[s2]
                    )
                best = max(best, total)
            v_next.append(best)
        v = v_next
    return np.array(v)


class TestValidation:
    def test_non_stochastic_rows_rejected(self):
        p = np.ones((2, 1, 2)) * 0.6  # rows sum to 1.2
        with pytest.raises(ContractViolation):
            TabularMdp(p, np.zeros((2, 1, 2)), 0.9)

    def test_negative_probability_rejected(self):
        p = np.array([[[1.5, -0.5]], [[0.5, 0.5]]])
        with pytest.raises(ContractViolation):
            TabularMdp(p, np.zeros((2, 1, 2)), 0.9)

    def test_gamma_one_rejected(self):
        p = np.ones((1, 1, 1))
        with pytest.raises(ContractViolation):
            TabularMdp(p, np.zeros((1, 1, 1)), 1.0)

    def test_reward_shape_mismatch_rejected(self):
        p = np.ones((1, 1, 1))
        with pytest.raises(ContractViolation):
            TabularMdp(p, np.zeros((1, 2, 1)), 0.9)


class TestValueIteration:
    def test_single_state_self_loop_geometric_series(self):
        for gamma, r in [(0.9, 1.0), (0.5, -2.0), (0.99, 3.5)]:
            mdp = TabularMdp(np.ones((1, 1, 1)), np.full((1, 1, 1), r), gamma)
            v = value_iteration(mdp, tol=1e-10)
            assert abs(v[0] - r / (1.0 - gamma)) <= 1e-10

    def test_gamma_zero_is_myopic_max(self):
        rng = np.random.default_rng(0)
        mdp = random_mdp(4, 3, 0.0, seed=1)
        v = value_iteration(mdp, tol=1e-10)
        expect = (mdp.transitions * mdp.rewards).sum(axis=2).max(axis=1)
        np.testing.assert_allclose(v, expect, atol=1e-12)

    @pytest.mark.parametrize("seed", [2, 3, 4, 5])
    def test_random_mdp_matches_long_horizon_backup(self, seed):
        mdp = random_mdp(5, 2, 0.9, seed=seed)
        v = value_iteration(mdp, tol=1e-10)
        oracle = brute_force_backup(mdp, 1000)
        np.testing.assert_allclose(v, oracle, atol=1e-8)

    def test_two_state_deterministic_chain_closed_form(self):
        # state 0 -> state 1 (reward 1), state 1 self-loops (reward 0)
        p = np.zeros((2, 1, 2))
        p[0, 0, 1] = 1.0
        p[1, 0, 1] = 1.0
        r = np.zeros((2, 1, 2))
        r[0, 0, 1] = 1.0
        mdp = TabularMdp(p, r, 0.9)
        v = value_iteration(mdp, tol=1e-10)
        np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-10)

    def test_contraction_distances_decrease(self):
        mdp = random_mdp(6, 3, 0.95, seed=6)
        expected_r = (mdp.transitions * mdp.rewards).sum(axis=2)
        v = np.zeros(mdp.n_states)
        deltas = []
        for _ in range(60):
            v_next = (expected_r + mdp.gamma * mdp.transitions @ v).max(axis=1)
            deltas.append(np.max(np.abs(v_next - v)))
            v = v_next
        # gamma-contraction: each successive distance shrinks by at least gamma
        for a, b in zip(deltas, deltas[1:]):
            assert b <= a * mdp.gamma + 1e-12

    def test_bad_tol_rejected(self):
        mdp = random_mdp(2, 2, 0.9, seed=7)
        with pytest.raises(ContractViolation):
            value_iteration(mdp, tol=0.0)


class TestQFromV:
    def test_deterministic_transitions_exact(self):
        p = np.zeros((2, 2, 2))
        p[0, 0, 1] = p[0, 1, 0] = p[1, 0, 0] = p[1, 1, 1] = 1.0
        r = np.arange(8, dtype=np.float64).reshape(2, 2, 2)
        mdp = TabularMdp(p, r, 0.8)
        v = np.array([2.0, -1.0])
        q = q_from_v(mdp, v)
        # Q(s,a) = R(s,a,s') + gamma V(s') for the single reachable s'
        assert q[0, 0] == r[0, 0, 1] + 0.8 * v[1]
        assert q[0, 1] == r[0, 1, 0] + 0.8 * v[0]
        assert q[1, 0] == r[1, 0, 0] + 0.8 * v[0]
        assert q[1, 1] == r[1, 1, 1] + 0.8 * v[1]

    @pytest.mark.parametrize("seed", [8, 9, 10])
    def test_max_q_recovers_v_at_fixed_point(self, seed):
        mdp = random_mdp(5, 2, 0.9, seed=seed)
        v = value_iteration(mdp, tol=1e-10)
        q = q_from_v(mdp, v)
        np.testing.assert_allclose(q.max(axis=1), v, atol=1e-8)

    def test_matches_direct_summation_oracle(self):
        mdp = random_mdp(4, 3, 0.85, seed=11)
        v = np.random.default_rng(12).normal(size=4)
        q = q_from_v(mdp, v)
        for s in range(4):
            for a in range(3):
                direct = sum(
                    mdp.transitions[s, a, s2] * (mdp.rewards[s, a, s2] + mdp.gamma * v[s2])
                    for s2 in range(4)
                )
                assert abs(q[s, a] - direct) <= 1e-12

    def test_shape_mismatch_rejected(self):
        mdp = random_mdp(3, 2, 0.9, seed=13)
        with pytest.raises(ContractViolation):
            q_from_v(mdp, np.zeros(4))
