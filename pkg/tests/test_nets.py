import numpy as np
import pytest

from twinnav import nets
from twinnav.errors import ContractViolation
from twinnav.nets import (
    ActorParams,
    AdamState,
    CriticParams,
    LayerParams,
    actor_backward,
    actor_forward,
    actor_forward_cached,
    adam_step,
    critic_backward,
    critic_forward,
    critic_forward_cached,
    init_actor,
    init_critic,
    init_layer,
    soft_update,
    tree_map,
)

from oracle_scalar_net import actor_forward_scalar, critic_forward_scalar


def zero_actor(state_dim=4, hidden=8):
    z = lambda o, i: LayerParams(np.zeros((o, i)), np.zeros(o))
    return ActorParams(z(hidden, state_dim), z(hidden, hidden), z(2, hidden))


def zero_critic(state_dim=4, hidden=8):
    z = lambda o, i: LayerParams(np.zeros((o, i)), np.zeros(o))
    return CriticParams(z(hidden, state_dim), z(hidden, 2),
                        z(hidden, 2 * hidden), z(1, hidden))


def layers_as_lists(params: ActorParams):
    return [(l.weights.tolist(), l.bias.tolist()) for l in (params.l1, params.l2, params.l3)]


def critic_as_lists(params: CriticParams):
    return [(l.weights.tolist(), l.bias.tolist())
            for l in (params.state_in, params.action_in, params.merge, params.head)]


class TestActorForward:
    def test_zero_params_give_zero_actions(self):
        out = actor_forward(zero_actor(), np.ones(4))
        assert out.shape == (2,)
        assert np.all(out == 0.0)

    def test_tanh_saturation(self):
        params = zero_actor()
        params.l3.bias[:] = 1000.0
        out = actor_forward(params, np.zeros(4))
        np.testing.assert_allclose(out, [1.0, 1.0], rtol=0, atol=np.finfo(float).eps)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            params = init_actor(4, 6, rng.integers(1 << 31))
            state = rng.normal(size=4)
            got = actor_forward(params, state)
            want = actor_forward_scalar(layers_as_lists(params), state.tolist())
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)

    def test_outputs_bounded_for_any_finite_input(self):
        rng = np.random.default_rng(3)
        params = init_actor(5, 16, 0)
        for scale in (1.0, 1e3, 1e6):
            out = actor_forward(params, rng.normal(size=5) * scale)
            assert np.all(out >= -1.0) and np.all(out <= 1.0)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            actor_forward(zero_actor(state_dim=4), np.zeros(5))

    def test_deterministic(self):
        params = init_actor(4, 8, 11)
        state = np.array([0.3, -0.2, 0.9, 0.0])
        a = actor_forward(params, state)
        b = actor_forward(params, state)
        assert np.array_equal(a, b)


class TestCriticForward:
    def test_all_zero_params_give_zero_q(self):
        assert critic_forward(zero_critic(), np.ones(4), np.ones(2)) == 0.0

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            params = init_critic(5, 2, 6, seed=rng.integers(1 << 31))
            s, a = rng.normal(size=5), rng.normal(size=2)
            want = critic_forward_scalar(critic_as_lists(params), s.tolist(), a.tolist())
            assert critic_forward(params, s, a) == pytest.approx(want, rel=1e-12)

    def test_zero_merge_layer_leaves_only_head_bias(self):
        params = init_critic(4, 2, 8, seed=5)
        params.merge.weights[:] = 0.0
        params.merge.bias[:] = 0.0
        qa = critic_forward(params, np.ones(4), np.array([0.5, -0.5]))
        qb = critic_forward(params, -np.ones(4), np.array([-0.5, 0.5]))
        assert qa == qb == float(params.head.bias[0])

    def test_action_ranking_depends_on_state(self):
        # the combining layer must let the critic order the same two actions
        # differently in different states; a critic that merely sums separate
        # state and action heads has a state-independent action ranking and
        # cannot train a state-dependent policy
        params = init_critic(4, 2, 8, seed=9)
        s1, s2 = np.full(4, 0.8), np.full(4, -0.6)
        a1, a2 = np.array([0.9, 0.0]), np.array([-0.9, 0.0])
        gap1 = critic_forward(params, s1, a1) - critic_forward(params, s1, a2)
        gap2 = critic_forward(params, s2, a1) - critic_forward(params, s2, a2)
        assert abs(gap1 - gap2) > 1e-6

    def test_batch_and_single_row_agree(self):
        params = init_critic(4, 2, 8, seed=2)
        rng = np.random.default_rng(4)
        s = rng.normal(size=(5, 4))
        a = rng.uniform(-1, 1, size=(5, 2))
        batch_q = critic_forward(params, s, a)
        for i in range(5):
            assert critic_forward(params, s[i], a[i]) == pytest.approx(
                float(batch_q[i]), abs=1e-15)


# ---------------------------------------------------------------------------
# gradients against central finite differences

def finite_difference(loss_fn, params, h=1e-5):
    """Central-difference gradient of loss_fn over every leaf of params."""
    grads = []
    for leaf in nets.leaves(params):
        g = np.zeros_like(leaf)
        flat = leaf.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(params)
            flat[i] = orig - h
            down = loss_fn(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric_leaves, rel=1e-4):
    for got, want in zip(nets.leaves(analytic), numeric_leaves):
        err = np.abs(got - want) / np.maximum(np.abs(want), 1e-3)
        assert err.max() < rel, f"gradient mismatch: max rel err {err.max():.2e}"


class TestBackward:
    def test_single_linear_layer_mse_closed_form(self):
        # one affine layer, no hidden activation on the path we exercise:
        # drive the critic head directly by making hidden layers identity-like
        # is fiddly, so check the documented closed form on the actor's l3
        # with tanh linearized at zero: use tiny weights so tanh' ~ 1.
        w = np.zeros((2, 3))
        params = ActorParams(
            LayerParams(np.eye(3), np.zeros(3)),
            LayerParams(np.eye(3), np.zeros(3)),
            LayerParams(w, np.zeros(2)),
        )
        x = np.array([0.2, 0.3, 0.5])
        target = np.array([0.1, -0.1])
        actions, cache = actor_forward_cached(params, x)
        # L = sum((a - t)^2); with w = 0, a = tanh(0) = 0 and tanh' = 1
        grads, _ = actor_backward(params, cache, 2.0 * (actions - target))
        expect = np.outer(2.0 * (0.0 - target), x)
        np.testing.assert_allclose(grads.l3.weights, expect, rtol=1e-12)

    def test_relu_blocks_gradient_at_negative_preactivation(self):
        params = zero_actor(state_dim=2, hidden=2)
        params.l1.weights[:] = [[1.0, 0.0], [0.0, 1.0]]
        params.l1.bias[:] = [-5.0, 1.0]  # unit 0 strictly negative
        params.l2.weights[:] = np.eye(2)
        params.l3.weights[:] = [[1.0, 1.0], [1.0, 1.0]]
        _, cache = actor_forward_cached(params, np.array([1.0, 1.0]))
        grads, _ = actor_backward(params, cache, np.ones((1, 2)))
        assert np.all(grads.l1.weights[0] == 0.0)
        assert grads.l1.bias[0] == 0.0
        assert np.any(grads.l1.weights[1] != 0.0)

    def test_missing_cache_rejected(self):
        params = init_actor(3, 4, 0)
        with pytest.raises(ContractViolation):
            actor_backward(params, None, np.ones((1, 2)))
        with pytest.raises(ContractViolation):
            critic_backward(init_critic(3, 2, 4, 0), None, np.ones(1))

    def test_actor_loss_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        actor = init_actor(4, 8, 100)
        critic = init_critic(4, 2, 8, 200)
        states = rng.normal(size=(5, 4))

        def loss(a_params):
            acts, _ = actor_forward_cached(a_params, states)
            q, _ = critic_forward_cached(critic, states, acts)
            return -q.mean()

        acts, a_cache = actor_forward_cached(actor, states)
        _, c_cache = critic_forward_cached(critic, states, acts)
        _, _, dq_da = critic_backward(critic, c_cache, -np.ones(5) / 5)
        analytic, _ = actor_backward(actor, a_cache, dq_da)
        numeric = finite_difference(loss, actor)
        assert_grads_close(analytic, numeric)

    def test_critic_loss_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(22)
        critic = init_critic(4, 2, 8, 300)
        states = rng.normal(size=(6, 4))
        actions = rng.uniform(-1, 1, size=(6, 2))
        targets = rng.normal(size=6)

        def loss(c_params):
            q, _ = critic_forward_cached(c_params, states, actions)
            return ((q - targets) ** 2).mean()

        q, cache = critic_forward_cached(critic, states, actions)
        analytic, _, _ = critic_backward(critic, cache, 2.0 * (q - targets) / 6)
        numeric = finite_difference(loss, critic)
        assert_grads_close(analytic, numeric)


class TestAdam:
    def test_zero_gradient_keeps_params_and_bumps_step(self):
        params = init_actor(3, 4, 1)
        grads = tree_map(np.zeros_like, params)
        state = AdamState.for_params(params)
        new_params, new_state, ok = adam_step(params, grads, state, lr=1e-3)
        assert ok
        assert new_state.step_count == 1
        for a, b in zip(nets.leaves(params), nets.leaves(new_params)):
            np.testing.assert_array_equal(a, b)

    def test_first_step_moves_against_gradient_sign(self):
        params = LayerParams(np.array([[1.0]]), np.array([0.5]))
        grads = LayerParams(np.array([[0.3]]), np.array([-0.7]))
        state = AdamState.for_params(params)
        new_params, _, _ = adam_step(params, grads, state, lr=0.01)
        # bias-corrected first step is ~ -lr * sign(g)
        assert new_params.weights[0, 0] == pytest.approx(1.0 - 0.01, rel=1e-6)
        assert new_params.bias[0] == pytest.approx(0.5 + 0.01, rel=1e-6)

    def test_three_step_scalar_recursion(self):
        # independent inline transcription of the moment recurrences
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        theta, m, v = 1.0, 0.0, 0.0
        grad_seq = [0.5, -0.3, 0.1]
        expected = []
        for t, g in enumerate(grad_seq, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta = theta - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            expected.append(theta)
        # frozen values computed from the recursion above
        np.testing.assert_allclose(
            expected, [0.9900000002, 0.9880850198941775, 0.9855453680616368], rtol=0, atol=1e-15
        )

        params = np.array([1.0])
        state = AdamState(m=[np.zeros(1)], v=[np.zeros(1)])
        for g, want in zip(grad_seq, expected):
            params, state, ok = adam_step(params, np.array([g]), state, lr=lr)
            assert ok
            assert params[0] == pytest.approx(want, abs=1e-15)

    def test_non_finite_gradient_rejects_batch(self):
        params = LayerParams(np.array([[1.0]]), np.array([0.5]))
        grads = LayerParams(np.array([[np.nan]]), np.array([0.0]))
        state = AdamState.for_params(params)
        new_params, new_state, ok = adam_step(params, grads, state, lr=0.01)
        assert not ok
        assert new_state.step_count == 0
        np.testing.assert_array_equal(new_params.weights, params.weights)


class TestSoftUpdate:
    def test_tau_one_copies_net(self):
        net = init_actor(3, 4, 5)
        target = init_actor(3, 4, 6)
        updated = soft_update(net, target, 1.0)
        for a, b in zip(nets.leaves(net), nets.leaves(updated)):
            np.testing.assert_array_equal(a, b)

    def test_published_rate_on_unit_entries(self):
        net = np.array([1.0])
        target = np.array([0.0])
        assert soft_update(net, target, 0.005)[0] == pytest.approx(0.005, abs=0)

    def test_half_tau_twice_gives_three_quarters(self):
        net, target = np.array([1.0]), np.array([0.0])
        target = soft_update(net, target, 0.5)
        target = soft_update(net, target, 0.5)
        assert target[0] == 0.75

    def test_tau_zero_is_identity(self):
        net = init_actor(3, 4, 7)
        target = init_actor(3, 4, 8)
        updated = soft_update(net, target, 0.0)
        for a, b in zip(nets.leaves(target), nets.leaves(updated)):
            np.testing.assert_array_equal(a, b)

    def test_tau_out_of_range_rejected(self):
        net, target = np.array([1.0]), np.array([0.0])
        for tau in (-0.1, 1.5):
            with pytest.raises(ContractViolation):
                soft_update(net, target, tau)

    def test_iterated_updates_converge_monotonically(self):
        net = init_actor(3, 4, 9)
        target = init_actor(3, 4, 10)
        dist = lambda t: max(np.abs(a - b).max() for a, b in zip(nets.leaves(net), nets.leaves(t)))
        prev = dist(target)
        for _ in range(50):
            target = soft_update(net, target, 0.1)
            cur = dist(target)
            assert cur <= prev + 1e-15
            prev = cur
        assert prev < dist(init_actor(3, 4, 10)) * 0.1


class TestInit:
    def test_same_seed_bit_identical(self):
        a = init_actor(4, 8, 42)
        b = init_actor(4, 8, 42)
        for x, y in zip(nets.leaves(a), nets.leaves(b)):
            assert np.array_equal(x, y)

    def test_fan_in_range(self):
        layer = init_layer(16, 32, np.random.default_rng(0))
        bound = 1.0 / np.sqrt(16)
        assert np.all(np.abs(layer.weights) <= bound)
        assert np.all(np.abs(layer.bias) <= bound)

    def test_different_seeds_differ(self):
        a = init_actor(4, 8, 1)
        b = init_actor(4, 8, 2)
        assert any(not np.array_equal(x, y) for x, y in zip(nets.leaves(a), nets.leaves(b)))

    def test_zero_dim_rejected(self):
        with pytest.raises(ContractViolation):
            init_layer(0, 4, np.random.default_rng(0))
