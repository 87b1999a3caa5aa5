import numpy as np
import pytest

from critic import CRITIC_NETS, TwinCritic
from errors import ConfigurationError, NumericError
from tensor_nn import Mlp, mlp_backward


def constant_net(in_dim, value):
    net = Mlp([in_dim, 1])
    net.weights[0][:] = 0.0
    net.biases[0][:] = value
    return net


def bandit_batch(rng, size, reward=0.7, terminated=True):
    return {
        'states': np.zeros((size, 1), dtype=np.float32),
        'actions': rng.uniform(-1, 1, (size, 1)).astype(np.float32),
        'rewards': np.full(size, reward),
        'next_states': np.zeros((size, 1), dtype=np.float32),
        'terminated': np.full(size, terminated),
    }


class TestTdTarget:

    def setup_method(self):
        self.critic = TwinCritic(1, 1, gamma=0.9)
        self.critic.q1_target = constant_net(2, 2.0)
        self.critic.q2_target = constant_net(2, 3.0)

    def test_uses_smaller_target(self):
        y = self.critic.td_target([1.0], np.zeros((1, 1)), np.zeros((1, 1)), [False])
        assert y[0] == pytest.approx(2.8)

    def test_terminal_drops_bootstrap(self):
        y = self.critic.td_target([1.0, -0.5], np.zeros((2, 1)), np.zeros((2, 1)), [True, True])
        np.testing.assert_allclose(y, [1.0, -0.5])

    def test_zero_discount(self):
        self.critic.gamma = 0.0
        y = self.critic.td_target([0.25], np.zeros((1, 1)), np.zeros((1, 1)), [False])
        assert y[0] == pytest.approx(0.25)

    def test_sample_axis(self):
        y = self.critic.td_target([0.0, 0.0], np.zeros((2, 1)), np.zeros((3, 2, 1)), [False, False])
        np.testing.assert_allclose(y, [1.8, 1.8])

    def test_terminal_batch_needs_no_next_actions(self):
        y = self.critic.td_target([0.5, 1.0], np.zeros((2, 1)), None, [True, True])
        np.testing.assert_allclose(y, [0.5, 1.0])
        with pytest.raises(ConfigurationError):
            self.critic.td_target([0.5, 1.0], np.zeros((2, 1)), None, [True, False])


class TestCriticUpdate:

    @pytest.mark.parametrize('gamma, terminated, value', [(0.0, True, 0.7), (0.5, False, 1.4)])
    def test_constant_bandit(self, gamma, terminated, value):
        rng = np.random.default_rng(0)
        critic = TwinCritic(1, 1, gamma=gamma, tau=0.05, lr=1e-3, hidden=(16, 16), rng=np.random.default_rng(1))
        for _ in range(2000):
            batch = bandit_batch(rng, 64, terminated=terminated)
            critic.critic_update(batch, batch['actions'])
        q1, q2 = critic.q_values(np.zeros((50, 1)), np.linspace(-1, 1, 50)[:, None])
        np.testing.assert_allclose(q1, value, atol=0.01)
        np.testing.assert_allclose(q2, value, atol=0.01)

    def test_same_seed_same_losses(self):
        losses = []
        for _ in range(2):
            critic = TwinCritic(1, 1, gamma=0.5, rng=np.random.default_rng(3))
            batch = bandit_batch(np.random.default_rng(4), 32, terminated=False)
            losses.append([critic.critic_update(batch, batch['actions']) for _ in range(5)])
        assert losses[0] == losses[1]

    def test_empty_batch(self):
        critic = TwinCritic(1, 1, gamma=0.9)
        batch = bandit_batch(np.random.default_rng(0), 0)
        with pytest.raises(ConfigurationError):
            critic.critic_update(batch, batch['actions'])

    def test_non_finite_reward_reports_index(self):
        critic = TwinCritic(1, 1, gamma=0.9)
        batch = bandit_batch(np.random.default_rng(0), 4)
        batch['rewards'][2] = np.nan
        with pytest.raises(NumericError, match='batch index 2'):
            critic.critic_update(batch, batch['actions'])

    def test_width_check(self):
        critic = TwinCritic(2, 1, gamma=0.9)
        with pytest.raises(ConfigurationError):
            critic.q_values(np.zeros((1, 3)), np.zeros((1, 1)))


class TestTargets:

    def test_targets_lag_geometrically(self):
        critic = TwinCritic(1, 1, gamma=0.9, tau=0.1, rng=np.random.default_rng(2))
        critic.q1_target.load_flat(np.zeros(critic.q1.num_params))
        online = critic.q1.flatten()
        for _ in range(10):
            critic.soft_update()
        np.testing.assert_allclose(online - critic.q1_target.flatten(), online * 0.9 ** 10, atol=1e-6)

    def test_sync(self):
        critic = TwinCritic(1, 1, gamma=0.9)
        critic.q2_target.load_flat(np.zeros(critic.q2.num_params))
        critic.sync_targets()
        np.testing.assert_array_equal(critic.q2_target.flatten(), critic.q2.flatten())

    def test_state_restores_all_networks(self):
        source = TwinCritic(1, 1, gamma=0.9, tau=0.5, rng=np.random.default_rng(2))
        batch = bandit_batch(np.random.default_rng(0), 16, terminated=False)
        source.critic_update(batch, batch['actions'])
        restored = TwinCritic(1, 1, gamma=0.9, rng=np.random.default_rng(9))
        restored.load_state(source.state())
        for name in CRITIC_NETS:
            np.testing.assert_array_equal(getattr(restored, name).flatten(), getattr(source, name).flatten())

    def test_state_must_name_every_network(self):
        critic = TwinCritic(1, 1, gamma=0.9)
        state = critic.state()
        del state['q2_target']
        with pytest.raises(ConfigurationError, match='q2_target'):
            critic.load_state(state)


class TestActionGradient:

    def test_follows_smaller_critic(self, rng):
        critic = TwinCritic(2, 1, gamma=0.9, rng=rng)
        critic.q2 = critic.q1.copy()
        critic.q2.biases[-1][:] += 1.0
        states, actions = rng.standard_normal((6, 2)), rng.uniform(-1, 1, (6, 1))
        q, grad = critic.q_min_and_action_grad(states, actions)
        x = np.concatenate([states, actions], axis=1).astype(np.float32)
        np.testing.assert_allclose(q, critic.q1.forward(x)[:, 0])
        _, expected = mlp_backward(critic.q1, x, np.ones((6, 1), dtype=np.float32))
        np.testing.assert_allclose(grad, expected[:, 2:], rtol=1e-5)

    def test_tie_counts_once(self, rng):
        critic = TwinCritic(1, 1, gamma=0.9, rng=rng)
        critic.q2 = critic.q1.copy()
        x = np.array([[0.2, -0.4]], dtype=np.float32)
        _, grad = critic.q_min_and_action_grad(x[:, :1], x[:, 1:])
        _, expected = mlp_backward(critic.q1, x, np.ones((1, 1), dtype=np.float32))
        np.testing.assert_allclose(grad, expected[:, 1:], rtol=1e-5)

    def test_constant_critic_is_flat(self):
        critic = TwinCritic(1, 1, gamma=0.9)
        critic.q1 = constant_net(2, 0.5)
        critic.q2 = constant_net(2, 0.8)
        q, grad = critic.q_min_and_action_grad(np.zeros((3, 1)), np.zeros((3, 1)))
        np.testing.assert_allclose(q, 0.5)
        np.testing.assert_array_equal(grad, np.zeros((3, 1)))
