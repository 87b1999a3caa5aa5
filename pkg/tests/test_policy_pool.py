import dataclasses
from collections import Counter

import numpy as np
import pytest

from ddpm_policy import NoiseSchedule
from envs import ParticleTag, ScalarDuel
from errors import ConfigurationError
from game_core import ConstantPolicy, seed_stream
from policy_pool import (INITIAL_ITERATION, MixturePolicy, PolicyCheckpoint, actor_from_checkpoint, actor_obs_dim,
                         build_actor, initial_checkpoint, mixture_sample_policy, mixture_update)


def constant(action, iteration, side=1):
    return PolicyCheckpoint.from_actor(ConstantPolicy([action], 1), iteration, side)


def grown_mixture(size):
    mixture = MixturePolicy()
    for k in range(size):
        mixture = mixture_update(mixture, constant(float(k) / size, k))
    return mixture


class TestMixtureUpdate:

    @pytest.mark.parametrize('size', [1, 2, 7, 100])
    def test_weights_stay_uniform(self, size):
        mixture = grown_mixture(size)
        assert len(mixture) == size
        np.testing.assert_allclose(mixture.weights, np.full(size, 1.0 / size), atol=1e-12)
        assert abs(mixture.weights.sum() - 1.0) <= 1e-12

    def test_old_mixture_unchanged(self):
        first = grown_mixture(2)
        second = mixture_update(first, constant(0.9, 2))
        assert len(first) == 2 and len(second) == 3
        assert second.digests()[:2] == first.digests()

    def test_bad_weights(self):
        pool = [constant(0.0, 0), constant(1.0, 1)]
        with pytest.raises(ConfigurationError):
            MixturePolicy(pool, weights=[0.5, 0.6])
        with pytest.raises(ConfigurationError):
            MixturePolicy(pool, weights=[1.0])
        with pytest.raises(ConfigurationError):
            MixturePolicy(pool, weights=[1.5, -0.5])

    def test_explicit_weights(self):
        mixture = MixturePolicy([constant(0.0, 0), constant(1.0, 1)], weights=[0.25, 0.75])
        rng = seed_stream(0, 3)
        counts = Counter()
        for _ in range(20000):
            mixture_sample_policy(mixture, rng)
            counts[mixture.active] += 1
        assert counts[1] / 20000 == pytest.approx(0.75, abs=0.015)


class TestSampling:

    def test_empirical_frequencies(self):
        mixture = grown_mixture(4)
        rng = np.random.default_rng(0)
        counts = Counter()
        for _ in range(30000):
            mixture_sample_policy(mixture, rng)
            counts[mixture.active] += 1
        for index in range(4):
            assert counts[index] / 30000 == pytest.approx(0.25, abs=0.01)

    def test_seeded_draws_repeat(self):
        mixture = grown_mixture(5)
        draws = []
        for _ in range(2):
            rng = seed_stream(11, 3)
            picks = []
            for _ in range(50):
                mixture_sample_policy(mixture, rng)
                picks.append(mixture.active)
            draws.append(picks)
        assert draws[0] == draws[1]

    def test_empty_pool(self):
        with pytest.raises(ConfigurationError):
            mixture_sample_policy(MixturePolicy(), np.random.default_rng(0))

    def test_act_before_reset(self):
        mixture = grown_mixture(2)
        with pytest.raises(ConfigurationError):
            mixture.act_member(0, np.zeros(1), np.random.default_rng(0))

    def test_policy_built_once_per_index(self):
        mixture = grown_mixture(2)
        first = mixture.policy_at(1)
        assert mixture.policy_at(1) is first
        assert mixture_update(mixture, constant(0.9, 2)).policy_at(1) is first

    def test_active_policy_is_played(self):
        mixture = MixturePolicy([constant(-0.5, 0), constant(0.5, 1)])
        rng = np.random.default_rng(2)
        for _ in range(20):
            policy = mixture_sample_policy(mixture, rng)
            expected = policy.act_member(0, np.zeros(1), rng)
            np.testing.assert_array_equal(mixture.act_member(0, np.zeros(1), rng), expected)
            assert expected[0] == (-0.5 if mixture.active == 0 else 0.5)


class TestPolicyCheckpoint:

    def test_frozen(self):
        checkpoint = constant(0.2, 0)
        with pytest.raises(dataclasses.FrozenInstanceError):
            checkpoint.fp_iteration = 3
        with pytest.raises(ValueError):
            checkpoint.params[0] = 1.0

    def test_params_copied(self):
        params = np.array([0.2], dtype=np.float32)
        checkpoint = PolicyCheckpoint('constant', 0, 0, {'obs_dim': 1, 'act_dim': 1}, params)
        params[0] = 5.0
        assert checkpoint.params[0] == pytest.approx(0.2)

    def test_digest(self):
        assert constant(0.2, 0).digest() == constant(0.2, 0).digest()
        assert constant(0.2, 0).digest() != constant(0.3, 0).digest()
        assert constant(0.2, 0).digest() != constant(0.2, 1).digest()

    def test_digest_leaves_critic_out(self):
        arch = {'obs_dim': 1, 'act_dim': 1}
        plain = PolicyCheckpoint('constant', 0, 0, arch, [0.2])
        with_critic = PolicyCheckpoint('constant', 0, 0, arch, [0.2], critic={'q1': np.ones(3)})
        assert plain.digest() == with_critic.digest()
        with pytest.raises(ValueError):
            with_critic.critic['q1'][0] = 0.0

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            PolicyCheckpoint('flow', 0, 0, {}, np.zeros(1))

    def test_name(self):
        assert constant(0.0, 4).name == 'iter4'

    @pytest.mark.parametrize('kind', ['diffusion', 'gaussian'])
    def test_restored_actor_samples_identically(self, kind, rng):
        actor = build_actor(kind, 2, 1, -1.0, 1.0, NoiseSchedule.build('vp', 4), (8,), rng)
        checkpoint = PolicyCheckpoint.from_actor(actor, 0, 0)
        restored = actor_from_checkpoint(checkpoint)
        obs = rng.standard_normal((10, 2))
        np.testing.assert_array_equal(actor.sample(obs, np.random.default_rng(3)),
                                      restored.sample(obs, np.random.default_rng(3)))

    def test_build_rejects_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            build_actor('constant', 1, 1, -1.0, 1.0)


class TestInitialCheckpoint:

    def test_team_observation_width(self):
        spec = ParticleTag(num_pursuers=3).spec
        assert actor_obs_dim(spec, 1) == spec.obs_dims[1] + 3
        assert actor_obs_dim(spec, 0) == spec.obs_dims[0]

    def test_initial_checkpoint(self):
        spec = ParticleTag(num_pursuers=2).spec
        checkpoint = initial_checkpoint(spec, 1, 'diffusion', seed_stream(0, 4), hidden=(8,))
        assert checkpoint.fp_iteration == INITIAL_ITERATION
        assert checkpoint.team_size == 2
        mixture = MixturePolicy([checkpoint])
        assert (mixture.obs_dim, mixture.act_dim, mixture.team_size) == (spec.obs_dims[1], 2, 2)

    def test_initial_actions_in_bounds(self):
        spec = ScalarDuel().spec
        checkpoint = initial_checkpoint(spec, 0, 'gaussian', seed_stream(1, 4))
        actions = actor_from_checkpoint(checkpoint).sample(np.ones((100, 1)), np.random.default_rng(0))
        assert np.all(np.abs(actions) <= 1.0)
