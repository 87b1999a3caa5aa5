import numpy as np
import pytest

from br_learner import BrConfig
from config.experiment import DiffusionConfig
from ddpm_policy import NoiseSchedule
from envs import ParticleTag, ScalarDuel, TrackDuel
from envs.grid_oracle import constant_side
from errors import ConfigurationError
from exploitability import (ExploitabilityReport, checkpoint_entries, cross_play, measure_exploitability,
                            resolve_oracle)
from game_core import ConstantPolicy, TeamActor, seed_stream
from policy_pool import MixturePolicy, PolicyCheckpoint, initial_checkpoint, policy_from_checkpoint


def duel_profile(x, y):
    env = ScalarDuel()
    return env, (constant_side(env, 0, [x]), constant_side(env, 1, [y]))


def plus_minus_mixture(side):
    return MixturePolicy([PolicyCheckpoint.from_actor(ConstantPolicy([a], 1), k, side)
                          for k, a in enumerate((-1.0, 1.0))])


class TestMeasureExploitability:

    def test_zero_profile(self):
        env, profile = duel_profile(0.0, 0.0)
        report = measure_exploitability(env, profile, 'grid', episodes=10)
        assert report.epsilon == [0.0, 0.0]
        assert report.total == 0.0

    def test_pure_plus_one(self):
        env, profile = duel_profile(1.0, 1.0)
        report = measure_exploitability(env, profile, episodes=10)
        assert report.oracle == 'grid'
        assert report.epsilon == pytest.approx([0.0, 2.0])
        assert report.total == pytest.approx(2.0)
        assert report.br_actions == pytest.approx([1.0, -1.0])
        assert not report.is_lower_bound

    def test_equilibrium_mixture(self):
        env = ScalarDuel()
        report = measure_exploitability(env, (plus_minus_mixture(0), plus_minus_mixture(1)), 'grid',
                                        episodes=2000, seed=3, grid_n=21)
        assert abs(report.total) < 0.15
        assert all(h > 0 for h in report.half_widths)

    def test_same_policy_in_both_seats(self):
        env = TrackDuel(horizon=5)
        policy = policy_from_checkpoint(initial_checkpoint(env.spec, 0, 'gaussian', seed_stream(0, 4),
                                                           hidden=(8,)))
        config = BrConfig(env_steps=10, warmup_steps=10, batch_size=4, hidden=(8,))
        report = measure_exploitability(env, (policy, policy), 'rl', episodes=2, br_configs=[config, config])
        assert report.consistent()

    def test_rejects_zero_episodes(self):
        env, profile = duel_profile(0.0, 0.0)
        with pytest.raises(ConfigurationError):
            measure_exploitability(env, profile, 'grid', episodes=0)

    def test_rl_oracle_small_budget_warns(self):
        env, profile = duel_profile(0.5, -0.5)
        config = BrConfig(warmup_steps=20, batch_size=4, hidden=(8,), diffusion=DiffusionConfig(steps=2))
        report = measure_exploitability(env, profile, 'rl', episodes=5, br_configs=[config, config], budget=10)
        assert report.is_lower_bound
        assert len(report.warnings) == 2
        assert 'warmup' in report.warnings[0]


class TestReport:

    def test_consistency(self):
        report = ExploitabilityReport.build([0.5, 0.3], [0.1, -0.1], [0.0, 0.0], 10, 'grid')
        assert report.epsilon == pytest.approx([0.4, 0.4])
        assert report.consistent()
        report.total += 1.0
        assert not report.consistent()

    def test_dict_round_trip(self):
        report = ExploitabilityReport.build([0.5, 0.3], [0.1, -0.1], [0.02, 0.03], 10, 'rl', iteration=4,
                                            warnings=['short budget'])
        data = report.to_dict()
        assert data['eps_ego'] == report.epsilon[0]
        assert data['lower_bound'] is True
        assert ExploitabilityReport.from_dict(data) == report


class TestResolveOracle:

    def test_auto(self):
        assert resolve_oracle(ScalarDuel(), 'auto') == 'grid'
        assert resolve_oracle(ParticleTag(), 'auto') == 'rl'

    def test_grid_on_multistep_game(self):
        with pytest.raises(ConfigurationError):
            resolve_oracle(ParticleTag(), 'grid')

    def test_unknown(self):
        with pytest.raises(ConfigurationError):
            resolve_oracle(ScalarDuel(), 'exact')


class TestCrossPlay:

    def setup_method(self):
        self.env = ScalarDuel()
        self.rows = [('plus', constant_side(self.env, 0, [1.0])), ('minus', constant_side(self.env, 0, [-1.0]))]
        self.cols = [('plus', constant_side(self.env, 1, [1.0])), ('half', constant_side(self.env, 1, [-0.5]))]

    def test_rejects_zero_episodes(self):
        with pytest.raises(ConfigurationError):
            cross_play(self.env, self.rows, 0, seed=0, opponents=self.cols)

    def test_incompatible_pair(self):
        wide = TeamActor(ConstantPolicy([0.0, 0.0], 1))
        with pytest.raises(ConfigurationError, match='plus vs wide'):
            cross_play(self.env, self.rows, 3, seed=0, opponents=[('wide', wide)])

    def test_tallies(self):
        table = cross_play(self.env, self.rows, 8, seed=0, opponents=self.cols, include_self=True)
        for i, j, _, _ in table.cells():
            assert table.wins[i, j] + table.draws[i, j] + table.losses[i, j] == 8
        assert table.wins[0, 0] == 8
        assert table.losses[1, 0] == 8
        assert table.mean_payoff[0, 1] == pytest.approx(-0.5)

    def test_same_name_skipped_without_self_play(self):
        table = cross_play(self.env, self.rows, 4, seed=0, opponents=self.cols)
        assert not table.played[0, 0]
        assert table.played.sum() == 3

    def test_summary_counts(self):
        table = cross_play(self.env, self.rows, 5, seed=0, opponents=self.cols, include_self=True)
        summary = table.summary()
        games = sum(e['wins'] + e['draws'] + e['losses'] for e in summary.values())
        assert games == 2 * 4 * 5
        assert summary['plus']['pairs'] == 4

    def test_deterministic(self):
        first = cross_play(self.env, self.rows, 6, seed=2, opponents=self.cols)
        second = cross_play(self.env, self.rows, 6, seed=2, opponents=self.cols)
        np.testing.assert_array_equal(first.wins, second.wins)
        np.testing.assert_array_equal(first.mean_payoff, second.mean_payoff)

    def test_symmetric_self_play_is_balanced(self):
        env = TrackDuel(horizon=20)
        checkpoint = initial_checkpoint(env.spec, 0, 'diffusion', seed_stream(1, 4), NoiseSchedule.build('vp', 4),
                                        hidden=(8, 8))
        entries = checkpoint_entries([('random', checkpoint)])
        episodes = 60
        table = cross_play(env, entries, episodes, seed=0, include_self=True)
        assert abs(int(table.wins[0, 0]) - int(table.losses[0, 0])) <= 3 * np.sqrt(episodes)
        assert 'collisions' in table.info[('random', 'random')]
