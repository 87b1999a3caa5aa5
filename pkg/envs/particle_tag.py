"""Pursuit game: one fast evader (ego) against a team of slower pursuers."""

from typing import List

import numpy as np

from envs.particles import (ParticleState, check_radius, integrate, place, relative_block,
                            sample_points, trace_rows)
from errors import ConfigurationError
from game_core import Env, GameSpec, Outcome


class ParticleTag(Env):
    """Agent 0 evades; agents 1..m pursue. Capture within `rho` ends the episode.

    On capture the ego receives -1 and the pursuers split +1 equally.
    Surviving to the horizon is an ego win with zero reward.
    """

    name = 'particle-tag'
    traceable = True

    def __init__(self, num_pursuers: int = 3, dt: float = 0.1, rho: float = 0.1, horizon: int = 100,
                 ego_speed: float = 1.0, pursuer_speed_ratio: float = 0.8, discount: float = 0.99,
                 spawn_clearance: float = 0.3):
        if not 1 <= num_pursuers <= 3:
            raise ConfigurationError("particle-tag supports 1 to 3 pursuers")
        if not 0 < pursuer_speed_ratio <= 1:
            raise ConfigurationError("pursuers may not be faster than the ego")
        check_radius(rho, dt)
        n = num_pursuers + 1
        obs_dim = 2 + 4 * (n - 1)
        super().__init__(GameSpec(
            num_agents=n, obs_dims=(obs_dim,) * n, act_dims=(2,) * n, horizon=horizon,
            discount=discount, zero_sum=True, reward_bounds=(-1.0, 1.0),
            sides=((0,), tuple(range(1, n))),
        ))
        self.num_pursuers = num_pursuers
        self.dt = dt
        self.rho = rho
        self.spawn_clearance = spawn_clearance
        self.max_speeds = np.array([ego_speed] + [ego_speed * pursuer_speed_ratio] * num_pursuers)
        self.state = ParticleState(np.zeros((n, 2)), np.zeros((n, 2)))
        self.captured = False

    def _reset_state(self, rng: np.random.Generator):
        n = self.spec.num_agents
        positions = sample_points(rng, n)
        for _ in range(100):
            gaps = np.linalg.norm(positions[1:] - positions[0], axis=1)
            if np.all(gaps >= self.spawn_clearance):
                break
            positions[1:] = sample_points(rng, n - 1)
        self.state = ParticleState(positions, np.zeros((n, 2)))
        self.captured = False

    def set_positions(self, positions, velocities=None):
        """Overwrite the arena state (scripted scenarios)."""
        place(self.state, positions, velocities)

    def _advance(self, actions: List[np.ndarray]):
        integrate(self.state, actions, self.max_speeds, self.dt)
        rewards = np.zeros(self.spec.num_agents)
        gaps = np.linalg.norm(self.state.positions[1:] - self.state.positions[0], axis=1)
        if np.any(gaps < self.rho):
            self.captured = True
            rewards[0] = -1.0
            rewards[1:] = 1.0 / self.num_pursuers
            return rewards, True
        return rewards, False

    def _observe(self) -> List[np.ndarray]:
        obs = []
        for i in range(self.spec.num_agents):
            parts = [self.state.positions[i]] + relative_block(self.state, i)
            obs.append(np.concatenate(parts).astype(np.float32))
        return obs

    def outcome(self) -> Outcome:
        if self.captured:
            return Outcome.OPP_WIN
        if self.t >= self.spec.horizon:
            return Outcome.EGO_WIN
        return Outcome.NONE

    def episode_info(self):
        return {'captures': float(self.captured)}

    def trace_state(self):
        return trace_rows(self.state)
