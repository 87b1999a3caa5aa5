"""Deception game: two egos race to a hidden goal landmark past one adversary."""

from typing import List

import numpy as np

from envs.particles import (ParticleState, check_radius, integrate, place, sample_points,
                            trace_rows)
from errors import ConfigurationError
from game_core import Env, GameSpec, Outcome

EGOS = (0, 1)
ADVERSARY = 2


class ParticleDeception(Env):
    """Agents 0 and 1 are egos, agent 2 the adversary; two landmarks, one true goal.

    Only the egos observe which landmark is the goal. The episode ends when
    an ego reaches the goal (ego win) or when the adversary reaches the
    goal or intercepts the ego nearest to it (adversary win). An ego win
    requires arriving uncaught, so the adversary takes the step when both
    happen together. Catching the other ego (the decoy) does not end play.
    """

    name = 'particle-deception'
    traceable = True

    def __init__(self, dt: float = 0.1, rho: float = 0.1, horizon: int = 100, ego_speed: float = 1.0,
                 adversary_speed: float = 1.0, discount: float = 0.99, landmark_separation: float = 0.6):
        check_radius(rho, dt)
        if ego_speed <= 0 or adversary_speed <= 0:
            raise ConfigurationError("speeds must be positive")
        super().__init__(GameSpec(
            num_agents=3, obs_dims=(14, 14, 12), act_dims=(2, 2, 2), horizon=horizon,
            discount=discount, zero_sum=True, reward_bounds=(-1.0, 1.0),
            sides=(EGOS, (ADVERSARY,)),
        ))
        self.dt = dt
        self.rho = rho
        self.landmark_separation = landmark_separation
        self.max_speeds = np.array([ego_speed, ego_speed, adversary_speed])
        self.state = ParticleState(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((2, 2)), 0)
        self.result = Outcome.NONE
        self.decoy_catches = 0

    def _reset_state(self, rng: np.random.Generator):
        landmarks = sample_points(rng, 2, -0.8, 0.8)
        for _ in range(100):
            if np.linalg.norm(landmarks[0] - landmarks[1]) >= self.landmark_separation:
                break
            landmarks = sample_points(rng, 2, -0.8, 0.8)
        goal = int(rng.integers(2))
        positions = sample_points(rng, 3)
        for _ in range(100):
            to_landmarks = np.linalg.norm(positions[:, None, :] - landmarks[None, :, :], axis=2)
            to_adversary = np.linalg.norm(positions[list(EGOS)] - positions[ADVERSARY], axis=1)
            if np.all(to_landmarks >= 2 * self.rho) and np.all(to_adversary >= 2 * self.rho):
                break
            positions = sample_points(rng, 3)
        self.state = ParticleState(positions, np.zeros((3, 2)), landmarks, goal)
        self.result = Outcome.NONE
        self.decoy_catches = 0

    def set_layout(self, positions, landmarks, true_goal_index: int, velocities=None):
        """Overwrite positions, landmarks and goal (scripted scenarios)."""
        place(self.state, positions, velocities)
        self.state.landmarks = np.asarray(landmarks, dtype=np.float64).reshape(2, 2)
        self.state.true_goal_index = int(true_goal_index)

    @property
    def goal(self) -> np.ndarray:
        return self.state.landmarks[self.state.true_goal_index]

    def _advance(self, actions: List[np.ndarray]):
        integrate(self.state, actions, self.max_speeds, self.dt)
        pos = self.state.positions
        ego_to_goal = np.linalg.norm(pos[list(EGOS)] - self.goal, axis=1)
        nearest = int(np.argmin(ego_to_goal))
        decoy = 1 - nearest
        intercept = np.linalg.norm(pos[ADVERSARY] - pos[nearest]) < self.rho
        adversary_home = np.linalg.norm(pos[ADVERSARY] - self.goal) < self.rho
        ego_home = bool(np.any(ego_to_goal < self.rho))
        if np.linalg.norm(pos[ADVERSARY] - pos[decoy]) < self.rho:
            self.decoy_catches += 1

        rewards = np.zeros(3)
        if intercept or adversary_home:
            self.result = Outcome.OPP_WIN
            rewards[list(EGOS)] = -0.5
            rewards[ADVERSARY] = 1.0
            return rewards, True
        if ego_home:
            self.result = Outcome.EGO_WIN
            rewards[list(EGOS)] = 0.5
            rewards[ADVERSARY] = -1.0
            return rewards, True
        return rewards, False

    def _observe(self) -> List[np.ndarray]:
        pos, vel = self.state.positions, self.state.velocities
        obs = []
        for i in range(3):
            parts = [pos[i], vel[i], (self.state.landmarks - pos[i]).reshape(-1)]
            if i != ADVERSARY:
                parts.append(self.goal - pos[i])
            parts.extend(pos[j] - pos[i] for j in range(3) if j != i)
            obs.append(np.concatenate(parts).astype(np.float32))
        return obs

    def outcome(self) -> Outcome:
        if self.result is Outcome.NONE and self.t >= self.spec.horizon:
            return Outcome.DRAW
        return self.result

    def episode_info(self):
        return {'decoy_catches': float(self.decoy_catches)}

    def trace_state(self):
        return trace_rows(self.state)
