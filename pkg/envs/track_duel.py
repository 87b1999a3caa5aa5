"""Two-car duel on a closed track in curvilinear coordinates (s, l, v)."""

from dataclasses import dataclass
from typing import List

import numpy as np

from errors import ConfigurationError
from game_core import Env, GameSpec, Outcome

EGO, OPP = 0, 1


@dataclass
class TrackState:
    s: np.ndarray
    lateral: np.ndarray
    v: np.ndarray
    step: int = 0


class TrackDuel(Env):
    """Each car earns the per-step change of its signed arc-length lead, over L.

    Collisions cost both cars `collision_penalty`; touching the track edge
    costs the offender `wall_penalty`. With both penalties and the progress
    bonus at zero the game is exactly zero-sum.
    """

    name = 'track-duel'
    traceable = True

    def __init__(self, length: float = 100.0, half_width: float = 1.0, v_max: float = 10.0,
                 accel: float = 5.0, lateral_speed: float = 1.0, dt: float = 0.1, horizon: int = 200,
                 collision_s: float = 0.5, collision_l: float = 0.3, collision_penalty: float = 0.5,
                 wall_penalty: float = 0.1, progress_bonus: float = 0.0, discount: float = 0.99,
                 min_start_gap: float = 1.0, max_start_gap: float = 3.0):
        if length <= 0 or half_width <= 0 or v_max <= 0 or dt <= 0:
            raise ConfigurationError("track length, width, v_max and dt must be positive")
        if collision_penalty < 0 or wall_penalty < 0 or progress_bonus < 0:
            raise ConfigurationError("penalties and progress bonus must be non-negative")
        step_gain = v_max * dt / length
        zero_sum = collision_penalty == 0 and wall_penalty == 0 and progress_bonus == 0
        super().__init__(GameSpec(
            num_agents=2, obs_dims=(5, 5), act_dims=(2, 2), horizon=horizon, discount=discount,
            zero_sum=zero_sum,
            reward_bounds=(-step_gain - collision_penalty - wall_penalty, step_gain * (1.0 + progress_bonus)),
            symmetric=True,
        ))
        self.length = length
        self.half_width = half_width
        self.v_max = v_max
        self.accel = accel
        self.lateral_speed = lateral_speed
        self.dt = dt
        self.collision_s = collision_s
        self.collision_l = collision_l
        self.collision_penalty = collision_penalty
        self.wall_penalty = wall_penalty
        self.progress_bonus = progress_bonus
        self.start_gap = (min_start_gap, max_start_gap)
        self.state = TrackState(np.zeros(2), np.zeros(2), np.zeros(2))
        self._reset_counters()

    def _reset_counters(self):
        self.collisions = 0
        self.wall_hits = np.zeros(2, dtype=int)
        self.overtakes = np.zeros(2, dtype=int)

    def wrap(self, ds):
        """Signed circular difference in (-L/2, L/2]."""
        half = self.length / 2.0
        return half - np.mod(half - ds, self.length)

    def gap(self) -> float:
        return float(self.wrap(self.state.s[EGO] - self.state.s[OPP]))

    def _reset_state(self, rng: np.random.Generator):
        ahead = int(rng.integers(2))
        gap0 = rng.uniform(*self.start_gap)
        s = np.zeros(2)
        s[1 - ahead] = rng.uniform(0.0, self.length)
        s[ahead] = np.mod(s[1 - ahead] + gap0, self.length)
        lateral = rng.uniform(-self.half_width / 2, self.half_width / 2, size=2)
        v = rng.uniform(0.0, 0.5 * self.v_max, size=2)
        self.state = TrackState(s, lateral, v)
        self._reset_counters()

    def set_state(self, s, lateral, v):
        """Overwrite both cars' (s, l, v) (scripted scenarios)."""
        self.state = TrackState(np.mod(np.asarray(s, dtype=np.float64), self.length),
                                np.asarray(lateral, dtype=np.float64).copy(),
                                np.asarray(v, dtype=np.float64).copy())

    def _advance(self, actions: List[np.ndarray]):
        st = self.state
        gap_before = self.gap()
        throttle = np.array([a[0] for a in actions])
        steer = np.array([a[1] for a in actions])
        st.v = np.clip(st.v + throttle * self.accel * self.dt, 0.0, self.v_max)
        travelled = st.v * self.dt
        st.s = np.mod(st.s + travelled, self.length)
        st.lateral = np.clip(st.lateral + steer * self.lateral_speed * self.dt, -self.half_width, self.half_width)
        st.step += 1
        gap_after = self.gap()

        progress = float(self.wrap(gap_after - gap_before)) / self.length
        rewards = np.array([progress, -progress])
        rewards += self.progress_bonus * travelled / self.length
        if abs(gap_after) < self.collision_s and abs(st.lateral[EGO] - st.lateral[OPP]) < self.collision_l:
            self.collisions += 1
            rewards -= self.collision_penalty
        touching = np.abs(st.lateral) >= self.half_width
        self.wall_hits += touching
        rewards -= self.wall_penalty * touching
        if abs(gap_before) < self.length / 4:
            if gap_before <= 0 < gap_after:
                self.overtakes[EGO] += 1
            elif gap_before >= 0 > gap_after:
                self.overtakes[OPP] += 1
        return rewards, False

    def _observe(self) -> List[np.ndarray]:
        st = self.state
        obs = []
        for i, j in ((EGO, OPP), (OPP, EGO)):
            lead = float(self.wrap(st.s[i] - st.s[j]))
            obs.append(np.array([
                st.v[i] / self.v_max, st.lateral[i] / self.half_width, lead / (self.length / 2),
                st.lateral[j] / self.half_width, st.v[j] / self.v_max,
            ], dtype=np.float32))
        return obs

    def outcome(self) -> Outcome:
        if self.t < self.spec.horizon:
            return Outcome.NONE
        gap = self.gap()
        if gap > 0:
            return Outcome.EGO_WIN
        if gap < 0:
            return Outcome.OPP_WIN
        return Outcome.DRAW

    def episode_info(self):
        return {
            'collisions': float(self.collisions),
            'wall_hits_ego': float(self.wall_hits[EGO]),
            'wall_hits_opp': float(self.wall_hits[OPP]),
            'overtakes_ego': float(self.overtakes[EGO]),
            'overtakes_opp': float(self.overtakes[OPP]),
        }

    def trace_state(self):
        radius = self.length / (2 * np.pi)
        rows = []
        for i in (EGO, OPP):
            angle = 2 * np.pi * self.state.s[i] / self.length
            r = radius + self.state.lateral[i]
            rows.append({'s': float(self.state.s[i]), 'l': float(self.state.lateral[i]),
                         'v': float(self.state.v[i]), 'x': float(r * np.cos(angle)),
                         'y': float(r * np.sin(angle))})
        return rows
