"""Shared point-mass kinematics for the particle games."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from errors import ConfigurationError

ARENA = 1.0


@dataclass
class ParticleState:
    positions: np.ndarray
    velocities: np.ndarray
    landmarks: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    true_goal_index: int = -1
    step: int = 0


def integrate(state: ParticleState, actions: List[np.ndarray], max_speeds: np.ndarray, dt: float):
    """Euler step with per-agent speed caps; positions stay inside the arena."""
    commands = np.array([np.asarray(a, dtype=np.float64)[:2] for a in actions])
    velocities = commands * max_speeds[:, None]
    speeds = np.linalg.norm(velocities, axis=1)
    over = speeds > max_speeds
    velocities[over] *= (max_speeds[over] / speeds[over])[:, None]
    state.velocities = velocities
    state.positions = np.clip(state.positions + velocities * dt, -ARENA, ARENA)
    state.step += 1


def sample_points(rng: np.random.Generator, count: int, low: float = -ARENA, high: float = ARENA) -> np.ndarray:
    return rng.uniform(low, high, size=(count, 2))


def relative_block(state: ParticleState, agent: int, include_velocity: bool = True) -> List[np.ndarray]:
    """Positions (and velocities) of every other agent in `agent`'s frame, index order."""
    parts = []
    for j in range(state.positions.shape[0]):
        if j == agent:
            continue
        parts.append(state.positions[j] - state.positions[agent])
        if include_velocity:
            parts.append(state.velocities[j] - state.velocities[agent])
    return parts


def check_radius(rho: float, dt: float):
    if rho <= 0 or dt <= 0:
        raise ConfigurationError("capture radius and dt must be positive")


def trace_rows(state: ParticleState) -> List[Dict[str, float]]:
    return [
        {'x': float(p[0]), 'y': float(p[1]), 'vx': float(v[0]), 'vy': float(v[1])}
        for p, v in zip(state.positions, state.velocities)
    ]


def place(state: ParticleState, positions, velocities: Optional[np.ndarray] = None):
    state.positions = np.clip(np.asarray(positions, dtype=np.float64).reshape(-1, 2), -ARENA, ARENA)
    if velocities is None:
        state.velocities = np.zeros_like(state.positions)
    else:
        state.velocities = np.asarray(velocities, dtype=np.float64).reshape(-1, 2)
