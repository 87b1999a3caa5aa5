"""Exact best responses by brute force over an action grid (1-D, one-step games)."""

from typing import Tuple

import numpy as np

from errors import ConfigurationError
from game_core import (ConstantPolicy, Env, SidePolicy, StreamSource, TeamActor, augment_obs, joint_actions,
                       joint_policies, start_episode)


def constant_side(env: Env, side: int, action) -> TeamActor:
    """A side whose every member plays `action`."""
    spec = env.spec
    team = spec.team_size(side)
    obs_dim = augment_obs(np.zeros(spec.side_obs_dim(side)), 0, team).shape[0]
    return TeamActor(ConstantPolicy(action, obs_dim), team)


def profile_for(side: int, policy: SidePolicy, opponent: SidePolicy):
    return (policy, opponent) if side == 0 else (opponent, policy)


def grid_payoffs(env: Env, opponent: SidePolicy, grid_n: int, episodes_per_point: int,
                 seed: int = 0, learner_side: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Side payoff of every grid action against `opponent`.

    Values equal `estimate_payoff` for each constant grid action over the
    same episodes. The opponent is reset and acts once per episode and every
    grid action is scored against that draw.
    """
    spec = env.spec
    if grid_n < 2:
        raise ConfigurationError(f"grid_n must be at least 2, got {grid_n}")
    if spec.side_act_dim(learner_side) != 1 or spec.horizon != 1:
        raise ConfigurationError(f"{env.name}: grid oracle needs 1-D actions and horizon 1")
    if episodes_per_point < 1:
        raise ConfigurationError("episodes_per_point must be at least 1")
    actions = np.linspace(spec.action_low, spec.action_high, grid_n)
    seats = list(spec.sides[learner_side])
    placeholder = constant_side(env, learner_side, [actions[0]])
    policies = joint_policies(spec, profile_for(learner_side, placeholder, opponent))
    source = StreamSource(seed, spec.num_agents)
    totals = np.zeros(grid_n)
    for e in range(episodes_per_point):
        streams = source.episode(e)
        env_state = streams.env.bit_generator.state
        obs = start_episode(env, policies, streams)
        joint = joint_actions(spec, policies, obs, streams.actor)
        for k, action in enumerate(actions):
            if k:
                streams.env.bit_generator.state = env_state
                env.reset(streams.env)
            for i in seats:
                joint[i] = np.full(1, action, dtype=np.float32)
            totals[k] += env.step(joint).rewards[seats].sum()
    return actions, totals / (episodes_per_point * spec.normalization)


def oracle_best_response_grid(env: Env, opponent: SidePolicy, grid_n: int, episodes_per_point: int,
                              seed: int = 0, learner_side: int = 0) -> Tuple[float, float]:
    """(best_action, best_value); ties go to the lowest grid index."""
    actions, values = grid_payoffs(env, opponent, grid_n, episodes_per_point, seed, learner_side)
    best = 0
    for k in range(1, grid_n):
        if values[k] > values[best]:
            best = k
    return float(actions[best]), float(values[best])
