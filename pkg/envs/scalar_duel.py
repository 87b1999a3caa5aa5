"""One-shot bilinear duel: the ego earns x*y, the opponent -x*y."""

from typing import List, Tuple

import numpy as np

from game_core import Env, GameSpec


def scalar_duel_step(x: float, y: float) -> Tuple[Tuple[float, float], bool]:
    """Rewards for one play of the duel; actions outside [-1, 1] are clamped."""
    x = float(np.clip(x, -1.0, 1.0))
    y = float(np.clip(y, -1.0, 1.0))
    payoff = x * y
    return (payoff, -payoff), True


class ScalarDuel(Env):
    """Stateless zero-sum game with horizon 1.

    Both agents observe a constant feature, so a policy is just a
    distribution over [-1, 1].
    """

    name = 'scalar-duel'

    def __init__(self):
        super().__init__(GameSpec(
            num_agents=2, obs_dims=(1, 1), act_dims=(1, 1), horizon=1,
            discount=1.0, zero_sum=True, reward_bounds=(-1.0, 1.0),
        ))

    def _reset_state(self, rng: np.random.Generator):
        pass

    def _advance(self, actions: List[np.ndarray]):
        rewards, terminated = scalar_duel_step(actions[0][0], actions[1][0])
        return np.array(rewards), terminated

    def _observe(self) -> List[np.ndarray]:
        return [np.ones(1, dtype=np.float32), np.ones(1, dtype=np.float32)]
