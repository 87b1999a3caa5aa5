"""Twin Q-networks with Polyak target copies and the clipped double-Q TD update."""

import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from config import CRITIC_ACTIVATION, CRITIC_LR, HIDDEN_SIZES, TAU
from errors import ConfigurationError, NumericError
from tensor_nn import Adam, Mlp, polyak_update

logger = logging.getLogger(__name__)

CRITIC_NETS = ('q1', 'q2', 'q1_target', 'q2_target')


class TwinCritic:
    """Q1, Q2 over (state, action) plus their target copies.

    For team learners the state is the concatenation of the members'
    observations and the action is the joint team action.
    """

    def __init__(self, state_dim: int, action_dim: int, gamma: float, tau: float = TAU, lr: float = CRITIC_LR,
                 hidden: Sequence[int] = HIDDEN_SIZES, activation: str = CRITIC_ACTIVATION,
                 rng: Optional[np.random.Generator] = None):
        if not 0.0 <= gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {gamma}")
        if not 0.0 <= tau <= 1.0:
            raise ConfigurationError(f"tau must lie in [0, 1], got {tau}")
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = [state_dim + action_dim, *hidden, 1]
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.gamma = gamma
        self.tau = tau
        self.q1 = Mlp(sizes, activation, rng)
        self.q2 = Mlp(sizes, activation, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.opt1 = Adam(self.q1, lr)
        self.opt2 = Adam(self.q2, lr)

    def _input(self, states, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float32))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float32))
        if states.shape[1] != self.state_dim or actions.shape[1] != self.action_dim:
            raise ConfigurationError(
                f"critic expects state {self.state_dim} + action {self.action_dim}, "
                f"got {states.shape[1]} + {actions.shape[1]}")
        return np.concatenate([states, actions], axis=1)

    def q_values(self, states, actions) -> Tuple[np.ndarray, np.ndarray]:
        x = self._input(states, actions)
        return self.q1.forward(x)[:, 0], self.q2.forward(x)[:, 0]

    def target_min(self, states, actions) -> np.ndarray:
        x = self._input(states, actions)
        return np.minimum(self.q1_target.forward(x)[:, 0], self.q2_target.forward(x)[:, 0])

    def td_target(self, rewards, next_states, next_actions, terminated) -> np.ndarray:
        """y = r + gamma * min(Q1', Q2')(s', a') unless terminated.

        `next_actions` may carry a leading sample axis (K, B, A); the
        clipped target is then averaged over the K samples. `next_actions`
        may be None when every transition is terminal.
        """
        rewards = np.atleast_1d(np.asarray(rewards, dtype=np.float64))
        terminated = np.atleast_1d(np.asarray(terminated, dtype=bool))
        if next_actions is None:
            if not np.all(terminated):
                raise ConfigurationError("next actions are required for non-terminal transitions")
            return rewards.copy()
        next_actions = np.asarray(next_actions, dtype=np.float32)
        if next_actions.ndim == 3:
            bootstrap = np.mean([self.target_min(next_states, a) for a in next_actions], axis=0)
        else:
            bootstrap = self.target_min(next_states, next_actions)
        return rewards + self.gamma * np.where(terminated, 0.0, bootstrap.astype(np.float64))

    def critic_update(self, batch: Dict[str, np.ndarray], next_actions) -> Tuple[float, float]:
        """Regress both critics to the shared TD target, one Adam step each, then soft-update targets."""
        states = batch['states']
        if len(states) == 0:
            raise ConfigurationError("critic update needs a non-empty batch")
        y = self.td_target(batch['rewards'], batch['next_states'], next_actions, batch['terminated'])
        x = self._input(states, batch['actions'])
        size = x.shape[0]
        losses = []
        for net, opt in ((self.q1, self.opt1), (self.q2, self.opt2)):
            pred, cache = net.forward_cached(x)
            diff = pred[:, 0].astype(np.float64) - y
            bad = np.flatnonzero(~np.isfinite(diff))
            if bad.size:
                raise NumericError(f"critic loss is not finite at batch index {int(bad[0])}")
            losses.append(float(np.mean(diff ** 2)))
            grads, _ = net.backward(cache, (2.0 / size) * diff[:, None])
            opt.step(grads)
        self.soft_update()
        return losses[0], losses[1]

    def soft_update(self):
        polyak_update(self.q1_target.parameters(), self.q1.parameters(), self.tau)
        polyak_update(self.q2_target.parameters(), self.q2.parameters(), self.tau)

    def sync_targets(self):
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()

    def q_min_and_action_grad(self, states, actions) -> Tuple[np.ndarray, np.ndarray]:
        """min(Q1, Q2) and its gradient with respect to the action coordinates.

        The gradient is the one of whichever critic attains the minimum;
        ties go to Q1.
        """
        x = self._input(states, actions)
        p1, c1 = self.q1.forward_cached(x)
        p2, c2 = self.q2.forward_cached(x)
        use_q1 = p1[:, 0] <= p2[:, 0]
        up1 = use_q1[:, None].astype(np.float32)
        _, g1 = self.q1.backward(c1, up1)
        _, g2 = self.q2.backward(c2, 1.0 - up1)
        q = np.where(use_q1, p1[:, 0], p2[:, 0])
        return q, (g1 + g2)[:, self.state_dim:]

    def networks(self) -> Dict[str, Mlp]:
        return {name: getattr(self, name) for name in CRITIC_NETS}

    def state(self) -> Dict[str, np.ndarray]:
        """Flat parameters of all four networks, keyed by network name."""
        return {name: net.flatten() for name, net in self.networks().items()}

    def load_state(self, state: Dict[str, np.ndarray]):
        missing = [name for name in CRITIC_NETS if name not in state]
        if missing:
            raise ConfigurationError(f"critic state lacks {', '.join(missing)}")
        for name, net in self.networks().items():
            net.load_flat(state[name])

    def architecture(self) -> dict:
        return {'state_dim': self.state_dim, 'action_dim': self.action_dim, 'sizes': list(self.q1.sizes),
                'activation': self.q1.activation, 'gamma': self.gamma, 'tau': self.tau}


def critic_layer_shapes(arch: dict):
    """(rows, cols) of every weight and (cols,) of every bias, in parameter order."""
    sizes = arch['sizes']
    shapes = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes.extend([(fan_in, fan_out), (fan_out,)])
    return shapes
