"""Squashed Gaussian actor: the maximum-entropy baseline learner."""

from typing import List, Optional, Sequence

import numpy as np

from config import HIDDEN_SIZES, LOG_STD_MAX, LOG_STD_MIN
from errors import NumericError
from game_core import Policy
from tensor_nn import Adam, Mlp

SQUASH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


class GaussianActor(Policy):
    """obs -> (mean, log-std) per action dim; samples are tanh-squashed into the bounds."""

    kind = 'gaussian'

    def __init__(self, obs_dim: int, act_dim: int, low: float = -1.0, high: float = 1.0,
                 hidden: Sequence[int] = HIDDEN_SIZES, activation: str = 'relu',
                 rng: Optional[np.random.Generator] = None, final_scale: float = 1.0,
                 log_std_min: float = LOG_STD_MIN, log_std_max: float = LOG_STD_MAX):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.low = float(low)
        self.high = float(high)
        self.center = 0.5 * (self.high + self.low)
        self.half_range = 0.5 * (self.high - self.low)
        self.hidden = tuple(hidden)
        self.log_std_min = log_std_min
        self.log_std_max = log_std_max
        self.net = Mlp([obs_dim, *self.hidden, 2 * act_dim], activation, rng, final_scale=final_scale)

    def heads(self, obs):
        out, cache = self.net.forward_cached(np.atleast_2d(np.asarray(obs, dtype=np.float32)))
        mean = out[:, :self.act_dim]
        raw = out[:, self.act_dim:]
        log_std = np.clip(raw, self.log_std_min, self.log_std_max)
        inside = ((raw >= self.log_std_min) & (raw <= self.log_std_max)).astype(np.float32)
        return mean, log_std, inside, cache

    def squash(self, u: np.ndarray) -> np.ndarray:
        return (self.center + self.half_range * np.tanh(u)).astype(np.float32)

    def sample(self, obs, rng: np.random.Generator) -> np.ndarray:
        mean, log_std, _, _ = self.heads(obs)
        return self.squash(mean + np.exp(log_std) * rng.standard_normal(mean.shape))

    def act(self, obs, rng: np.random.Generator) -> np.ndarray:
        return self.sample(np.asarray(obs)[None, :], rng)[0]

    def mean_action(self, obs) -> np.ndarray:
        return self.squash(self.heads(obs)[0])

    @property
    def network(self) -> Mlp:
        return self.net

    def parameters(self) -> List[np.ndarray]:
        return self.net.parameters()

    def flatten(self) -> np.ndarray:
        return self.net.flatten()

    def load_flat(self, vector: np.ndarray):
        self.net.load_flat(vector)

    def architecture(self) -> dict:
        return {
            'obs_dim': self.obs_dim, 'act_dim': self.act_dim, 'hidden': list(self.hidden),
            'activation': self.net.activation, 'low': self.low, 'high': self.high,
            'log_std_min': self.log_std_min, 'log_std_max': self.log_std_max,
        }

    @classmethod
    def from_architecture(cls, arch: dict, params: Optional[np.ndarray] = None) -> 'GaussianActor':
        actor = cls(arch['obs_dim'], arch['act_dim'], arch['low'], arch['high'], arch['hidden'],
                    arch['activation'], log_std_min=arch['log_std_min'], log_std_max=arch['log_std_max'])
        if params is not None:
            actor.load_flat(params)
        return actor


def gaussian_actor_update(actor: GaussianActor, optimizer: Adam, critic, states, actor_obs,
                          entropy_weight: float, rng: np.random.Generator) -> float:
    """One Adam step maximizing min-Q of reparameterized squashed samples plus entropy.

    `actor_obs` is (B, M, obs_dim) for a team of M members; the critic scores
    the joint action. Returns the loss -(Q - alpha * log pi) averaged over B.
    """
    actor_obs = np.asarray(actor_obs, dtype=np.float32)
    if actor_obs.ndim == 2:
        actor_obs = actor_obs[:, None, :]
    batch, members = actor_obs.shape[:2]
    rows = actor_obs.reshape(batch * members, -1)

    mean, log_std, inside, cache = actor.heads(rows)
    std = np.exp(log_std)
    xi = rng.standard_normal(mean.shape).astype(np.float32)
    u = mean + std * xi
    y = np.tanh(u)
    actions = (actor.center + actor.half_range * y).astype(np.float32)

    q, grad = critic.q_min_and_action_grad(states, actions.reshape(batch, members * actor.act_dim))
    grad = grad.reshape(batch * members, actor.act_dim)
    one_minus = 1.0 - y * y
    log_prob = np.sum(-0.5 * xi * xi - log_std - HALF_LOG_2PI - np.log(actor.half_range * one_minus + SQUASH_EPS),
                      axis=1)
    objective = q - entropy_weight * log_prob.reshape(batch, members).sum(axis=1)
    loss = -float(np.mean(objective))
    if not np.isfinite(loss):
        raise NumericError("gaussian actor loss is not finite")

    squash_term = 2.0 * y * one_minus * actor.half_range / (actor.half_range * one_minus + SQUASH_EPS)
    d_u = grad * actor.half_range * one_minus - entropy_weight * squash_term
    d_mean = d_u
    d_log_std = (d_u * std * xi + entropy_weight) * inside
    upstream = -np.concatenate([d_mean, d_log_std], axis=1) / batch
    grads, _ = actor.net.backward(cache, upstream)
    optimizer.step(grads)
    return loss


def gaussian_max_likelihood_step(actor: GaussianActor, optimizer: Adam, obs, actions) -> float:
    """One Adam step on the negative log-likelihood of observed actions (behavior cloning)."""
    mean, log_std, inside, cache = actor.heads(obs)
    y = np.clip((np.atleast_2d(actions) - actor.center) / actor.half_range, -1 + SQUASH_EPS, 1 - SQUASH_EPS)
    u = np.arctanh(y)
    std = np.exp(log_std)
    z = (u - mean) / std
    nll = float(np.mean(np.sum(0.5 * z * z + log_std + HALF_LOG_2PI, axis=1)))
    batch = mean.shape[0]
    d_mean = -z / std
    d_log_std = (1.0 - z * z) * inside
    grads, _ = actor.net.backward(cache, np.concatenate([d_mean, d_log_std], axis=1) / batch)
    optimizer.step(grads)
    return nll
