"""Approximate best responses: play against a frozen opponent, fill a replay buffer, train actor and critics."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from config import (STREAM_ACTOR, STREAM_BUFFER, STREAM_ENV, STREAM_INIT, STREAM_LOSS, STREAM_OPPONENT)
from config.experiment import BrConfig
from critic import TwinCritic
from ddpm_policy import NoiseSchedule, q_guided_improvement, weight_by_return
from errors import ConfigurationError, NumericError
from game_core import Env, SidePolicy, augment_obs, seed_stream
from gaussian_policy import gaussian_actor_update
from policy_pool import PolicyCheckpoint, actor_obs_dim, build_actor
from tensor_nn import Adam

logger = logging.getLogger(__name__)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transition records (one dict of arrays per push)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError(f"buffer capacity must be at least 1, got {capacity}")
        self.capacity = capacity
        self.cursor = 0
        self.size = 0
        self._storage: Dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return self.size

    def push(self, item: Dict[str, object]):
        if not self._storage:
            for key, value in item.items():
                value = np.asarray(value)
                dtype = np.bool_ if value.dtype == np.bool_ else np.float32
                self._storage[key] = np.zeros((self.capacity,) + value.shape, dtype=dtype)
        elif set(item) != set(self._storage):
            raise ConfigurationError(f"transition keys {sorted(item)} differ from {sorted(self._storage)}")
        for key, value in item.items():
            self._storage[key][self.cursor] = value
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ready(self, batch_size: int) -> bool:
        return self.size >= batch_size

    def sample(self, batch_size: int, rng: np.random.Generator) -> Optional[Dict[str, np.ndarray]]:
        """Uniform draw with replacement from the live region; None until `batch_size` items are stored."""
        if not self.ready(batch_size):
            return None
        idx = rng.integers(0, self.size, size=batch_size)
        return {key: values[idx] for key, values in self._storage.items()}

    def ordered(self, key: str) -> np.ndarray:
        """Stored values of `key`, oldest first."""
        values = self._storage[key][:self.size]
        if self.size < self.capacity:
            return values.copy()
        return np.roll(values, -self.cursor, axis=0)


@dataclass
class BrEpochMetrics:
    env_steps: int
    episodes: int
    mean_return: float
    actor_loss: float
    critic_loss: float


@dataclass
class BrResult:
    checkpoint: PolicyCheckpoint
    metrics: List[BrEpochMetrics] = field(default_factory=list)

    @property
    def mean_return(self) -> float:
        finite = [m.mean_return for m in self.metrics if np.isfinite(m.mean_return)]
        return finite[-1] if finite else float('nan')

    @property
    def actor_loss(self) -> float:
        return self.metrics[-1].actor_loss if self.metrics else float('nan')

    @property
    def critic_loss(self) -> float:
        return self.metrics[-1].critic_loss if self.metrics else float('nan')


def _check_opponent(env: Env, learner_side: int, opponent: SidePolicy):
    spec = env.spec
    if learner_side not in (0, 1):
        raise ConfigurationError(f"learner side must be 0 or 1, got {learner_side}")
    other = 1 - learner_side
    if (opponent.team_size != spec.team_size(other) or opponent.obs_dim != spec.side_obs_dim(other)
            or opponent.act_dim != spec.side_act_dim(other)):
        raise ConfigurationError(
            f"{env.name}: opponent plays {opponent.team_size} x ({opponent.obs_dim}->{opponent.act_dim}), "
            f"side {other} needs {spec.team_size(other)} x ({spec.side_obs_dim(other)}->{spec.side_act_dim(other)})")


class _Learner:
    """Actor, twin critic and optimizer for one side, plus the side's view of the game."""

    def __init__(self, env: Env, side: int, config: BrConfig, seed: int, init_params: Optional[np.ndarray],
                 init_critic: Optional[Dict[str, np.ndarray]] = None):
        spec = env.spec
        self.spec = spec
        self.side = side
        self.config = config
        self.members = spec.sides[side]
        self.team = len(self.members)
        self.act_dim = spec.side_act_dim(side)
        init_rng = seed_stream(seed, STREAM_INIT)
        d = config.diffusion
        schedule = NoiseSchedule.build(d.schedule, d.steps, d.beta_min, d.beta_max)
        self.actor = build_actor(config.learner_kind, actor_obs_dim(spec, side), self.act_dim,
                                 spec.action_low, spec.action_high, schedule, config.hidden, init_rng)
        if init_params is not None:
            self.actor.load_flat(init_params)
        gamma = spec.discount if config.critic.gamma is None else config.critic.gamma
        self.critic = TwinCritic(self.team * spec.side_obs_dim(side), self.team * self.act_dim, gamma,
                                 config.critic.tau, config.critic_lr, config.hidden, rng=init_rng)
        if init_critic:
            self.critic.load_state(init_critic)
        self.optimizer = Adam(self.actor.network, config.actor_lr)

    def actor_obs(self, obs) -> np.ndarray:
        return np.stack([augment_obs(obs[agent], m, self.team) for m, agent in enumerate(self.members)])

    def state(self, obs) -> np.ndarray:
        return np.concatenate([np.asarray(obs[agent], dtype=np.float32) for agent in self.members])

    def sample_joint(self, actor_obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """(B, M, O) member observations -> (B, M*A) joint actions."""
        batch = actor_obs.shape[0]
        rows = self.actor.sample(actor_obs.reshape(batch * self.team, -1), rng)
        return rows.reshape(batch, self.team * self.act_dim)

    def next_actions(self, batch: Dict[str, np.ndarray], rng: np.random.Generator) -> Optional[np.ndarray]:
        """(K, B, M*A) target-policy samples; None when every transition is terminal."""
        live = ~np.asarray(batch['terminated'], dtype=bool)
        if not live.any():
            return None
        joint = np.zeros((self.config.critic.target_samples, live.size, self.team * self.act_dim), np.float32)
        for k in range(joint.shape[0]):
            joint[k, live] = self.sample_joint(batch['next_actor_obs'][live], rng)
        return joint

    def update(self, batch: Dict[str, np.ndarray], rng: np.random.Generator):
        config = self.config
        d = config.diffusion
        loss1, loss2 = self.critic.critic_update(batch, self.next_actions(batch, rng))
        critic_loss = 0.5 * (loss1 + loss2)
        if config.learner_kind == 'gaussian':
            actor_loss = gaussian_actor_update(self.actor, self.optimizer, self.critic, batch['states'],
                                               batch['actor_obs'], config.entropy_weight, rng)
            return actor_loss, critic_loss
        weights = None
        if config.reward_weighting:
            weights = weight_by_return(batch['returns'], d.temperature, d.clip, d.weight_baseline)
        guided = None
        if config.guidance_source == 'fresh':
            guided = self.sample_joint(batch['actor_obs'], rng)
        result = q_guided_improvement(self.actor, self.critic, batch['states'], batch['actions'],
                                      batch['actor_obs'], d.eta, d.guidance_steps, rng, d.lam, weights,
                                      config.weight_target, guided_actions=guided,
                                      denoise_weight=d.denoise_weight)
        self.optimizer.step(result.grads)
        return result.loss, critic_loss


def train_best_response(env: Env, learner_side: int, opponent: SidePolicy, config: BrConfig, seed: int,
                        init_params: Optional[np.ndarray] = None, fp_iteration: int = 0,
                        metadata: Optional[Dict[str, str]] = None,
                        init_critic: Optional[Dict[str, np.ndarray]] = None) -> BrResult:
    """Train a fresh actor for `learner_side` against a frozen opponent.

    The opponent's pure policy is resampled at every episode start. The
    first `warmup_steps` actions are uniform over the action box; after
    warmup every env step runs `updates_per_step` critic and actor updates.
    `init_params` and `init_critic` warm-start the actor and the four critic
    networks.
    """
    config.validate()
    _check_opponent(env, learner_side, opponent)
    spec = env.spec
    learner = _Learner(env, learner_side, config, seed, init_params, init_critic)
    env_rng = seed_stream(seed, STREAM_ENV)
    act_rng = seed_stream(seed, STREAM_ACTOR)
    opp_rng = seed_stream(seed, STREAM_OPPONENT)
    buf_rng = seed_stream(seed, STREAM_BUFFER)
    loss_rng = seed_stream(seed, STREAM_LOSS)
    opp_members = spec.sides[1 - learner_side]
    gamma = learner.critic.gamma
    buffer = ReplayBuffer(config.buffer_capacity)

    metrics: List[BrEpochMetrics] = []
    epoch_returns: List[float] = []
    actor_losses: List[float] = []
    critic_losses: List[float] = []
    episode: List[dict] = []

    obs = env.reset(env_rng)
    opponent.reset(opp_rng)
    for step in range(config.env_steps):
        actor_obs = learner.actor_obs(obs)
        if step < config.warmup_steps:
            own = act_rng.uniform(spec.action_low, spec.action_high, size=(learner.team, learner.act_dim))
        else:
            own = learner.actor.sample(actor_obs, act_rng)
        own = np.asarray(own, dtype=np.float32)
        if not np.all(np.isfinite(own)):
            raise NumericError(f"side {learner_side} produced a non-finite action at env step {step}")
        actions: List[Optional[np.ndarray]] = [None] * spec.num_agents
        for m, agent in enumerate(learner.members):
            actions[agent] = own[m]
        for m, agent in enumerate(opp_members):
            actions[agent] = np.asarray(opponent.act_member(m, obs[agent], act_rng), dtype=np.float32)
        result = env.step(actions)
        episode.append({
            'states': learner.state(obs), 'actor_obs': actor_obs, 'actions': own.reshape(-1),
            'rewards': float(sum(result.rewards[a] for a in learner.members)),
            'next_states': learner.state(result.obs), 'next_actor_obs': learner.actor_obs(result.obs),
            'terminated': bool(result.terminated),
        })
        obs = result.obs

        if result.terminated or result.truncated:
            to_go = 0.0
            for record in reversed(episode):
                to_go = record['rewards'] + gamma * to_go
                record['returns'] = to_go
            for record in episode:
                buffer.push(record)
            epoch_returns.append(float(sum(r['rewards'] for r in episode)))
            episode = []
            obs = env.reset(env_rng)
            opponent.reset(opp_rng)

        if step >= config.warmup_steps:
            for _ in range(config.updates_per_step):
                batch = buffer.sample(config.batch_size, buf_rng)
                if batch is None:
                    break
                actor_loss, critic_loss = learner.update(batch, loss_rng)
                actor_losses.append(actor_loss)
                critic_losses.append(critic_loss)

        if (step + 1) % config.log_interval == 0 or step + 1 == config.env_steps:
            row = BrEpochMetrics(
                step + 1, len(epoch_returns),
                float(np.mean(epoch_returns)) if epoch_returns else float('nan'),
                float(np.mean(actor_losses)) if actor_losses else float('nan'),
                float(np.mean(critic_losses)) if critic_losses else float('nan'))
            metrics.append(row)
            logger.info("side %d step %d: return %.4f actor %.4f critic %.4f", learner_side, row.env_steps,
                        row.mean_return, row.actor_loss, row.critic_loss)
            epoch_returns, actor_losses, critic_losses = [], [], []

    checkpoint = PolicyCheckpoint.from_actor(learner.actor, fp_iteration, learner_side, learner.team,
                                             metadata or {}, critic=learner.critic)
    return BrResult(checkpoint, metrics)


__all__ = ['BrConfig', 'BrEpochMetrics', 'BrResult', 'ReplayBuffer', 'train_best_response']
