"""Best-response checkpoints and the uniform mixtures fictitious play builds from them."""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from config import HIDDEN_SIZES
from ddpm_policy import DiffusionActor, NoiseSchedule
from errors import ConfigurationError
from game_core import ConstantPolicy, GameSpec, SidePolicy, TeamActor, augment_obs
from gaussian_policy import GaussianActor

logger = logging.getLogger(__name__)

LEARNER_KINDS = ('diffusion', 'gaussian', 'constant')
INITIAL_ITERATION = -1
INITIAL_SCALE = 0.1


@dataclass(frozen=True)
class PolicyCheckpoint:
    """Immutable snapshot of one side's actor after a best-response computation.

    `critic` optionally carries the flat parameters of the four critic
    networks that trained the actor, for warm starts. The digest leaves the
    critic parameters out.
    """
    learner_kind: str
    fp_iteration: int
    side: int
    architecture: Dict[str, object]
    params: np.ndarray
    metadata: Dict[str, str] = field(default_factory=dict)
    critic: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learner_kind not in LEARNER_KINDS:
            raise ConfigurationError(f"unknown learner kind '{self.learner_kind}'")
        params = np.array(self.params, dtype=np.float32).ravel()
        params.setflags(write=False)
        object.__setattr__(self, 'params', params)
        object.__setattr__(self, 'architecture', dict(self.architecture))
        object.__setattr__(self, 'metadata', {k: str(v) for k, v in self.metadata.items()})
        critic = {}
        for name, values in self.critic.items():
            values = np.array(values, dtype=np.float32).ravel()
            values.setflags(write=False)
            critic[name] = values
        object.__setattr__(self, 'critic', critic)
        object.__setattr__(self, '_digest', self._hash())

    @property
    def team_size(self) -> int:
        return int(self.architecture.get('team_size', 1))

    @property
    def name(self) -> str:
        return f"iter{self.fp_iteration}"

    def digest(self) -> str:
        return self._digest

    def _hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.learner_kind}|{self.fp_iteration}|{self.side}|".encode())
        h.update(json.dumps(self.architecture, sort_keys=True).encode())
        h.update(self.params.astype('<f4').tobytes())
        return h.hexdigest()

    @classmethod
    def from_actor(cls, actor, fp_iteration: int, side: int, team_size: int = 1,
                   metadata: Optional[Dict[str, str]] = None, critic=None) -> 'PolicyCheckpoint':
        if isinstance(actor, ConstantPolicy):
            kind, arch, params = 'constant', {'obs_dim': actor.obs_dim, 'act_dim': actor.act_dim}, actor.action
        else:
            kind, arch, params = actor.kind, actor.architecture(), actor.flatten()
        arch['team_size'] = team_size
        critic_state = {}
        if critic is not None:
            arch['critic'] = critic.architecture()
            critic_state = critic.state()
        return cls(kind, fp_iteration, side, arch, params, metadata or {}, critic_state)


def build_actor(kind: str, obs_dim: int, act_dim: int, low: float, high: float,
                schedule: Optional[NoiseSchedule] = None, hidden: Sequence[int] = HIDDEN_SIZES,
                rng: Optional[np.random.Generator] = None, final_scale: float = 1.0):
    if kind == 'diffusion':
        return DiffusionActor(obs_dim, act_dim, schedule, low, high, hidden, rng=rng, final_scale=final_scale)
    if kind == 'gaussian':
        return GaussianActor(obs_dim, act_dim, low, high, hidden, rng=rng, final_scale=final_scale)
    raise ConfigurationError(f"learner kind must be 'diffusion' or 'gaussian', got '{kind}'")


def actor_from_checkpoint(checkpoint: PolicyCheckpoint):
    arch = checkpoint.architecture
    if checkpoint.learner_kind == 'diffusion':
        return DiffusionActor.from_architecture(arch, checkpoint.params)
    if checkpoint.learner_kind == 'gaussian':
        return GaussianActor.from_architecture(arch, checkpoint.params)
    return ConstantPolicy(checkpoint.params, arch['obs_dim'])


def policy_from_checkpoint(checkpoint: PolicyCheckpoint) -> TeamActor:
    return TeamActor(actor_from_checkpoint(checkpoint), checkpoint.team_size)


def actor_obs_dim(spec: GameSpec, side: int) -> int:
    """Actor input width for a side, including the member one-hot for teams."""
    blank = np.zeros(spec.side_obs_dim(side), dtype=np.float32)
    return augment_obs(blank, 0, spec.team_size(side)).shape[0]


def initial_checkpoint(spec: GameSpec, side: int, kind: str, rng: np.random.Generator,
                       schedule: Optional[NoiseSchedule] = None,
                       hidden: Sequence[int] = HIDDEN_SIZES) -> PolicyCheckpoint:
    """Random small-weight actor used as the very first opponent; it never enters a mixture."""
    actor = build_actor(kind, actor_obs_dim(spec, side), spec.side_act_dim(side), spec.action_low,
                        spec.action_high, schedule, hidden, rng, final_scale=INITIAL_SCALE)
    return PolicyCheckpoint.from_actor(actor, INITIAL_ITERATION, side, spec.team_size(side))


class MixturePolicy(SidePolicy):
    """Average strategy: one pure checkpoint is drawn per episode and played throughout."""

    def __init__(self, pool: Sequence[PolicyCheckpoint] = (), weights: Optional[Sequence[float]] = None,
                 obs_dim: Optional[int] = None, act_dim: Optional[int] = None, team_size: Optional[int] = None):
        self.pool: List[PolicyCheckpoint] = list(pool)
        n = len(self.pool)
        if weights is None:
            weights = np.full(n, 1.0 / n) if n else np.zeros(0)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (n,) or np.any(self.weights < 0):
            raise ConfigurationError("mixture needs one non-negative weight per checkpoint")
        if n and abs(self.weights.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"mixture weights sum to {self.weights.sum()}, not 1")
        if n:
            first = self.pool[0]
            obs_dim = first.architecture['obs_dim'] - (first.team_size if first.team_size > 1 else 0)
            act_dim = first.architecture['act_dim']
            team_size = first.team_size
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.team_size = team_size if team_size is not None else 1
        self.active: Optional[int] = None
        # pools only grow by appending, so an index names one checkpoint for good
        self._policies: Dict[int, TeamActor] = {}

    def __len__(self) -> int:
        return len(self.pool)

    def policy_at(self, index: int) -> TeamActor:
        if index not in self._policies:
            self._policies[index] = policy_from_checkpoint(self.pool[index])
        return self._policies[index]

    def reset(self, rng: np.random.Generator):
        mixture_sample_policy(self, rng)

    def act_member(self, member: int, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.active is None:
            raise ConfigurationError("mixture has no active policy; reset it at the episode start")
        return self.policy_at(self.active).act_member(member, obs, rng)

    def digests(self) -> List[str]:
        return [c.digest() for c in self.pool]


def mixture_update(mixture: MixturePolicy, new_br: PolicyCheckpoint) -> MixturePolicy:
    """pi_{k+1} = k/(k+1) pi_k + 1/(k+1) BR_k, kept in closed form as uniform weights."""
    grown = MixturePolicy(mixture.pool + [new_br])
    grown._policies = dict(mixture._policies)
    logger.debug("mixture grew to %d checkpoints", len(grown))
    return grown


def mixture_sample_policy(mixture: MixturePolicy, rng: np.random.Generator) -> TeamActor:
    """Draw the pure policy for the coming episode and make it active."""
    if not mixture.pool:
        raise ConfigurationError("cannot sample from an empty policy pool")
    index = 0 if len(mixture.pool) == 1 else int(rng.choice(len(mixture.pool), p=mixture.weights))
    mixture.active = index
    return mixture.policy_at(index)
