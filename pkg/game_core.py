"""Partially observable Markov games: specs, policies, rollouts and payoff estimates."""

import copy
import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import STREAM_ACTOR, STREAM_DERIVE, STREAM_ENV, STREAM_SEAT_BASE, max_workers
from errors import ConfigurationError, NumericError, TraceError

logger = logging.getLogger(__name__)

ZERO_SUM_TOL = 1e-9
MAX_AGENTS = 4


def seed_stream(root_seed: int, stream_id: int) -> np.random.Generator:
    """Reproducible generator for the (root_seed, stream_id) pair."""
    seq = np.random.SeedSequence([int(root_seed) % 2**63, int(stream_id) % 2**63])
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(root_seed: int, *keys: int) -> int:
    """Child seed for a (root_seed, keys...) path, e.g. (seed, iteration, side)."""
    entropy = [int(root_seed) % 2**63, STREAM_DERIVE] + [int(k) % 2**63 for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


class Outcome(str, Enum):
    EGO_WIN = 'ego_win'
    OPP_WIN = 'opp_win'
    DRAW = 'draw'
    NONE = 'none'


@dataclass(frozen=True)
class GameSpec:
    """Static description of a two-sided game.

    `sides` partitions the agents into the ego side (index 0) and the
    opponent side (index 1). Members of one side share observation and
    action dimensions so a team can share one actor.
    """
    num_agents: int
    obs_dims: Tuple[int, ...]
    act_dims: Tuple[int, ...]
    horizon: int
    discount: float = 1.0
    zero_sum: bool = True
    reward_bounds: Tuple[float, float] = (-1.0, 1.0)
    action_low: float = -1.0
    action_high: float = 1.0
    sides: Tuple[Tuple[int, ...], ...] = ((0,), (1,))
    normalization: float = 1.0
    symmetric: bool = False

    def __post_init__(self):
        n = self.num_agents
        if not 1 <= n <= MAX_AGENTS:
            raise ConfigurationError(f"num_agents must be in [1, {MAX_AGENTS}], got {n}")
        if len(self.obs_dims) != n or len(self.act_dims) != n:
            raise ConfigurationError("obs_dims and act_dims need one entry per agent")
        if min(self.obs_dims) <= 0 or min(self.act_dims) <= 0:
            raise ConfigurationError("observation and action dimensions must be positive")
        if not self.action_low < self.action_high:
            raise ConfigurationError("action_low must be below action_high")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigurationError(f"discount must lie in (0, 1], got {self.discount}")
        if self.reward_bounds[0] > self.reward_bounds[1]:
            raise ConfigurationError("reward_bounds must be ordered (r_min, r_max)")
        if self.normalization <= 0:
            raise ConfigurationError("normalization must be positive")
        members = sorted(i for side in self.sides for i in side)
        if len(self.sides) != 2 or members != list(range(n)):
            raise ConfigurationError("sides must split the agents into exactly two groups")
        for side in self.sides:
            if len({self.obs_dims[i] for i in side}) != 1 or len({self.act_dims[i] for i in side}) != 1:
                raise ConfigurationError("members of one side must share observation/action dims")

    def low(self, agent: int) -> np.ndarray:
        return np.full(self.act_dims[agent], self.action_low, dtype=np.float32)

    def high(self, agent: int) -> np.ndarray:
        return np.full(self.act_dims[agent], self.action_high, dtype=np.float32)

    def side_of(self, agent: int) -> int:
        return 0 if agent in self.sides[0] else 1

    def member_index(self, agent: int) -> int:
        return self.sides[self.side_of(agent)].index(agent)

    def side_obs_dim(self, side: int) -> int:
        return self.obs_dims[self.sides[side][0]]

    def side_act_dim(self, side: int) -> int:
        return self.act_dims[self.sides[side][0]]

    def team_size(self, side: int) -> int:
        return len(self.sides[side])


@dataclass
class Transition:
    obs: List[np.ndarray]
    joint_action: List[np.ndarray]
    rewards: np.ndarray
    next_obs: List[np.ndarray]
    terminated: bool
    truncated: bool


@dataclass
class StepResult:
    obs: List[np.ndarray]
    rewards: np.ndarray
    terminated: bool
    truncated: bool


@dataclass
class EpisodeResult:
    returns: np.ndarray
    raw_returns: np.ndarray
    length: int
    outcome: Outcome
    info: Dict[str, float] = field(default_factory=dict)
    transitions: List[Transition] = field(default_factory=list)

    def side_return(self, spec: GameSpec, side: int, raw: bool = True) -> float:
        values = self.raw_returns if raw else self.returns
        return float(sum(values[i] for i in spec.sides[side]))


class Env(ABC):
    """Base class for games. Subclasses implement the four hooks below.

    Dynamics are deterministic given the actions; randomness only enters
    through the initial state drawn in `_reset_state`.
    """

    name = ''
    traceable = False

    def __init__(self, spec: GameSpec):
        self.spec = spec
        self.t = 0

    def reset(self, rng: np.random.Generator) -> List[np.ndarray]:
        self.t = 0
        self._reset_state(rng)
        return self._observe()

    def step(self, actions: Sequence[np.ndarray]) -> StepResult:
        if len(actions) != self.spec.num_agents:
            raise ConfigurationError(
                f"{self.name}: expected {self.spec.num_agents} actions, got {len(actions)}")
        clipped = [np.clip(np.asarray(a, dtype=np.float64), self.spec.action_low, self.spec.action_high)
                   for a in actions]
        rewards, terminated = self._advance(clipped)
        self.t += 1
        truncated = (not terminated) and self.t >= self.spec.horizon
        return StepResult(self._observe(), np.asarray(rewards, dtype=np.float64), terminated, truncated)

    @abstractmethod
    def _reset_state(self, rng: np.random.Generator):
        """Sample the initial state b0."""

    @abstractmethod
    def _advance(self, actions: List[np.ndarray]) -> Tuple[np.ndarray, bool]:
        """Apply clipped actions; return (rewards, terminated)."""

    @abstractmethod
    def _observe(self) -> List[np.ndarray]:
        """Per-agent observations of the current state."""

    def outcome(self) -> Outcome:
        return Outcome.NONE

    def episode_info(self) -> Dict[str, float]:
        return {}

    def trace_state(self) -> List[Dict[str, float]]:
        raise TraceError(f"{self.name} exposes no positional state")


class Policy(ABC):
    """Maps one agent's own observation to an action."""

    obs_dim: int
    act_dim: int

    def reset(self, rng: np.random.Generator):
        """Called once at the start of every episode."""

    @abstractmethod
    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        ...


class ConstantPolicy(Policy):
    """Emits a fixed action regardless of the observation."""

    def __init__(self, action, obs_dim: int):
        self.action = np.atleast_1d(np.asarray(action, dtype=np.float32)).copy()
        self.act_dim = self.action.shape[0]
        self.obs_dim = obs_dim

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.action.copy()

    def sample(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.tile(self.action, (np.atleast_2d(obs).shape[0], 1))


class SidePolicy(ABC):
    """Policy for every member of one side; members act on their own observation."""

    obs_dim: int
    act_dim: int
    team_size: int

    def reset(self, rng: np.random.Generator):
        """Called once per episode, before any member acts."""

    @abstractmethod
    def act_member(self, member: int, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        ...

    def members(self) -> List['MemberPolicy']:
        return [MemberPolicy(self, m) for m in range(self.team_size)]


class MemberPolicy(Policy):
    """One seat's view of a SidePolicy. Member 0 owns the per-episode reset."""

    def __init__(self, side_policy: SidePolicy, member: int):
        self.side_policy = side_policy
        self.member = member
        self.obs_dim = side_policy.obs_dim
        self.act_dim = side_policy.act_dim

    def reset(self, rng: np.random.Generator):
        if self.member == 0:
            self.side_policy.reset(rng)

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.side_policy.act_member(self.member, obs, rng)


def augment_obs(obs: np.ndarray, member: int, team_size: int) -> np.ndarray:
    """Append a member one-hot for teams larger than one."""
    obs = np.asarray(obs, dtype=np.float32)
    if team_size <= 1:
        return obs
    onehot = np.zeros(obs.shape[:-1] + (team_size,), dtype=np.float32)
    onehot[..., member] = 1.0
    return np.concatenate([obs, onehot], axis=-1)


class TeamActor(SidePolicy):
    """Shares one actor across the members of a side."""

    def __init__(self, actor, team_size: int = 1):
        self.actor = actor
        self.team_size = team_size
        extra = team_size if team_size > 1 else 0
        self.obs_dim = actor.obs_dim - extra
        self.act_dim = actor.act_dim

    def act_member(self, member: int, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.actor.act(augment_obs(obs, member, self.team_size), rng)


def joint_policies(spec: GameSpec, side_policies: Sequence[SidePolicy]) -> List[Policy]:
    """Seat-ordered member policies for a pair of side policies."""
    if len(side_policies) != 2:
        raise ConfigurationError("a profile needs exactly one policy per side")
    views = []
    for side, policy in enumerate(side_policies):
        if policy.team_size != spec.team_size(side):
            raise ConfigurationError(
                f"side {side} policy has team size {policy.team_size}, game needs {spec.team_size(side)}")
        views.append(policy.members())
    return [views[spec.side_of(i)][spec.member_index(i)] for i in range(spec.num_agents)]


def _check_policies(spec: GameSpec, policies: Sequence[Policy]):
    if len(policies) != spec.num_agents:
        raise ConfigurationError(f"expected {spec.num_agents} policies, got {len(policies)}")
    for i, policy in enumerate(policies):
        if policy.obs_dim != spec.obs_dims[i] or policy.act_dim != spec.act_dims[i]:
            raise ConfigurationError(
                f"agent {i}: policy maps {policy.obs_dim}->{policy.act_dim}, "
                f"game needs {spec.obs_dims[i]}->{spec.act_dims[i]}")


StepObserver = Callable[[int, Env, List[np.ndarray], np.ndarray], None]


@dataclass
class EpisodeStreams:
    env: np.random.Generator
    actor: np.random.Generator
    seats: List[np.random.Generator]


class StreamSource:
    """Per-episode generators for one root seed.

    Every stream is seeded once per source. Episode e takes the (e+1)-th
    jump of each, so any subset of episodes replays on its own.
    """

    def __init__(self, seed: int, num_agents: int):
        ids = [STREAM_ENV, STREAM_ACTOR] + [STREAM_SEAT_BASE + i for i in range(num_agents)]
        self._bases = [np.random.PCG64(np.random.SeedSequence([int(seed) % 2**63, sid])) for sid in ids]

    def episode(self, index: int) -> EpisodeStreams:
        gens = [np.random.Generator(base.jumped(index + 1)) for base in self._bases]
        return EpisodeStreams(gens[0], gens[1], gens[2:])


def start_episode(env: Env, policies: Sequence[Policy], streams: EpisodeStreams) -> List[np.ndarray]:
    for policy, rng in zip(policies, streams.seats):
        policy.reset(rng)
    return env.reset(streams.env)


def joint_actions(spec: GameSpec, policies: Sequence[Policy], obs: Sequence[np.ndarray],
                  rng: np.random.Generator) -> List[np.ndarray]:
    """One clipped action per agent, each from the agent's own observation."""
    actions = []
    for i, policy in enumerate(policies):
        action = np.asarray(policy.act(obs[i], rng), dtype=np.float32).reshape(-1)
        if action.shape[0] != spec.act_dims[i]:
            raise ConfigurationError(f"agent {i}: action has {action.shape[0]} dims, expected {spec.act_dims[i]}")
        if not np.all(np.isfinite(action)):
            raise NumericError(f"agent {i} produced a non-finite action {action}")
        actions.append(np.clip(action, spec.action_low, spec.action_high))
    return actions


def rollout(env: Env, policies: Sequence[Policy], seed: int, record: bool = False,
            observer: Optional[StepObserver] = None,
            streams: Optional[EpisodeStreams] = None) -> EpisodeResult:
    """Play one episode from a freshly reset env.

    Without `streams` the episode is episode 0 of `seed`.
    """
    spec = env.spec
    _check_policies(spec, policies)
    if streams is None:
        streams = StreamSource(seed, spec.num_agents).episode(0)
    obs = start_episode(env, policies, streams)
    returns = np.zeros(spec.num_agents)
    raw_returns = np.zeros(spec.num_agents)
    discount = 1.0
    transitions = []
    length = 0
    for h in range(spec.horizon):
        actions = joint_actions(spec, policies, obs, streams.actor)
        result = env.step(actions)
        raw_returns += result.rewards
        returns += discount * result.rewards
        discount *= spec.discount
        length = h + 1
        if record:
            transitions.append(Transition(obs, actions, result.rewards, result.obs,
                                          result.terminated, result.truncated))
        if observer is not None:
            observer(h, env, actions, result.rewards)
        obs = result.obs
        if result.terminated or result.truncated:
            break

    return EpisodeResult(returns, raw_returns, length, env.outcome(), env.episode_info(), transitions)


@dataclass
class PayoffEstimate:
    """Monte-Carlo payoff estimate; rows of `episode_returns` are ordered by episode."""
    mean: np.ndarray
    stderr: np.ndarray
    episode_returns: np.ndarray
    sides: Tuple[Tuple[int, ...], ...]
    outcomes: Dict[str, int] = field(default_factory=dict)
    info: Dict[str, float] = field(default_factory=dict)
    episode_outcomes: List[Outcome] = field(default_factory=list)

    @property
    def episodes(self) -> int:
        return self.episode_returns.shape[0]

    def side_returns(self, side: int) -> np.ndarray:
        return self.episode_returns[:, list(self.sides[side])].sum(axis=1)

    def side_mean(self, side: int) -> float:
        return float(self.side_returns(side).mean())

    def side_stderr(self, side: int) -> float:
        return _stderr(self.side_returns(side))


def _stderr(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def _play_chunk(env: Env, policies: Sequence[Policy], seed: int, source: StreamSource,
                episodes: Sequence[int]) -> List[EpisodeResult]:
    env = copy.deepcopy(env)
    policies = copy.deepcopy(list(policies))
    return [rollout(env, policies, seed, streams=source.episode(e)) for e in episodes]


def estimate_payoff(env: Env, policies: Sequence[Policy], num_episodes: int, seed: int,
                    discounted: bool = False, workers: Optional[int] = None) -> PayoffEstimate:
    """Mean normalized return per agent over episodes 0..num_episodes-1 of `seed`.

    Undiscounted episodic returns are used unless `discounted` is set.
    """
    if num_episodes < 1:
        raise ConfigurationError("num_episodes must be at least 1")
    spec = env.spec
    source = StreamSource(seed, spec.num_agents)
    episodes = range(num_episodes)
    workers = min(workers or max_workers(), num_episodes)
    if workers <= 1:
        results = [rollout(env, policies, seed, streams=source.episode(e)) for e in episodes]
    else:
        chunks = [episodes[w::workers] for w in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _play_chunk(env, policies, seed, source, c), chunks))
        by_episode = {}
        for chunk, part in zip(chunks, parts):
            by_episode.update(zip(chunk, part))
        results = [by_episode[e] for e in episodes]

    rows = np.array([r.returns if discounted else r.raw_returns for r in results], dtype=np.float64)
    rows = rows / spec.normalization
    stderr = np.zeros(spec.num_agents) if num_episodes < 2 else rows.std(axis=0, ddof=1) / np.sqrt(num_episodes)
    outcomes: Dict[str, int] = {}
    info: Dict[str, float] = {}
    for r in results:
        outcomes[r.outcome.value] = outcomes.get(r.outcome.value, 0) + 1
        for key, value in r.info.items():
            info[key] = info.get(key, 0.0) + value
    return PayoffEstimate(rows.mean(axis=0), stderr, rows, spec.sides, outcomes, info,
                          [r.outcome for r in results])


@dataclass
class ZeroSumAudit:
    steps: int
    max_abs_sum: float
    min_reward: float
    max_reward: float

    def passed(self, spec: GameSpec) -> bool:
        r_min, r_max = spec.reward_bounds
        in_bounds = self.min_reward >= r_min - 1e-12 and self.max_reward <= r_max + 1e-12
        return in_bounds and (not spec.zero_sum or self.max_abs_sum <= ZERO_SUM_TOL)


def audit_zero_sum(env: Env, num_steps: int = 1000, seed: int = 0) -> ZeroSumAudit:
    """Step the env with uniform random actions and track per-step reward sums."""
    spec = env.spec
    rng = seed_stream(seed, STREAM_ACTOR)
    env.reset(seed_stream(seed, STREAM_ENV))
    max_abs, lo, hi = 0.0, np.inf, -np.inf
    episode = 0
    for _ in range(num_steps):
        actions = [rng.uniform(spec.action_low, spec.action_high, size=spec.act_dims[i])
                   for i in range(spec.num_agents)]
        result = env.step(actions)
        max_abs = max(max_abs, abs(float(result.rewards.sum())))
        lo = min(lo, float(result.rewards.min()))
        hi = max(hi, float(result.rewards.max()))
        if result.terminated or result.truncated:
            episode += 1
            env.reset(seed_stream(seed + episode, STREAM_ENV))
    return ZeroSumAudit(num_steps, max_abs, lo, hi)
