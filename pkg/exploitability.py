"""Exploitability of a two-sided profile and head-to-head cross-play tables."""

import copy
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import EVAL_EPISODES, GRID_N, SIDE_NAMES
from config.experiment import BrConfig
from br_learner import train_best_response
from envs.grid_oracle import constant_side, oracle_best_response_grid, profile_for
from errors import ConfigurationError
from game_core import Env, Outcome, SidePolicy, derive_seed, estimate_payoff, joint_policies
from policy_pool import policy_from_checkpoint

logger = logging.getLogger(__name__)

Z_95 = 1.96
RL_ORACLE_KEY = 7919


def grid_supported(env: Env) -> bool:
    spec = env.spec
    return spec.horizon == 1 and all(spec.side_act_dim(s) == 1 for s in (0, 1))


def resolve_oracle(env: Env, oracle: str) -> str:
    if oracle == 'auto':
        return 'grid' if grid_supported(env) else 'rl'
    if oracle == 'grid' and not grid_supported(env):
        raise ConfigurationError(f"{env.name}: grid oracle needs 1-D actions and horizon 1; use the rl oracle")
    if oracle not in ('grid', 'rl'):
        raise ConfigurationError(f"unknown oracle '{oracle}'")
    return oracle


@dataclass
class ExploitabilityReport:
    """Per-side exploitability; epsilon[i] = br_payoffs[i] - profile_payoffs[i]."""
    epsilon: List[float]
    total: float
    br_payoffs: List[float]
    profile_payoffs: List[float]
    half_widths: List[float]
    episodes: int
    oracle: str
    br_actions: List[Optional[float]] = field(default_factory=lambda: [None, None])
    warnings: List[str] = field(default_factory=list)
    iteration: Optional[int] = None

    @classmethod
    def build(cls, br_payoffs: Sequence[float], profile_payoffs: Sequence[float], half_widths: Sequence[float],
              episodes: int, oracle: str, **kwargs) -> 'ExploitabilityReport':
        epsilon = [float(b) - float(p) for b, p in zip(br_payoffs, profile_payoffs)]
        return cls(epsilon, float(sum(epsilon)), [float(b) for b in br_payoffs],
                   [float(p) for p in profile_payoffs], [float(h) for h in half_widths], episodes, oracle, **kwargs)

    @property
    def is_lower_bound(self) -> bool:
        """RL best responses only bound the true exploitability from below."""
        return self.oracle == 'rl'

    def consistent(self) -> bool:
        recomputed = [b - p for b, p in zip(self.br_payoffs, self.profile_payoffs)]
        return recomputed == self.epsilon and sum(recomputed) == self.total

    def to_dict(self) -> Dict[str, object]:
        data = dataclasses.asdict(self)
        for side, name in enumerate(SIDE_NAMES):
            data[f"eps_{name}"] = self.epsilon[side]
        data['lower_bound'] = self.is_lower_bound
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> 'ExploitabilityReport':
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def _grid_best_response(env: Env, side: int, opponent: SidePolicy, grid_n: int, episodes: int, seed: int,
                        discounted: bool):
    action, _ = oracle_best_response_grid(env, opponent, grid_n, episodes, seed, learner_side=side)
    best = constant_side(env, side, [action])
    estimate = estimate_payoff(env, joint_policies(env.spec, profile_for(side, best, opponent)), episodes, seed,
                               discounted)
    return estimate.side_mean(side), estimate.side_stderr(side), action


def _rl_best_response(env: Env, side: int, opponent: SidePolicy, br_config: BrConfig, budget: int,
                      episodes: int, seed: int, discounted: bool, warnings: List[str]):
    config = dataclasses.replace(br_config, env_steps=budget, warmup_steps=min(br_config.warmup_steps, budget))
    if budget <= br_config.warmup_steps:
        message = (f"rl oracle budget {budget} does not exceed warmup {br_config.warmup_steps}; "
                   f"the {SIDE_NAMES[side]} best response is untrained")
        logger.warning(message)
        warnings.append(message)
    result = train_best_response(env, side, opponent, config, derive_seed(seed, RL_ORACLE_KEY, side))
    best = policy_from_checkpoint(result.checkpoint)
    estimate = estimate_payoff(env, joint_policies(env.spec, profile_for(side, best, opponent)), episodes, seed,
                               discounted)
    return estimate.side_mean(side), estimate.side_stderr(side), None


def measure_exploitability(env: Env, profile: Tuple[SidePolicy, SidePolicy], oracle: str = 'auto',
                           episodes: int = EVAL_EPISODES, seed: int = 0, grid_n: int = GRID_N,
                           br_configs: Optional[Sequence[BrConfig]] = None, budget: Optional[int] = None,
                           discounted: bool = False) -> ExploitabilityReport:
    """Best-response payoff minus profile payoff for each side, with the other side frozen.

    Every payoff estimate uses the same episode count and seeds. With the rl
    oracle `budget` is the env-step budget of each best response and
    `br_configs` holds the learner settings per side.
    """
    oracle = resolve_oracle(env, oracle)
    if episodes < 1:
        raise ConfigurationError("exploitability needs at least one episode per estimate")
    if profile[0] is profile[1]:
        profile = (profile[0], copy.copy(profile[1]))
    spec = env.spec
    current = estimate_payoff(env, joint_policies(spec, profile), episodes, seed, discounted)
    warnings: List[str] = []
    br_payoffs, profile_payoffs, half_widths, br_actions = [], [], [], []
    for side in (0, 1):
        opponent = profile[1 - side]
        if oracle == 'grid':
            value, stderr, action = _grid_best_response(env, side, opponent, grid_n, episodes, seed, discounted)
        else:
            br_config = br_configs[side] if br_configs else BrConfig()
            value, stderr, action = _rl_best_response(env, side, opponent, br_config, budget or br_config.env_steps,
                                                      episodes, seed, discounted, warnings)
        br_payoffs.append(value)
        profile_payoffs.append(current.side_mean(side))
        half_widths.append(Z_95 * float(np.hypot(stderr, current.side_stderr(side))))
        br_actions.append(action)
    report = ExploitabilityReport.build(br_payoffs, profile_payoffs, half_widths, episodes, oracle,
                                        br_actions=br_actions, warnings=warnings)
    for side in (0, 1):
        if oracle == 'grid' and report.epsilon[side] < -2 * report.half_widths[side]:
            logger.warning("%s exploitability %.4f is below the noise floor; the oracle looks broken",
                           SIDE_NAMES[side], report.epsilon[side])
    return report


@dataclass
class CrossPlayTable:
    """Ordered-pair tallies; rows play the ego side, columns the opponent side."""
    row_names: List[str]
    col_names: List[str]
    episodes: int
    wins: np.ndarray
    draws: np.ndarray
    losses: np.ndarray
    mean_payoff: np.ndarray
    played: np.ndarray
    info: Dict[Tuple[str, str], Dict[str, float]] = field(default_factory=dict)

    def cells(self):
        for i, row in enumerate(self.row_names):
            for j, col in enumerate(self.col_names):
                if self.played[i, j]:
                    yield i, j, row, col

    def summary(self) -> Dict[str, Dict[str, int]]:
        """Aggregate W/D/L per policy across every pair it took part in, from its own point of view."""
        totals: Dict[str, Dict[str, int]] = {}
        for i, j, row, col in self.cells():
            for name, w, l in ((row, self.wins[i, j], self.losses[i, j]), (col, self.losses[i, j], self.wins[i, j])):
                entry = totals.setdefault(name, {'wins': 0, 'draws': 0, 'losses': 0, 'pairs': 0})
                entry['wins'] += int(w)
                entry['draws'] += int(self.draws[i, j])
                entry['losses'] += int(l)
                entry['pairs'] += 1
        return totals


def _classify(outcome: Outcome, ego_return: float) -> str:
    """Win/draw/loss from the ego side; games without a winner fall back to the sign of the return."""
    if outcome is Outcome.EGO_WIN:
        return 'win'
    if outcome is Outcome.OPP_WIN:
        return 'loss'
    if outcome is Outcome.DRAW:
        return 'draw'
    if ego_return > 0:
        return 'win'
    return 'loss' if ego_return < 0 else 'draw'


def _compatible(env: Env, side: int, policy: SidePolicy) -> bool:
    spec = env.spec
    return (policy.team_size == spec.team_size(side) and policy.obs_dim == spec.side_obs_dim(side)
            and policy.act_dim == spec.side_act_dim(side))


def cross_play(env: Env, entries: Sequence[Tuple[str, SidePolicy]], episodes: int, seed: int,
               opponents: Optional[Sequence[Tuple[str, SidePolicy]]] = None,
               include_self: bool = False) -> CrossPlayTable:
    """Round-robin over ordered (ego, opponent) pairs, N seeded episodes per pair.

    Without `opponents` the same entries fill both seats, which suits
    symmetric games; identical names only meet when `include_self` is set.
    """
    if episodes < 1:
        raise ConfigurationError("cross-play needs at least one episode per pair; the table would be empty")
    rows = list(entries)
    cols = list(opponents) if opponents is not None else rows
    if not rows or not cols:
        raise ConfigurationError("cross-play needs at least one policy per side")
    shape = (len(rows), len(cols))
    table = CrossPlayTable([n for n, _ in rows], [n for n, _ in cols], episodes,
                           np.zeros(shape, dtype=int), np.zeros(shape, dtype=int), np.zeros(shape, dtype=int),
                           np.full(shape, np.nan), np.zeros(shape, dtype=bool))
    spec = env.spec
    for i, (row_name, row_policy) in enumerate(rows):
        for j, (col_name, col_policy) in enumerate(cols):
            if row_name == col_name and not include_self:
                continue
            if not _compatible(env, 0, row_policy) or not _compatible(env, 1, col_policy):
                raise ConfigurationError(f"{row_name} vs {col_name}: policies do not fit the seats of {env.name}")
            if col_policy is row_policy:
                col_policy = copy.copy(col_policy)
            estimate = estimate_payoff(env, joint_policies(spec, (row_policy, col_policy)), episodes, seed)
            ego = estimate.side_returns(0)
            tally = {'win': 0, 'draw': 0, 'loss': 0}
            for outcome, value in zip(estimate.episode_outcomes, ego):
                tally[_classify(outcome, value)] += 1
            table.wins[i, j] = tally['win']
            table.draws[i, j] = tally['draw']
            table.losses[i, j] = tally['loss']
            table.mean_payoff[i, j] = float(ego.mean())
            table.played[i, j] = True
            table.info[(row_name, col_name)] = dict(estimate.info)
            logger.debug("%s vs %s: %s", row_name, col_name, tally)
    return table


def checkpoint_entries(checkpoints) -> List[Tuple[str, SidePolicy]]:
    return [(name, policy_from_checkpoint(c)) for name, c in checkpoints]
