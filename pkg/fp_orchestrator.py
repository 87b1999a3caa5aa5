"""Fictitious play over best-response checkpoints.

Each side's average strategy is a uniform mixture over its historical best
responses. The random initial policies only ever act as first opponents.
"""

import copy
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple


from config import GRID_EPISODES, METRICS_COLUMNS, SIDE_NAMES, STREAM_INIT
from config.experiment import BrConfig
from br_learner import train_best_response
from envs.grid_oracle import oracle_best_response_grid
from errors import ConfigurationError, NumericError
from exploitability import ExploitabilityReport
from game_core import ConstantPolicy, Env, derive_seed, seed_stream
from policy_pool import (MixturePolicy, PolicyCheckpoint, actor_obs_dim, initial_checkpoint, mixture_update)

logger = logging.getLogger(__name__)

EVAL_KEY = 1_000_003


@dataclass
class BrStep:
    checkpoint: PolicyCheckpoint
    mean_return: float = float('nan')
    actor_loss: float = float('nan')
    critic_loss: float = float('nan')


# (env, learner side, frozen opponent, fp iteration, seed) -> BrStep
BrOperator = Callable[[Env, int, MixturePolicy, int, int], BrStep]
Evaluator = Callable[[int, Tuple[MixturePolicy, MixturePolicy]], ExploitabilityReport]


def rl_operator(configs: Sequence[BrConfig], metadata: Optional[Dict[str, str]] = None) -> BrOperator:
    """Best responses trained by the RL learner; `configs` holds one BrConfig per side.

    With `warm_start` a side resumes from its previous actor and critics.
    """
    previous: Dict[int, PolicyCheckpoint] = {}

    def operator(env: Env, side: int, opponent: MixturePolicy, iteration: int, seed: int) -> BrStep:
        config = configs[side]
        last = previous.get(side) if config.warm_start else None
        result = train_best_response(env, side, opponent, config, seed,
                                     init_params=None if last is None else last.params,
                                     fp_iteration=iteration, metadata=metadata,
                                     init_critic=None if last is None else last.critic)
        previous[side] = result.checkpoint
        return BrStep(result.checkpoint, result.mean_return, result.actor_loss, result.critic_loss)

    return operator


def grid_operator(grid_n: int, episodes_per_point: int = GRID_EPISODES,
                  metadata: Optional[Dict[str, str]] = None) -> BrOperator:
    """Exact best responses by brute force over an action grid."""

    def operator(env: Env, side: int, opponent: MixturePolicy, iteration: int, seed: int) -> BrStep:
        action, value = oracle_best_response_grid(env, opponent, grid_n, episodes_per_point, seed, side)
        spec = env.spec
        policy = ConstantPolicy([action], actor_obs_dim(spec, side))
        checkpoint = PolicyCheckpoint.from_actor(policy, iteration, side, spec.team_size(side), metadata)
        return BrStep(checkpoint, mean_return=value)

    return operator


@dataclass
class FpHistory:
    checkpoints: Tuple[List[PolicyCheckpoint], List[PolicyCheckpoint]] = field(default_factory=lambda: ([], []))
    br_rows: List[Dict[str, object]] = field(default_factory=list)
    reports: List[ExploitabilityReport] = field(default_factory=list)
    mixtures: Optional[Tuple[MixturePolicy, MixturePolicy]] = None
    eval_seconds: Dict[int, float] = field(default_factory=dict)
    shared_pool: bool = False

    @property
    def iterations(self) -> int:
        return len(self.checkpoints[0])

    def exploitability_trace(self) -> List[float]:
        return [r.total for r in self.reports]

    def pool_hashes(self) -> List[List[str]]:
        return [[c.digest() for c in side] for side in self.checkpoints]

    def metrics_rows(self) -> List[Dict[str, object]]:
        """One row per (iteration, side) best response, plus one eval row per evaluated iteration."""
        rows = []
        reports = {r.iteration: r for r in self.reports}
        blank = {c: '' for c in METRICS_COLUMNS}
        for k in range(self.iterations):
            rows.extend(dict(blank, **r) for r in self.br_rows if r['iteration'] == k)
            report = reports.get(k)
            if report is not None:
                rows.append(dict(blank, iteration=k, agent='eval', eps_ego=report.epsilon[0],
                                 eps_opp=report.epsilon[1], eps_total=report.total,
                                 wall_seconds=self.eval_seconds.get(k, '')))
        return rows


def _with_context(error: Exception, iteration: int, side: int) -> Exception:
    return type(error)(f"fp iteration {iteration}, {SIDE_NAMES[side]}: {error}")


def run_fictitious_play(env: Env, iterations: int, br_operator: BrOperator, seed: int,
                        simultaneous: bool = False, shared_pool: bool = False,
                        initial: Optional[Sequence[PolicyCheckpoint]] = None,
                        evaluate: Optional[Evaluator] = None, initial_kind: str = 'diffusion',
                        on_checkpoint: Optional[Callable[[PolicyCheckpoint], None]] = None,
                        on_iteration: Optional[Callable[[int, FpHistory], None]] = None) -> FpHistory:
    """Alternate best responses against the current average strategies.

    Within an iteration the ego side responds first and the opponent side
    then responds to the updated ego mixture, unless `simultaneous` is set.
    With `shared_pool` (symmetric games only) both seats draw from and add to
    one pool.
    """
    if iterations < 1:
        raise ConfigurationError(f"fictitious play needs at least one iteration, got {iterations}")
    spec = env.spec
    if shared_pool and not spec.symmetric:
        raise ConfigurationError(f"{env.name}: a shared pool needs a symmetric game")
    if initial is None:
        initial = [initial_checkpoint(spec, side, initial_kind, seed_stream(derive_seed(seed, side), STREAM_INIT))
                   for side in (0, 1)]
    starts = [MixturePolicy([initial[0]]), MixturePolicy([initial[1]])]
    mixtures: List[MixturePolicy] = [MixturePolicy(), MixturePolicy()]
    history = FpHistory(shared_pool=shared_pool)
    eval_seed = derive_seed(seed, EVAL_KEY)

    def average(side: int, frozen: List[MixturePolicy]) -> MixturePolicy:
        source = 0 if shared_pool else side
        if not len(frozen[source]):
            return starts[side]
        # seats keep separate active draws from a shared pool
        return copy.copy(frozen[source]) if shared_pool and side == 1 else frozen[source]

    for k in range(iterations):
        frozen = list(mixtures)
        for side in (0, 1):
            view = frozen if simultaneous else mixtures
            opponent = average(1 - side, view)
            started = time.perf_counter()
            try:
                step = br_operator(env, side, opponent, k, derive_seed(seed, k, side))
            except (ConfigurationError, NumericError) as e:
                raise _with_context(e, k, side) from e
            elapsed = time.perf_counter() - started
            target = 0 if shared_pool else side
            mixtures[target] = mixture_update(mixtures[target], step.checkpoint)
            history.checkpoints[side].append(step.checkpoint)
            history.br_rows.append({
                'iteration': k, 'agent': SIDE_NAMES[side], 'mean_return': step.mean_return,
                'actor_loss': step.actor_loss, 'critic_loss': step.critic_loss, 'wall_seconds': round(elapsed, 3),
            })
            if on_checkpoint is not None:
                on_checkpoint(step.checkpoint)
            logger.info("iteration %d %s: pool %d, return %.4f", k, SIDE_NAMES[side],
                        len(mixtures[target]), step.mean_return)

        profile = (average(0, mixtures), average(1, mixtures))
        history.mixtures = profile
        if evaluate is not None:
            started = time.perf_counter()
            report = evaluate(eval_seed, profile)
            report.iteration = k
            history.reports.append(report)
            history.eval_seconds[k] = round(time.perf_counter() - started, 3)
            logger.info("iteration %d: exploitability %.4f (ego %.4f, opp %.4f)", k, report.total,
                        report.epsilon[0], report.epsilon[1])
        if on_iteration is not None:
            on_iteration(k, history)
    return history
