"""Typed experiment configuration read from flat `section.key=value` files."""

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from config.config import (ACTOR_LR, BATCH_SIZE, BETA_MAX, BETA_MIN, BUFFER_CAPACITY, CRITIC_LR,
                           DEFAULT_OUT_DIR, DENOISE_WEIGHT, DIFFUSION_STEPS, ENTROPY_WEIGHT, ENV_STEPS, ETA,
                           EVAL_EPISODES, GRID_EPISODES, GRID_N, GUIDANCE_STEPS, HIDDEN_SIZES, LAMBDA,
                           LOG_INTERVAL, SCHEDULE, SIDE_NAMES, TAU, TEMPERATURE, WARMUP_STEPS, WEIGHT_BASELINE,
                           WEIGHT_CLIP)
from errors import ConfigurationError

ORACLES = ('auto', 'grid', 'rl')


@dataclass
class EnvConfig:
    name: str = ''
    overrides: Dict[str, object] = field(default_factory=dict)


@dataclass
class FpConfig:
    iterations: int = 10
    simultaneous: bool = False
    shared_pool: bool = False
    # Substitute grid-oracle best responses for RL training (1-D one-step games)
    oracle: bool = False
    grid_n: int = GRID_N
    grid_episodes: int = GRID_EPISODES


@dataclass
class DiffusionConfig:
    steps: int = DIFFUSION_STEPS
    schedule: str = SCHEDULE
    beta_min: float = BETA_MIN
    beta_max: float = BETA_MAX
    eta: float = ETA
    guidance_steps: int = GUIDANCE_STEPS
    lam: float = LAMBDA
    denoise_weight: float = DENOISE_WEIGHT
    temperature: float = TEMPERATURE
    clip: float = WEIGHT_CLIP
    # 'min' or 'mean' of the batch returns
    weight_baseline: str = WEIGHT_BASELINE


@dataclass
class CriticConfig:
    # None means the game's own discount
    gamma: Optional[float] = None
    tau: float = TAU
    target_samples: int = 1


@dataclass
class BrConfig:
    learner_kind: str = 'diffusion'
    env_steps: int = ENV_STEPS
    warmup_steps: int = WARMUP_STEPS
    batch_size: int = BATCH_SIZE
    updates_per_step: int = 1
    buffer_capacity: int = BUFFER_CAPACITY
    actor_lr: float = ACTOR_LR
    critic_lr: float = CRITIC_LR
    entropy_weight: float = ENTROPY_WEIGHT
    hidden: Tuple[int, ...] = HIDDEN_SIZES
    warm_start: bool = False
    reward_weighting: bool = True
    weight_target: str = 'denoising'
    # Actions refined by Q-guidance: 'fresh' samples of the current actor or replayed 'buffer' actions
    guidance_source: str = 'fresh'
    log_interval: int = LOG_INTERVAL
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)

    def validate(self, path: str = 'br'):
        if self.learner_kind not in ('diffusion', 'gaussian'):
            raise ConfigurationError(f"{path}.learner_kind: expected diffusion or gaussian, got '{self.learner_kind}'")
        if self.weight_target not in ('denoising', 'distillation'):
            raise ConfigurationError(f"{path}.weight_target: expected denoising or distillation")
        if self.guidance_source not in ('buffer', 'fresh'):
            raise ConfigurationError(f"{path}.guidance_source: expected buffer or fresh")
        for name in ('env_steps', 'batch_size', 'updates_per_step', 'buffer_capacity', 'log_interval'):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{path}.{name}: must be at least 1")
        if not 0 <= self.warmup_steps <= self.env_steps:
            raise ConfigurationError(f"{path}.warmup_steps: must lie in [0, env_steps]")
        for name in ('actor_lr', 'critic_lr'):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{path}.{name}: must be positive")
        if self.entropy_weight < 0:
            raise ConfigurationError(f"{path}.entropy_weight: must be non-negative")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigurationError(f"{path}.hidden: needs at least one positive width")
        d = self.diffusion
        if d.steps < 1 or d.guidance_steps < 0:
            raise ConfigurationError("diffusion.steps must be at least 1 and guidance_steps non-negative")
        if d.eta <= 0 or d.temperature <= 0 or d.clip <= 0 or d.lam < 0 or d.denoise_weight < 0:
            raise ConfigurationError("diffusion.eta, temperature and clip must be positive, lam and denoise_weight "
                                     "non-negative")
        if d.weight_baseline not in ('min', 'mean'):
            raise ConfigurationError(f"diffusion.weight_baseline: expected min or mean, got '{d.weight_baseline}'")
        if d.schedule not in ('linear', 'vp'):
            raise ConfigurationError(f"diffusion.schedule: expected linear or vp, got '{d.schedule}'")
        if self.reward_weighting and self.weight_target == 'distillation' and self.guidance_source == 'fresh':
            raise ConfigurationError(f"{path}.weight_target: return weights only fit replayed actions; "
                                     "distillation weighting needs guidance_source = buffer")
        c = self.critic
        if c.gamma is not None and not 0 <= c.gamma <= 1:
            raise ConfigurationError("critic.gamma: must lie in [0, 1]")
        if not 0 <= c.tau <= 1 or c.target_samples < 1:
            raise ConfigurationError("critic.tau must lie in [0, 1] and target_samples be at least 1")


@dataclass
class EvalConfig:
    episodes: int = EVAL_EPISODES
    oracle: str = 'auto'
    # None means the training budget
    br_steps: Optional[int] = None
    grid_n: int = GRID_N
    discounted: bool = False


@dataclass
class RunConfig:
    name: str = 'difffp'
    out_dir: str = DEFAULT_OUT_DIR


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    fp: FpConfig = field(default_factory=FpConfig)
    br: BrConfig = field(default_factory=BrConfig)
    br_overrides: Dict[str, Dict[str, object]] = field(default_factory=lambda: {s: {} for s in SIDE_NAMES})
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunConfig = field(default_factory=RunConfig)
    seed: int = 0

    def br_for(self, side: int) -> BrConfig:
        """Learner settings for one side: br.* with br.ego.* / br.opp.* applied on top."""
        overrides = self.br_overrides.get(SIDE_NAMES[side], {})
        return dataclasses.replace(self.br, diffusion=self.diffusion, critic=self.critic, **overrides)

    def validate(self) -> 'ExperimentConfig':
        if not self.env.name:
            raise ConfigurationError("env.name: missing")
        if self.fp.iterations < 1:
            raise ConfigurationError("fp.iterations: must be at least 1")
        if self.fp.grid_n < 2 or self.eval.grid_n < 2:
            raise ConfigurationError("grid_n: must be at least 2")
        if self.eval.episodes < 1:
            raise ConfigurationError("eval.episodes: must be at least 1")
        if self.eval.oracle not in ORACLES:
            raise ConfigurationError(f"eval.oracle: expected one of {ORACLES}, got '{self.eval.oracle}'")
        if self.eval.br_steps is not None and self.eval.br_steps < 1:
            raise ConfigurationError("eval.br_steps: must be at least 1")
        if self.seed < 0:
            raise ConfigurationError("seed: must be non-negative")
        for side, name in enumerate(SIDE_NAMES):
            self.br_for(side).validate(f"br.{name}")
        return self


SECTIONS = {'fp': FpConfig, 'br': BrConfig, 'diffusion': DiffusionConfig,
            'critic': CriticConfig, 'eval': EvalConfig, 'run': RunConfig}
NESTED = ('diffusion', 'critic')


def _field_types(cls) -> Dict[str, object]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls) if f.name not in NESTED}


def _coerce(path: str, text: str, kind):
    """Convert a raw value to a dataclass field type."""
    origin = typing.get_origin(kind)
    args = typing.get_args(kind)
    try:
        if origin is typing.Union and type(None) in args:
            if text.lower() == 'none':
                return None
            return _coerce(path, text, next(a for a in args if a is not type(None)))
        if origin in (tuple, Tuple):
            return tuple(int(part) for part in text.split(',') if part.strip())
        if kind is bool:
            lowered = text.lower()
            if lowered in ('true', 'yes', '1'):
                return True
            if lowered in ('false', 'no', '0'):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigurationError(f"{path}: cannot read '{text}' as {getattr(kind, '__name__', kind)}") from None


def _literal(text: str):
    """Best-effort typing for env knobs, which the game constructor validates."""
    for convert in (int, float):
        try:
            return convert(text)
        except ValueError:
            pass
    lowered = text.lower()
    if lowered in ('true', 'false'):
        return lowered == 'true'
    return text


def _assign(config: ExperimentConfig, path: str, value: str):
    if path == 'seed':
        config.seed = _coerce(path, value, int)
        return
    section, _, key = path.partition('.')
    if not key:
        raise ConfigurationError(f"{path}: unknown key")
    if section == 'env':
        if key == 'name':
            config.env.name = value
        else:
            config.env.overrides[key] = _literal(value)
        return
    if section == 'br' and key.split('.')[0] in SIDE_NAMES:
        side, _, key = key.partition('.')
        types = _field_types(BrConfig)
        if key not in types:
            raise ConfigurationError(f"{path}: unknown key")
        config.br_overrides[side][key] = _coerce(path, value, types[key])
        return
    if section not in SECTIONS:
        raise ConfigurationError(f"{path}: unknown section '{section}'")
    types = _field_types(SECTIONS[section])
    if key not in types:
        raise ConfigurationError(f"{path}: unknown key")
    setattr(getattr(config, section), key, _coerce(path, value, types[key]))


def parse_config(text: str) -> ExperimentConfig:
    """Build an ExperimentConfig from key=value lines; `#` starts a comment."""
    config = ExperimentConfig()
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep or not key.strip():
            raise ConfigurationError(f"line {number}: expected key=value, got '{raw.strip()}'")
        _assign(config, key.strip(), value.strip())
    return config


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return parse_config(f.read())
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e


def _format(value) -> str:
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, tuple):
        return ','.join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical form: every key, sorted, one `key=value` per line."""
    lines = [f"seed={config.seed}", f"env.name={config.env.name}"]
    lines += [f"env.{k}={_format(v)}" for k, v in config.env.overrides.items()]
    for section in SECTIONS:
        values = getattr(config, section)
        lines += [f"{section}.{k}={_format(getattr(values, k))}" for k in _field_types(SECTIONS[section])]
    for side in SIDE_NAMES:
        lines += [f"br.{side}.{k}={_format(v)}" for k, v in config.br_overrides.get(side, {}).items()]
    return '\n'.join(sorted(lines)) + '\n'


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(config).encode('utf-8')).hexdigest()
