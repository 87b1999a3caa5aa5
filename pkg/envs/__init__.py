"""Game registry keyed by name."""

import inspect
from typing import Dict, Optional

from envs.grid_oracle import oracle_best_response_grid
from envs.particle_deception import ParticleDeception
from envs.particle_tag import ParticleTag
from envs.scalar_duel import ScalarDuel, scalar_duel_step
from envs.track_duel import TrackDuel
from errors import ConfigurationError

ENV_REGISTRY = {
    ScalarDuel.name: ScalarDuel,
    ParticleTag.name: ParticleTag,
    ParticleDeception.name: ParticleDeception,
    TrackDuel.name: TrackDuel,
}


def env_knobs(name: str) -> Dict[str, object]:
    """Constructor knobs and their defaults for a registered game."""
    if name not in ENV_REGISTRY:
        raise ConfigurationError(f"unknown env '{name}'; choose from {sorted(ENV_REGISTRY)}")
    params = inspect.signature(ENV_REGISTRY[name].__init__).parameters
    return {k: p.default for k, p in params.items() if k != 'self'}


def make_env(name: str, overrides: Optional[Dict[str, object]] = None):
    knobs = env_knobs(name)
    overrides = dict(overrides or {})
    unknown = sorted(set(overrides) - set(knobs))
    if unknown:
        raise ConfigurationError(f"env.{unknown[0]}: '{name}' has no such setting")
    for key, value in overrides.items():
        default = knobs[key]
        if isinstance(default, bool):
            continue
        if isinstance(default, int) and not isinstance(value, int):
            raise ConfigurationError(f"env.{key}: expected an integer, got {value!r}")
        if isinstance(default, float) and isinstance(value, int):
            overrides[key] = float(value)
    return ENV_REGISTRY[name](**overrides)


__all__ = [
    'ENV_REGISTRY', 'env_knobs', 'make_env', 'oracle_best_response_grid', 'scalar_duel_step',
    'ParticleDeception', 'ParticleTag', 'ScalarDuel', 'TrackDuel',
]
