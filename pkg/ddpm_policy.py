"""Diffusion actor: noise schedule, forward corruption, denoising loss, reverse sampling
and critic-guided action refinement."""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from config import (ACTOR_ACTIVATION, BETA_MAX, BETA_MIN, DIFFUSION_STEPS, HIDDEN_SIZES, SCHEDULE,
                    TIME_EMBED_FREQUENCIES, VP_B_MAX, VP_B_MIN)
from errors import ConfigurationError, NumericError
from game_core import Policy
from tensor_nn import Mlp

logger = logging.getLogger(__name__)

SCHEDULES = ('linear', 'vp')
WEIGHT_TARGETS = ('denoising', 'distillation')
WEIGHT_BASELINES = ('min', 'mean')
GUIDANCE_SOURCES = ('fresh', 'buffer')


class NoiseSchedule:
    """beta_t, alpha_t, alpha_bar_t and sigma_t for t = 1..T (stored 0-based)."""

    def __init__(self, betas: Sequence[float]):
        betas = np.asarray(betas, dtype=np.float64).ravel()
        if betas.size == 0 or np.any(betas <= 0) or np.any(betas >= 1):
            raise ConfigurationError("every beta_t must lie strictly inside (0, 1)")
        self.betas = betas
        self.alphas = 1.0 - betas
        alpha_bars = np.empty_like(betas)
        running = 1.0
        for i, alpha in enumerate(self.alphas):
            running = running * alpha
            alpha_bars[i] = running
        self.alpha_bars = alpha_bars
        self.sigmas = np.sqrt(betas)

    @property
    def T(self) -> int:
        return self.betas.size

    @classmethod
    def linear(cls, T: int, beta_min: float = BETA_MIN, beta_max: float = BETA_MAX) -> 'NoiseSchedule':
        if T < 1:
            raise ConfigurationError("diffusion needs at least one step")
        return cls(np.linspace(beta_min, beta_max, T))

    @classmethod
    def vp(cls, T: int, b_min: float = VP_B_MIN, b_max: float = VP_B_MAX) -> 'NoiseSchedule':
        """Variance-preserving schedule for short chains; alpha_bar_T is close to 0."""
        if T < 1:
            raise ConfigurationError("diffusion needs at least one step")
        t = np.arange(1, T + 1)
        alphas = np.exp(-b_min / T - 0.5 * (b_max - b_min) * (2 * t - 1) / T ** 2)
        return cls(1.0 - alphas)

    @classmethod
    def build(cls, kind: str = SCHEDULE, T: int = DIFFUSION_STEPS, beta_min: float = BETA_MIN,
              beta_max: float = BETA_MAX) -> 'NoiseSchedule':
        if kind == 'linear':
            return cls.linear(T, beta_min, beta_max)
        if kind == 'vp':
            return cls.vp(T)
        raise ConfigurationError(f"unknown schedule '{kind}'; choose from {SCHEDULES}")

    def check_step(self, t):
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ConfigurationError(f"diffusion step must lie in [1, {self.T}]")


def _per_sample(values: np.ndarray, t) -> np.ndarray:
    picked = values[np.asarray(t) - 1]
    return picked[:, None] if np.ndim(picked) == 1 else picked


def forward_noise(schedule: NoiseSchedule, a0, t, noise) -> np.ndarray:
    """a_t = sqrt(alpha_bar_t) * a0 + sqrt(1 - alpha_bar_t) * noise; t may be per-sample."""
    schedule.check_step(t)
    a0 = np.asarray(a0)
    alpha_bar = _per_sample(schedule.alpha_bars, t)
    out = np.sqrt(alpha_bar) * a0 + np.sqrt(1.0 - alpha_bar) * np.asarray(noise)
    return out.astype(a0.dtype) if a0.dtype == np.float32 else out


def time_embedding(t, T: int, frequencies: int = TIME_EMBED_FREQUENCIES) -> np.ndarray:
    """(sin, cos) features of t/T at octave frequencies; one row per entry of t."""
    phase = np.atleast_1d(np.asarray(t, dtype=np.float64)) / T * np.pi
    scales = 2.0 ** np.arange(frequencies)
    angles = phase[:, None] * scales[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1).astype(np.float32)


class DiffusionActor(Policy):
    """Policy defined by reverse diffusion through a noise-prediction network eps(a_t, o, t)."""

    kind = 'diffusion'

    def __init__(self, obs_dim: int, act_dim: int, schedule: Optional[NoiseSchedule] = None,
                 low: float = -1.0, high: float = 1.0, hidden: Sequence[int] = HIDDEN_SIZES,
                 activation: str = ACTOR_ACTIVATION, rng: Optional[np.random.Generator] = None,
                 final_scale: float = 1.0, embed_frequencies: int = TIME_EMBED_FREQUENCIES):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.schedule = schedule or NoiseSchedule.build()
        self.low = np.full(act_dim, low, dtype=np.float32)
        self.high = np.full(act_dim, high, dtype=np.float32)
        self.hidden = tuple(hidden)
        self.embed_frequencies = embed_frequencies
        in_dim = act_dim + obs_dim + 2 * embed_frequencies
        self.eps_net = Mlp([in_dim, *self.hidden, act_dim], activation, rng, final_scale=final_scale)

    def _net_input(self, a_t, obs, t) -> np.ndarray:
        a_t = np.atleast_2d(np.asarray(a_t, dtype=np.float32))
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float32))
        t = np.broadcast_to(np.asarray(t), (a_t.shape[0],))
        if obs.shape[1] != self.obs_dim:
            raise ConfigurationError(f"observation width {obs.shape[1]} != actor obs_dim {self.obs_dim}")
        return np.concatenate([a_t, obs, time_embedding(t, self.schedule.T, self.embed_frequencies)], axis=1)

    def noise_forward(self, a_t, obs, t):
        return self.eps_net.forward_cached(self._net_input(a_t, obs, t))

    def noise_backward(self, cache, upstream) -> List[np.ndarray]:
        return self.eps_net.backward(cache, upstream)[0]

    def predict_noise(self, a_t, obs, t) -> np.ndarray:
        return self.eps_net.forward(self._net_input(a_t, obs, t))

    def sample(self, obs, rng: np.random.Generator) -> np.ndarray:
        """One action per observation row."""
        return reverse_sample(self, np.atleast_2d(obs), rng)

    def act(self, obs, rng: np.random.Generator) -> np.ndarray:
        return reverse_sample(self, np.asarray(obs, dtype=np.float32)[None, :], rng)[0]

    @property
    def network(self) -> Mlp:
        return self.eps_net

    def parameters(self) -> List[np.ndarray]:
        return self.eps_net.parameters()

    def flatten(self) -> np.ndarray:
        return self.eps_net.flatten()

    def load_flat(self, vector: np.ndarray):
        self.eps_net.load_flat(vector)

    def architecture(self) -> dict:
        return {
            'obs_dim': self.obs_dim, 'act_dim': self.act_dim, 'hidden': list(self.hidden),
            'activation': self.eps_net.activation, 'betas': self.schedule.betas.tolist(),
            'low': float(self.low[0]), 'high': float(self.high[0]),
            'embed_frequencies': self.embed_frequencies,
        }

    @classmethod
    def from_architecture(cls, arch: dict, params: Optional[np.ndarray] = None) -> 'DiffusionActor':
        actor = cls(arch['obs_dim'], arch['act_dim'], NoiseSchedule(arch['betas']), arch['low'], arch['high'],
                    arch['hidden'], arch['activation'], embed_frequencies=arch['embed_frequencies'])
        if params is not None:
            actor.load_flat(params)
        return actor


NoiseFn = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def reverse_sample(actor: DiffusionActor, obs, rng: np.random.Generator, a_T=None, stochastic: bool = True,
                   noise_fn: Optional[NoiseFn] = None, return_trajectory: bool = False):
    """Denoise from a_T ~ N(0, I) down to a_0, clamping every iterate to the action box.

    No noise is injected on the final step. `stochastic=False` drops the
    noise on every step; `noise_fn` replaces the network's prediction.
    """
    schedule = actor.schedule
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float32))
    batch = obs.shape[0]
    if a_T is None:
        a = rng.standard_normal((batch, actor.act_dim)).astype(np.float32)
    else:
        a = np.array(np.broadcast_to(np.asarray(a_T, dtype=np.float32), (batch, actor.act_dim)))
    predict = noise_fn or actor.predict_noise
    trajectory = [a.copy()]
    for t in range(schedule.T, 0, -1):
        eps = np.asarray(predict(a, obs, t))
        if not np.all(np.isfinite(eps)):
            raise NumericError(f"noise prediction is not finite at diffusion step {t}")
        alpha = schedule.alphas[t - 1]
        beta = schedule.betas[t - 1]
        alpha_bar = schedule.alpha_bars[t - 1]
        a = a / np.sqrt(alpha) - (beta / np.sqrt(alpha * (1.0 - alpha_bar))) * eps
        if t > 1 and stochastic:
            a = a + np.sqrt(beta) * rng.standard_normal(a.shape)
        a = np.clip(a, actor.low, actor.high).astype(np.float32)
        trajectory.append(a.copy())
    if return_trajectory:
        return a, trajectory
    return a


@dataclass
class DenoisingLoss:
    loss: float
    grads: List[np.ndarray]
    per_sample: np.ndarray


def denoising_loss(actor, obs, a0, rng: np.random.Generator, weights=None, t=None, noise=None) -> DenoisingLoss:
    """Mean (optionally weighted) squared error between drawn and predicted noise.

    `t` and `noise` default to t ~ U{1..T} and eps ~ N(0, I) per sample.
    """
    a0 = np.atleast_2d(np.asarray(a0, dtype=np.float32))
    batch = a0.shape[0]
    if batch == 0:
        raise ConfigurationError("denoising loss needs a non-empty batch")
    schedule = actor.schedule
    if t is None:
        t = rng.integers(1, schedule.T + 1, size=batch)
    if noise is None:
        noise = rng.standard_normal(a0.shape).astype(np.float32)
    a_t = forward_noise(schedule, a0, t, noise)
    pred, cache = actor.noise_forward(a_t, obs, t)
    diff = np.asarray(pred, dtype=np.float32) - noise
    per_sample = np.sum(diff * diff, axis=1)
    w = np.ones(batch, dtype=np.float32) if weights is None else np.asarray(weights, dtype=np.float32)
    loss = float(np.mean(w * per_sample))
    if not np.isfinite(loss):
        raise NumericError("denoising loss is not finite")
    upstream = (2.0 / batch) * w[:, None] * diff
    return DenoisingLoss(loss, actor.noise_backward(cache, upstream), per_sample)


def refine_actions(critic, states, actions, eta: float, steps: int, low, high) -> np.ndarray:
    """Gradient ascent on min(Q1, Q2) with respect to the actions, clamped to the box."""
    if eta <= 0:
        raise ConfigurationError(f"eta must be positive, got {eta}")
    refined = np.array(actions, dtype=np.float32)
    for _ in range(steps):
        _, grad = critic.q_min_and_action_grad(states, refined)
        refined = np.clip(refined + eta * grad, low, high).astype(np.float32)
    return refined


@dataclass
class ActorUpdate:
    loss: float
    denoise_loss: float
    distill_loss: float
    grads: List[np.ndarray]
    refined: np.ndarray


def q_guided_improvement(actor: DiffusionActor, critic, states, joint_actions, actor_obs, eta: float,
                         steps: int, rng: np.random.Generator, lam: float = 1.0, weights=None,
                         weight_target: str = 'denoising', guided_actions=None,
                         denoise_weight: float = 1.0) -> ActorUpdate:
    """Refine joint actions along the critic's action gradient, then distill into the actor.

    `joint_actions` is (B, M*A) for a team of M members sharing the actor;
    `actor_obs` is (B, M, obs_dim). The loss is `denoise_weight` times the
    denoising loss on `joint_actions` plus `lam` times the denoising loss on
    the refined actions. `guided_actions` (same shape) are the actions that
    get refined; they default to `joint_actions`.
    """
    if weight_target not in WEIGHT_TARGETS:
        raise ConfigurationError(f"unknown weight target '{weight_target}'")
    if denoise_weight < 0 or lam < 0:
        raise ConfigurationError("loss coefficients must be non-negative")
    joint_actions = np.atleast_2d(np.asarray(joint_actions, dtype=np.float32))
    guided = joint_actions if guided_actions is None else np.atleast_2d(np.asarray(guided_actions, np.float32))
    if guided.shape != joint_actions.shape:
        raise ConfigurationError(f"guided actions {guided.shape} do not match batch actions {joint_actions.shape}")
    actor_obs = np.asarray(actor_obs, dtype=np.float32)
    if actor_obs.ndim == 2:
        actor_obs = actor_obs[:, None, :]
    batch, members = actor_obs.shape[:2]
    low = np.tile(actor.low, members)
    high = np.tile(actor.high, members)
    refined = refine_actions(critic, states, guided, eta, steps, low, high)

    obs_rows = actor_obs.reshape(batch * members, -1)
    sampled_rows = joint_actions.reshape(batch * members, actor.act_dim)
    refined_rows = refined.reshape(batch * members, actor.act_dim)
    w_rows = None if weights is None else np.repeat(np.asarray(weights, dtype=np.float32), members)
    denoise = denoising_loss(actor, obs_rows, sampled_rows, rng,
                             weights=w_rows if weight_target == 'denoising' else None)
    distill = denoising_loss(actor, obs_rows, refined_rows, rng,
                             weights=w_rows if weight_target == 'distillation' else None)
    grads = [denoise_weight * d + lam * g for d, g in zip(denoise.grads, distill.grads)]
    return ActorUpdate(denoise_weight * denoise.loss + lam * distill.loss, denoise.loss, distill.loss, grads,
                       refined)


def weight_by_return(returns, temperature: float, clip: float = np.inf, baseline: str = 'min') -> np.ndarray:
    """Exponentiated-return weights, capped at `clip` and normalized to mean 1.

    With the batch minimum as `baseline`, `clip` bounds the ratio between
    the best and the worst sample. With the batch mean it caps samples
    above average only.
    """
    if temperature <= 0:
        raise ConfigurationError(f"temperature must be positive, got {temperature}")
    if clip <= 0:
        raise ConfigurationError(f"clip must be positive, got {clip}")
    if baseline not in WEIGHT_BASELINES:
        raise ConfigurationError(f"unknown weight baseline '{baseline}'; choose from {WEIGHT_BASELINES}")
    g = np.asarray(returns, dtype=np.float64).ravel()
    if g.size == 0:
        raise ConfigurationError("cannot weight an empty batch")
    if np.all(g == g[0]):
        return np.ones_like(g)
    z = (g - (g.min() if baseline == 'min' else g.mean())) / temperature
    z = np.minimum(z, np.log(clip) if np.isfinite(clip) else 700.0)
    w = np.exp(z)
    return w / w.mean()
