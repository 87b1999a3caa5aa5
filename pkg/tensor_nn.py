"""Dense MLPs with hand-written reverse-mode gradients, Adam and Polyak averaging.

Tensors are plain numpy arrays (float32 unless a network is built with
another dtype). Parameters are ordered [W0, b0, W1, b1, ...] everywhere:
in `Mlp.parameters`, in gradient lists and in the flat parameter vector.
"""

import copy
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import debug_enabled
from errors import ConfigurationError, NumericError

ACTIVATIONS = ('relu', 'tanh', 'mish')


def check_finite(name: str, array: np.ndarray):
    if not np.all(np.isfinite(array)):
        raise NumericError(f"{name}: non-finite values")


def _tanh_softplus(z: np.ndarray) -> np.ndarray:
    # tanh(log(1 + e^z)) = n / (n + 2) with n = e^z (e^z + 2)
    e = np.exp(np.minimum(z, 20.0))
    n = e * (e + 2)
    return n / (n + 2)


def _activate(name: str, z: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Activation output plus what its gradient needs besides z."""
    if name == 'relu':
        return np.maximum(z, 0), None
    if name == 'tanh':
        h = np.tanh(z)
        return h, h
    tsp = _tanh_softplus(z)
    return z * tsp, tsp


def _activation_grad(name: str, z: np.ndarray, aux: Optional[np.ndarray] = None) -> np.ndarray:
    if name == 'relu':
        return (z > 0).astype(z.dtype)
    if name == 'tanh':
        h = np.tanh(z) if aux is None else aux
        return 1 - h ** 2
    tsp = _tanh_softplus(z) if aux is None else aux
    sigmoid = 0.5 * (1 + np.tanh(0.5 * z))
    return tsp + z * (1 - tsp ** 2) * sigmoid


class Mlp:
    """Fully connected network: affine + activation per hidden layer, linear output."""

    def __init__(self, sizes: Sequence[int], activation: str = 'relu',
                 rng: Optional[np.random.Generator] = None, dtype=np.float32, final_scale: float = 1.0):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) <= 0:
            raise ConfigurationError(f"invalid layer widths {sizes}")
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation '{activation}'")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = sizes
        self.activation = activation
        self.dtype = np.dtype(dtype)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            scale = final_scale if l == len(sizes) - 2 else 1.0
            self.weights.append((scale * rng.uniform(-bound, bound, (fan_in, fan_out))).astype(self.dtype))
            self.biases.append((scale * rng.uniform(-bound, bound, fan_out)).astype(self.dtype))

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def parameters(self) -> List[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def forward(self, x) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_cached(self, x) -> Tuple[np.ndarray, tuple]:
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[-1] != self.sizes[0]:
            raise ConfigurationError(f"input width {h.shape[-1]} does not match first layer {self.sizes[0]}")
        inputs, pre = [], []
        last = self.num_layers - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            if l < last:
                h, aux = _activate(self.activation, z)
                pre.append((z, aux))
            else:
                h = z
        if debug_enabled():
            check_finite('mlp output', h)
        return (h[0] if single else h), (single, inputs, pre)

    def backward(self, cache: tuple, upstream) -> Tuple[List[np.ndarray], np.ndarray]:
        """Parameter gradients (same order as `parameters`) and the input gradient."""
        single, inputs, pre = cache
        g = np.atleast_2d(np.asarray(upstream, dtype=self.dtype))
        if g.shape[-1] != self.sizes[-1]:
            raise ConfigurationError(f"upstream width {g.shape[-1]} does not match output {self.sizes[-1]}")
        grads: List[np.ndarray] = [None] * (2 * self.num_layers)
        for l in reversed(range(self.num_layers)):
            if l < self.num_layers - 1:
                g = g * _activation_grad(self.activation, *pre[l])
            grads[2 * l] = inputs[l].T @ g
            grads[2 * l + 1] = g.sum(axis=0)
            g = g @ self.weights[l].T
        if debug_enabled():
            for grad in grads:
                check_finite('mlp gradient', grad)
        return grads, (g[0] if single else g)

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()]).astype(self.dtype)

    def load_flat(self, vector: np.ndarray):
        vector = np.asarray(vector, dtype=self.dtype).ravel()
        if vector.size != self.num_params:
            raise ConfigurationError(f"expected {self.num_params} parameters, got {vector.size}")
        offset = 0
        for l in range(self.num_layers):
            for arrays in (self.weights, self.biases):
                shape = arrays[l].shape
                size = int(np.prod(shape))
                arrays[l] = vector[offset:offset + size].reshape(shape).copy()
                offset += size

    def copy(self) -> 'Mlp':
        return copy.deepcopy(self)


def mlp_forward(net: Mlp, x) -> np.ndarray:
    return net.forward(x)


def mlp_backward(net: Mlp, x, upstream_grad) -> Tuple[List[np.ndarray], np.ndarray]:
    _, cache = net.forward_cached(x)
    return net.backward(cache, upstream_grad)


def flatten_params(net: Mlp) -> np.ndarray:
    return net.flatten()


def unflatten_params(net: Mlp, vector: np.ndarray) -> Mlp:
    net.load_flat(vector)
    return net


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float, **kwargs) -> 'AdamState':
        if lr <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {lr}")
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kwargs)


def adam_step(state: AdamState, params: List[np.ndarray], grads: List[np.ndarray]) -> List[np.ndarray]:
    """Bias-corrected Adam update, applied to `params` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ConfigurationError("params, grads and optimizer state differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ConfigurationError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        check_finite('adam gradient', g)
    state.step += 1
    bias1 = 1 - state.beta1 ** state.step
    bias2 = 1 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return params


class Adam:
    """Adam bound to one network's parameter list."""

    def __init__(self, net: Mlp, lr: float, **kwargs):
        self.net = net
        self.state = AdamState.for_params(net.parameters(), lr, **kwargs)

    def step(self, grads: List[np.ndarray]):
        adam_step(self.state, self.net.parameters(), grads)


def polyak_update(target_params: List[np.ndarray], online_params: List[np.ndarray], tau: float) -> List[np.ndarray]:
    """target <- (1 - tau) * target + tau * online, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ConfigurationError(f"tau must lie in [0, 1], got {tau}")
    for t, o in zip(target_params, online_params):
        t *= (1 - tau)
        t += tau * o
    return target_params
