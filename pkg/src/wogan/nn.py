"""Small dense networks in numpy: backprop, Adam, WGAN-GP and analyzer training.

Batches are row-major: an input batch has shape ``(n, input_dim)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DimensionMismatch, EmptyBatch, EmptyData

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(z.dtype)  # subgradient 0 at the kink
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


class DenseNet:
    """Fully connected network ``y = output_scale * f(input_scale * x)``."""

    def __init__(self, layers: Sequence[tuple[np.ndarray, np.ndarray, str]],
                 input_scale: float = 1.0, output_scale: float = 1.0):
        self.weights = [np.array(w, dtype=float) for w, _, _ in layers]
        self.biases = [np.array(b, dtype=float).reshape(-1) for _, b, _ in layers]
        self.activations = [a for _, _, a in layers]
        self.input_scale = float(input_scale)
        self.output_scale = float(output_scale)
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[0] != b.size:
                raise DimensionMismatch(f"layer {k}: weight {w.shape} vs bias {b.shape}")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise DimensionMismatch(f"layer {k} input {w.shape[1]} != previous output {self.weights[k - 1].shape[0]}")

    @classmethod
    def build(cls, sizes: Sequence[int], hidden: str, output: str, rng: np.random.Generator,
              input_scale: float = 1.0, output_scale: float = 1.0) -> "DenseNet":
        """He-uniform weights and zero biases for the layer ``sizes``."""
        layers = []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = math.sqrt(6.0 / n_in)
            w = rng.uniform(-bound, bound, size=(n_out, n_in))
            act = output if k == len(sizes) - 2 else hidden
            layers.append((w, np.zeros(n_out), act))
        return cls(layers, input_scale, output_scale)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(list(zip(self.weights, self.biases, self.activations)), self.input_scale, self.output_scale)

    # -- forward / backward -------------------------------------------------

    def _check(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        if x2.ndim != 2 or x2.shape[1] != self.input_dim:
            raise DimensionMismatch(f"expected input dim {self.input_dim}, got shape {x.shape}")
        return x2, single

    def forward_cache(self, x):
        x2, single = self._check(x)
        a = x2 * self.input_scale
        inputs, pre, post = [], [], []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            inputs.append(a)
            z = a @ w.T + b
            a = _act(act, z)
            pre.append(z)
            post.append(a)
        return a * self.output_scale, (inputs, pre, post, single)

    def forward(self, x) -> np.ndarray:
        out, (_, _, _, single) = self.forward_cache(x)
        return out[0] if single else out

    __call__ = forward

    def backward(self, cache, grad_out) -> tuple[list[np.ndarray], np.ndarray]:
        """Parameter gradients (ordered like :meth:`params`) and input gradient.

        ``grad_out`` is dLoss/dOutput with the same shape as the forward output.
        """
        inputs, pre, post, single = cache
        g = np.asarray(grad_out, dtype=float)
        g = (g[None, :] if single else g) * self.output_scale
        grads: list[np.ndarray] = []
        for w, act, a_in, z, a in zip(reversed(self.weights), reversed(self.activations),
                                      reversed(inputs), reversed(pre), reversed(post)):
            delta = g * _act_grad(act, z, a)
            grads.extend((delta.sum(axis=0), delta.T @ a_in))
            g = delta @ w
        grads.reverse()  # -> [dW1, db1, dW2, db2, ...]
        g = g * self.input_scale
        return grads, (g[0] if single else g)

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "input_scale": self.input_scale,
            "output_scale": self.output_scale,
            "layers": [
                {"shape": list(w.shape), "weight": w.reshape(-1).tolist(), "bias": b.tolist(), "activation": a}
                for w, b, a in zip(self.weights, self.biases, self.activations)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseNet":
        layers = [
            (np.array(l["weight"], dtype=float).reshape(l["shape"]), np.array(l["bias"], dtype=float), l["activation"])
            for l in data["layers"]
        ]
        return cls(layers, data.get("input_scale", 1.0), data.get("output_scale", 1.0))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "DenseNet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def forward(net: DenseNet, x) -> np.ndarray:
    return net.forward(x)


def gradients(net: DenseNet, x, loss_grad: Callable[[np.ndarray], np.ndarray]):
    """Reverse-mode gradients of a loss given as ``loss_grad(output) -> dLoss/dOutput``."""
    out, cache = net.forward_cache(x)
    if cache[3]:
        out = out[0]
    return net.backward(cache, loss_grad(out))


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.0
    beta2: float = 0.9
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")


def adam_update(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam step, applied to ``params`` in place."""
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise DimensionMismatch(f"param {p.shape} vs grad {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


# ---------------------------------------------------------------------------
# WGAN with gradient penalty

@dataclass
class WganHyper:
    critic_lr: float = 0.00005
    generator_lr: float = 0.00005
    gp_coefficient: float = 10.0
    critic_steps: int = 5
    batch_size: int = 32
    beta1: float = 0.0
    beta2: float = 0.9
    # "analytic" (double backward) or "finite_difference" (cross-check, slow)
    gp_gradient: str = "analytic"

    def __post_init__(self):
        for name in ("critic_lr", "generator_lr", "gp_coefficient", "critic_steps", "batch_size"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.gp_gradient not in ("analytic", "finite_difference"):
            raise ConfigError("gp_gradient must be 'analytic' or 'finite_difference'")


def _interpolates(real: np.ndarray, fake: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    eps = rng.uniform(0.0, 1.0, size=(len(real), 1))
    return eps * real + (1.0 - eps) * fake


def _check_penalty_net(critic: DenseNet) -> None:
    if critic.output_dim != 1:
        raise DimensionMismatch("critic must have a scalar output")
    if any(a not in ("relu", "identity") for a in critic.activations):
        raise ConfigError("gradient penalty needs piecewise-linear activations (relu/identity)")


def _input_grads(critic: DenseNet, x: np.ndarray):
    """Per-sample dC/du where u = input_scale * x is the critic's normalized input.

    Also returns the activation masks D_l and the backward vectors u_l
    (layer deltas for a unit output gradient) that the double backward reuses.
    """
    _, (_, pre, post, _) = critic.forward_cache(x)
    masks = [_act_grad(a, z, y) for a, z, y in zip(critic.activations, pre, post)]
    deltas = [None] * len(critic.weights)
    g = np.full((len(x), 1), critic.output_scale)
    for k in range(len(critic.weights) - 1, -1, -1):
        deltas[k] = g * masks[k]
        g = deltas[k] @ critic.weights[k]
    return g, masks, deltas


def penalty_value(critic: DenseNet, x_hat: np.ndarray) -> float:
    g, _, _ = _input_grads(critic, np.asarray(x_hat, dtype=float))
    return float(np.mean((np.linalg.norm(g, axis=1) - 1.0) ** 2))


def penalty_and_grads(critic: DenseNet, x_hat: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Gradient penalty at fixed interpolates and its exact parameter gradient.

    With piecewise-linear activations the masks D_l are locally constant, so the
    input gradient is multilinear in the weights:

        u_L = D_L * output_scale,  g_{l-1} = u_l W_l,  u_{l-1} = D_{l-1} * g_{l-1}

    and g = g_0. For P = mean_n (|g| - 1)^2 put q_0 = dP/dg = 2 (|g| - 1) g / |g| / n,
    then walk the chain forward:

        dP/dW_l = u_l^T q_{l-1},  r_l = q_{l-1} W_l^T,  q_l = D_l * r_l

    Bias gradients vanish because biases only move the (constant) masks.
    """
    _check_penalty_net(critic)
    x_hat = np.asarray(x_hat, dtype=float)
    g, masks, deltas = _input_grads(critic, x_hat)
    n = len(x_hat)
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    value = float(np.mean((norm - 1.0) ** 2))
    q = 2.0 * (norm - 1.0) * g / np.maximum(norm, 1e-12) / n
    grads: list[np.ndarray] = []
    for k, w in enumerate(critic.weights):
        grads.append(deltas[k].T @ q)
        grads.append(np.zeros_like(critic.biases[k]))
        q = (q @ w.T) * masks[k]
    return value, grads


def penalty_grads_fd(critic: DenseNet, x_hat: np.ndarray, h: float = 1e-6) -> list[np.ndarray]:
    """Central finite differences of the penalty with respect to every parameter."""
    grads = []
    for p in critic.params():
        gp = np.zeros_like(p)
        flat = p.reshape(-1)
        out = gp.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = penalty_value(critic, x_hat)
            flat[i] = old - h
            down = penalty_value(critic, x_hat)
            flat[i] = old
            out[i] = (up - down) / (2 * h)
        grads.append(gp)
    return grads


def gradient_penalty(critic: DenseNet, real, fake, rng: np.random.Generator) -> float:
    """Mean of (|grad C(x_hat)| - 1)^2 over random interpolates of real and fake."""
    real = np.asarray(real, dtype=float)
    fake = np.asarray(fake, dtype=float)
    if real.shape != fake.shape:
        raise DimensionMismatch(f"real {real.shape} vs fake {fake.shape}")
    return penalty_value(critic, _interpolates(real, fake, rng))


@dataclass
class Wgan:
    """Generator/critic pair with their optimizer states."""

    generator: DenseNet
    critic: DenseNet
    hyper: WganHyper = field(default_factory=WganHyper)
    latent_dim: int = 10
    g_opt: AdamState | None = None
    c_opt: AdamState | None = None

    def __post_init__(self):
        h = self.hyper
        if self.g_opt is None:
            self.g_opt = AdamState(h.generator_lr, h.beta1, h.beta2)
        if self.c_opt is None:
            self.c_opt = AdamState(h.critic_lr, h.beta1, h.beta2)

    def sample_latent(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=(n, self.latent_dim))

    def generate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.generator.forward(self.sample_latent(n, rng))


def build_wgan(test_dim: int, rng: np.random.Generator, hyper: WganHyper | None = None,
               latent_dim: int = 10, hidden: int = 128, kappa_max: float = 0.07) -> Wgan:
    hyper = hyper or WganHyper()
    gen = DenseNet.build([latent_dim, hidden, hidden, test_dim], "relu", "tanh", rng, output_scale=kappa_max)
    critic = DenseNet.build([test_dim, hidden, hidden, 1], "relu", "identity", rng, input_scale=1.0 / kappa_max)
    return Wgan(gen, critic, hyper, latent_dim)


def build_analyzer(test_dim: int, rng: np.random.Generator, hidden: int = 32, kappa_max: float = 0.07) -> DenseNet:
    return DenseNet.build([test_dim, hidden, hidden, 1], "relu", "sigmoid", rng, input_scale=1.0 / kappa_max)


def critic_step(wgan: Wgan, real: np.ndarray, rng: np.random.Generator) -> float:
    """One critic update; returns the critic loss before the update."""
    critic, h = wgan.critic, wgan.hyper
    n = len(real)
    fake = wgan.generate(n, rng)
    out_r, cache_r = critic.forward_cache(real)
    out_f, cache_f = critic.forward_cache(fake)
    grads_r, _ = critic.backward(cache_r, np.full((n, 1), -1.0 / n))
    grads_f, _ = critic.backward(cache_f, np.full((n, 1), 1.0 / n))
    x_hat = _interpolates(real, fake, rng)
    if h.gp_gradient == "analytic":
        gp, grads_gp = penalty_and_grads(critic, x_hat)
    else:
        gp = penalty_value(critic, x_hat)
        grads_gp = penalty_grads_fd(critic, x_hat)
    loss = float(out_f.mean() - out_r.mean() + h.gp_coefficient * gp)
    grads = [a + b + h.gp_coefficient * c for a, b, c in zip(grads_r, grads_f, grads_gp)]
    adam_update(critic.params(), grads, wgan.c_opt)
    return loss


def generator_step(wgan: Wgan, n: int, rng: np.random.Generator) -> float:
    """One generator update minimizing -mean C(G(z)); returns the loss before the update."""
    z = wgan.sample_latent(n, rng)
    fake, cache_g = wgan.generator.forward_cache(z)
    out, cache_c = wgan.critic.forward_cache(fake)
    _, d_fake = wgan.critic.backward(cache_c, np.full((n, 1), -1.0 / n))
    grads, _ = wgan.generator.backward(cache_g, d_fake)
    adam_update(wgan.generator.params(), grads, wgan.g_opt)
    return float(-out.mean())


def train_wgan_step(wgan: Wgan, real_batch, rng: np.random.Generator) -> tuple[float, float]:
    """``critic_steps`` critic updates followed by one generator update."""
    real = np.asarray(real_batch, dtype=float)
    if real.ndim != 2 or len(real) == 0:
        raise EmptyBatch("real batch is empty")
    c_loss = 0.0
    for _ in range(wgan.hyper.critic_steps):
        c_loss = critic_step(wgan, real, rng)
    g_loss = generator_step(wgan, len(real), rng)
    return c_loss, g_loss


# ---------------------------------------------------------------------------
# analyzer

def train_analyzer(analyzer: DenseNet, tests, fitnesses, epochs: int, opt: AdamState,
                   rng: np.random.Generator, batch_size: int = 32) -> float:
    """Mean-squared-error regression of the analyzer onto fitness; returns the last epoch's loss."""
    x = np.asarray(tests, dtype=float)
    y = np.asarray(fitnesses, dtype=float).reshape(-1, 1)
    if len(x) == 0 or len(x) != len(y):
        raise EmptyData(f"need matching non-empty tests/fitnesses, got {len(x)} and {len(y)}")
    loss = math.nan
    for _ in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            pred, cache = analyzer.forward_cache(x[idx])
            err = pred - y[idx]
            total += float(np.sum(err * err))
            grads, _ = analyzer.backward(cache, 2.0 * err / len(idx))
            adam_update(analyzer.params(), grads, opt)
        loss = total / len(x)
    return loss
