"""Actor-critic MLPs in plain numpy: forward, manual backprop, Adam, and
running observation normalization. Everything is float64 and deterministic
given the seed; gradients are exact (cross-checked against central finite
differences in the tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
OBS_CLIP = 10.0


def _orthogonal(rng, shape, gain):
    a = rng.standard_normal(shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return np.ascontiguousarray(gain * q[:shape[0], :shape[1]])


def mlp_init(rng, sizes, out_gain):
    """List of (W, b) with orthogonal hidden layers and a small last layer."""
    layers = []
    for i in range(len(sizes) - 1):
        gain = math.sqrt(2.0) if i < len(sizes) - 2 else out_gain
        layers.append((_orthogonal(rng, (sizes[i], sizes[i + 1]), gain),
                       np.zeros(sizes[i + 1])))
    return layers


def mlp_forward(layers, x):
    """Returns (output, cache); tanh hidden activations, linear output."""
    hs = [x]
    for i, (w, b) in enumerate(layers):
        z = hs[-1] @ w + b
        hs.append(np.tanh(z) if i < len(layers) - 1 else z)
    return hs[-1], hs


def mlp_backward(layers, cache, dout):
    """Gradients w.r.t. layers given d(loss)/d(output); returns (grads, dx)."""
    grads = [None] * len(layers)
    d = dout
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        h_in = cache[i]
        grads[i] = (h_in.T @ d, d.sum(axis=0))
        d = d @ w.T
        if i > 0:
            d = d * (1.0 - cache[i] ** 2)
    return grads, d


@dataclass
class RunningStats:
    """Streaming mean/variance over observation batches (parallel merge)."""

    mean: np.ndarray
    var: np.ndarray
    count: float = 1e-4

    @classmethod
    def create(cls, dim):
        return cls(mean=np.zeros(dim), var=np.ones(dim))

    def update(self, batch):
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_n = batch.shape[0]
        delta = b_mean - self.mean
        tot = self.count + b_n
        self.mean = self.mean + delta * (b_n / tot)
        m_a = self.var * self.count
        m_b = b_var * b_n
        self.var = (m_a + m_b + delta * delta * (self.count * b_n / tot)) / tot
        self.count = tot

    def normalize(self, batch):
        return np.clip((batch - self.mean) / np.sqrt(self.var + 1e-8),
                       -OBS_CLIP, OBS_CLIP)

    def checksum(self) -> float:
        return float(self.mean.sum() + self.var.sum() + self.count)


@dataclass
class PolicyParams:
    """Actor + critic weights, exploration log-std and observation stats."""

    actor: list
    critic: list
    log_std: np.ndarray
    act_center: np.ndarray
    act_half: np.ndarray
    obs_stats: RunningStats
    hidden: tuple = (256, 256)

    @classmethod
    def create(cls, obs_dim, act_dim, act_center, act_half, hidden=(256, 256),
               log_std_init=-0.7, seed=0):
        rng = np.random.default_rng(seed)
        actor = mlp_init(rng, (obs_dim, *hidden, act_dim), out_gain=0.01)
        critic = mlp_init(rng, (obs_dim, *hidden, 1), out_gain=1.0)
        act_half = np.asarray(act_half, dtype=float)
        return cls(actor=actor, critic=critic,
                   log_std=np.full(act_dim, float(log_std_init)),
                   act_center=np.asarray(act_center, dtype=float),
                   act_half=act_half,
                   obs_stats=RunningStats.create(obs_dim), hidden=tuple(hidden))

    @property
    def obs_dim(self):
        return self.actor[0][0].shape[0]

    @property
    def act_dim(self):
        return self.log_std.shape[0]

    def std(self):
        """Exploration std in action units: log_std is expressed relative to
        the per-dimension action half-range."""
        return self.act_half * np.exp(np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX))

    def flat_arrays(self):
        """Named parameter arrays in a fixed order (checkpoint layout)."""
        out = []
        for tag, layers in (("actor", self.actor), ("critic", self.critic)):
            for i, (w, b) in enumerate(layers):
                out.append((f"{tag}.W{i}", w))
                out.append((f"{tag}.b{i}", b))
        out.append(("log_std", self.log_std))
        return out

    def copy(self):
        return PolicyParams(
            actor=[(w.copy(), b.copy()) for w, b in self.actor],
            critic=[(w.copy(), b.copy()) for w, b in self.critic],
            log_std=self.log_std.copy(),
            act_center=self.act_center.copy(), act_half=self.act_half.copy(),
            obs_stats=RunningStats(self.obs_stats.mean.copy(),
                                   self.obs_stats.var.copy(),
                                   self.obs_stats.count),
            hidden=self.hidden)


def policy_eval(params: PolicyParams, obs_norm):
    """Deterministic forward pass on normalized observations:
    (action means squashed into the joint range, std vector, values)."""
    pre, _ = mlp_forward(params.actor, obs_norm)
    mean = params.act_center + params.act_half * np.tanh(pre)
    val, _ = mlp_forward(params.critic, obs_norm)
    return mean, params.std(), val[:, 0]


def gaussian_logp(action, mean, std):
    z = (action - mean) / std
    return (-0.5 * z * z - np.log(std) - 0.5 * math.log(2.0 * math.pi)).sum(axis=-1)


def gaussian_entropy(std):
    return float(np.sum(np.log(std) + 0.5 * math.log(2.0 * math.pi * math.e)))


class Adam:
    """Adaptive-moment optimizer over a list of named arrays."""

    def __init__(self, named_arrays, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(a) for n, a in named_arrays}
        self.v = {n: np.zeros_like(a) for n, a in named_arrays}

    def step(self, named_params, named_grads, lr):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for (name, p), g in zip(named_params, named_grads):
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def clip_grad_norm(grads_named, max_norm):
    total = 0.0
    for _, g in grads_named:
        total += float((g * g).sum())
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for _, g in grads_named:
            g *= scale
    return norm
