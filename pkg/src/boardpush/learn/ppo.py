"""PPO machinery: generalized advantage estimation and the clipped-surrogate
update with manual backprop through the actor, critic and log-std."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from boardpush.learn.nets import (
    LOG_STD_MAX, LOG_STD_MIN, Adam, PolicyParams, clip_grad_norm,
    gaussian_entropy, mlp_backward, mlp_forward)


@dataclass
class TrainConfig:
    task: str = "skateboard"          # skateboard | toy_deck
    n_envs: int = 1024                # full-scale runs use 8192
    total_steps: int = 10_000_000     # full-scale runs use 200M
    horizon: int = 64
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatches: int = 8
    lr: float = 3e-4
    lr_decay: bool = True             # linear to zero over total_steps
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: tuple = (256, 256)
    log_std_init: float = -0.7
    seed: int = 0
    checkpoint_interval: int = 10     # updates
    n_workers: int = 0                # 0 = use all cores (capped by env var)

    def validate(self) -> list:
        out = []
        if self.task not in ("skateboard", "toy_deck"):
            out.append(f"train.task: unknown task {self.task!r}")
        if self.n_envs < 1:
            out.append("train.n_envs: must be >= 1")
        if self.total_steps < 0:
            out.append("train.total_steps: must be >= 0")
        if not (0 < self.gamma <= 1):
            out.append("train.gamma: must be in (0, 1]")
        if not (0 < self.gae_lambda <= 1):
            out.append("train.gae_lambda: must be in (0, 1]")
        if not self.clip_eps > 0:
            out.append("train.clip_eps: must be > 0")
        if self.horizon < 1:
            out.append("train.horizon: must be >= 1")
        if self.epochs < 1 or self.minibatches < 1:
            out.append("train.epochs/minibatches: must be >= 1")
        return out


@dataclass
class TransitionBatch:
    """Time-major rollout storage: leading axes (horizon, n_envs)."""

    obs: np.ndarray        # (T, N, obs_dim), normalized as seen by the policy
    actions: np.ndarray    # (T, N, act_dim)
    logp: np.ndarray       # (T, N)
    rewards: np.ndarray    # (T, N)
    values: np.ndarray     # (T, N)
    dones: np.ndarray      # (T, N) float 0/1
    bootstrap: np.ndarray  # (N,) value of the post-rollout observation

    def hash(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for a in (self.obs, self.actions, self.logp, self.rewards,
                  self.values, self.dones, self.bootstrap):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def gae(rewards, values, dones, bootstrap, gamma, lam):
    """Recursive GAE over time-major arrays; episode boundaries stop both
    the bootstrap and the accumulation. Returns raw (advantages, returns);
    normalization happens per update."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    t_max, n = rewards.shape
    adv = np.zeros((t_max, n))
    last = np.zeros(n)
    next_value = np.asarray(bootstrap, dtype=float)
    for t in range(t_max - 1, -1, -1):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        last = delta + gamma * lam * not_done * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


def _policy_loss_grads(params, obs, actions, logp_old, adv, clip_eps,
                       value_coef, entropy_coef, returns):
    """Loss value, stats and gradients for one minibatch."""
    b = obs.shape[0]
    std = params.std()
    ls_mask = ((params.log_std > LOG_STD_MIN) & (params.log_std < LOG_STD_MAX)).astype(float)

    pre, a_cache = mlp_forward(params.actor, obs)
    tpre = np.tanh(pre)
    mean = params.act_center + params.act_half * tpre
    z = (actions - mean) / std
    logp = (-0.5 * z * z - np.log(std) - 0.5 * np.log(2.0 * np.pi)).sum(axis=1)
    ratio = np.exp(logp - logp_old)
    s1 = ratio * adv
    s2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    pg_loss = -np.minimum(s1, s2).mean()
    unclipped = (s1 <= s2).astype(float)

    val, c_cache = mlp_forward(params.critic, obs)
    v = val[:, 0]
    v_err = v - returns
    v_loss = 0.5 * float((v_err * v_err).mean())
    entropy = gaussian_entropy(std)
    total = pg_loss + value_coef * v_loss - entropy_coef * entropy

    # d total / d logp_i = -(1/B) adv_i ratio_i [unclipped branch]
    dlogp = -(adv * ratio * unclipped) / b
    dmean = dlogp[:, None] * (z / std)
    dpre = dmean * params.act_half * (1.0 - tpre * tpre)
    a_grads, _ = mlp_backward(params.actor, a_cache, dpre)
    dls = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0)
    dls -= entropy_coef * np.ones_like(dls)
    dls *= ls_mask

    dv = (value_coef * v_err / b)[:, None]
    c_grads, _ = mlp_backward(params.critic, c_cache, dv)

    kl = float(((ratio - 1.0) - np.log(ratio)).mean())
    clip_frac = float((np.abs(ratio - 1.0) > clip_eps).mean())
    stats = {"policy_loss": float(pg_loss), "value_loss": float(v_loss),
             "entropy": entropy, "kl": kl, "clip_fraction": clip_frac,
             "loss": float(total)}
    named = []
    for i, (gw, gb) in enumerate(a_grads):
        named.append((f"actor.W{i}", gw))
        named.append((f"actor.b{i}", gb))
    for i, (gw, gb) in enumerate(c_grads):
        named.append((f"critic.W{i}", gw))
        named.append((f"critic.b{i}", gb))
    named.append(("log_std", dls))
    return total, stats, named


def ppo_update(params: PolicyParams, batch: TransitionBatch, cfg: TrainConfig,
               adam: Adam, lr: float, rng: np.random.Generator):
    """Clipped-surrogate update over epochs x minibatches; mutates params
    in place and returns averaged stats. Observation stats are untouched
    (they only move during rollout)."""
    t_max, n = batch.rewards.shape
    adv, ret = gae(batch.rewards, batch.values, batch.dones, batch.bootstrap,
                   cfg.gamma, cfg.gae_lambda)
    adv = adv.reshape(-1)
    ret = ret.reshape(-1)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    obs = batch.obs.reshape(t_max * n, -1)
    actions = batch.actions.reshape(t_max * n, -1)
    logp_old = batch.logp.reshape(-1)

    total = t_max * n
    mb = max(1, total // cfg.minibatches)
    named_params = params.flat_arrays()
    agg: dict = {}
    count = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(total)
        for start in range(0, total, mb):
            idx = perm[start:start + mb]
            _, stats, grads = _policy_loss_grads(
                params, obs[idx], actions[idx], logp_old[idx], adv[idx],
                cfg.clip_eps, cfg.value_coef, cfg.entropy_coef, ret[idx])
            stats["grad_norm"] = clip_grad_norm(grads, cfg.max_grad_norm)
            adam.step(named_params, [g for _, g in grads], lr)
            for k, v in stats.items():
                agg[k] = agg.get(k, 0.0) + v
            count += 1
    return {k: v / count for k, v in agg.items()}
