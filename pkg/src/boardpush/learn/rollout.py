"""Batched rollout collection: stochastic policy actions over a worker-pool
environment, with per-update observation-normalization updates and episode
bookkeeping. Deterministic for a fixed seed regardless of worker count."""

from __future__ import annotations

import numpy as np

from boardpush.learn.nets import PolicyParams, gaussian_logp, policy_eval
from boardpush.learn.ppo import TransitionBatch


def rollout(envs, params: PolicyParams, horizon: int,
            rng: np.random.Generator, update_stats: bool = True,
            deterministic: bool = False):
    """Step all environments `horizon` control steps.

    Returns (TransitionBatch, metrics). Observation running stats update
    only here (never during the learner update); actions are sampled from
    the squashed-mean Gaussian via the single master stream `rng`.
    """
    n = envs.n_envs
    obs_dim, act_dim = envs.obs_dim, envs.act_dim
    b_obs = np.zeros((horizon, n, obs_dim))
    b_act = np.zeros((horizon, n, act_dim))
    b_logp = np.zeros((horizon, n))
    b_rew = np.zeros((horizon, n))
    b_val = np.zeros((horizon, n))
    b_done = np.zeros((horizon, n))

    ep_ret = getattr(envs, "_ep_ret", None)
    if ep_ret is None or ep_ret.shape[0] != n:
        ep_ret = np.zeros(n)
        ep_len = np.zeros(n, dtype=np.int64)
    else:
        ep_len = envs._ep_len
    completed_ret: list = []
    completed_len: list = []
    term_counts: dict = {}
    reward_term_sums: dict = {}
    track_err = 0.0

    for t in range(horizon):
        raw = envs.obs.copy()
        if update_stats:
            params.obs_stats.update(raw)
        norm = params.obs_stats.normalize(raw)
        mean, std, value = policy_eval(params, norm)
        if deterministic:
            action = mean
        else:
            action = mean + std * rng.standard_normal((n, act_dim))
        logp = gaussian_logp(action, mean, std)

        _, rewards, dones, terms, reward_terms = envs.step_batch(action)

        b_obs[t] = norm
        b_act[t] = action
        b_logp[t] = logp
        b_rew[t] = rewards
        b_val[t] = value
        b_done[t] = dones

        ep_ret += rewards
        ep_len += 1
        for k in np.nonzero(dones)[0]:
            completed_ret.append(float(ep_ret[k]))
            completed_len.append(int(ep_len[k]))
            ep_ret[k] = 0.0
            ep_len[k] = 0
            name = int(terms[k])
            term_counts[name] = term_counts.get(name, 0) + 1
        for name, vals in reward_terms.items():
            reward_term_sums[name] = reward_term_sums.get(name, 0.0) + float(vals.mean())
        track_err += envs_tracking_error(envs)

    envs._ep_ret = ep_ret
    envs._ep_len = ep_len

    norm_last = params.obs_stats.normalize(envs.obs.copy())
    bootstrap = policy_eval(params, norm_last)[2]
    batch = TransitionBatch(obs=b_obs, actions=b_act, logp=b_logp,
                            rewards=b_rew, values=b_val, dones=b_done,
                            bootstrap=bootstrap)
    metrics = {
        "completed_episodes": len(completed_ret),
        "mean_return": float(np.mean(completed_ret)) if completed_ret else float("nan"),
        "mean_ep_len": float(np.mean(completed_len)) if completed_len else float("nan"),
        "mean_step_reward": float(b_rew.mean()),
        "tracking_error": track_err / horizon,
        "reward_terms": {k: v / horizon for k, v in reward_term_sums.items()},
        "terminations": term_counts,
    }
    return batch, metrics


def envs_tracking_error(envs) -> float:
    """Mean |commanded - actual| planar deck speed across the batch."""
    if envs.task == "skateboard":
        from boardpush.env import SIG
        dx = envs.cmd[:, 0] - envs.signals[:, SIG.v_deck_x]
        dy = envs.cmd[:, 1] - envs.signals[:, SIG.v_deck_y]
        return float(np.hypot(dx, dy).mean())
    return float(np.abs(envs.cmd[:, 0] - envs.obs[:, 0]).mean())
