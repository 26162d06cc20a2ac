"""Training driver: rollout/update cycles, JSONL metrics, periodic
checkpoints with resume, and abort-on-divergence keeping the last good
checkpoint."""

from __future__ import annotations

import json
import math
import os
import time

import numpy as np

from boardpush.env import BatchEnv, ToyDeckEnv
from boardpush.gait import GaitSchedule
from boardpush.learn.checkpoint import (CheckpointError, read_checkpoint,
                                        write_checkpoint)
from boardpush.learn.nets import Adam, PolicyParams, RunningStats
from boardpush.learn.ppo import TrainConfig, ppo_update
from boardpush.learn.rollout import rollout
from boardpush.model import ModelParams
from boardpush.rewards import RewardConfig


class TrainingDiverged(RuntimeError):
    pass


def build_envs(cfg: TrainConfig, model_params=None, episode=None,
               schedule=None, reward_cfg=None):
    n_workers = cfg.n_workers or None
    if cfg.task == "toy_deck":
        return ToyDeckEnv(cfg.n_envs, params=model_params, seed=cfg.seed,
                          max_steps=50, n_workers=n_workers)
    return BatchEnv(cfg.n_envs, params=model_params, episode=episode,
                    schedule=schedule, reward_cfg=reward_cfg, seed=cfg.seed,
                    n_workers=n_workers)


def params_to_arrays(params: PolicyParams, adam: Adam | None):
    named = list(params.flat_arrays())
    named.append(("obs_mean", params.obs_stats.mean))
    named.append(("obs_var", params.obs_stats.var))
    named.append(("obs_count", np.array([params.obs_stats.count])))
    named.append(("act_center", params.act_center))
    named.append(("act_half", params.act_half))
    if adam is not None:
        for n, _ in params.flat_arrays():
            named.append((f"adam.m.{n}", adam.m[n]))
            named.append((f"adam.v.{n}", adam.v[n]))
    return named


def save_policy(path, params: PolicyParams, meta: dict, adam: Adam | None = None):
    write_checkpoint(path, params_to_arrays(params, adam), meta)


def load_policy(path, expect_obs_dim=None, expect_act_dim=None):
    """Returns (PolicyParams, meta, adam_state_arrays). Raises
    CheckpointError when the stored architecture does not match."""
    arrays, meta = read_checkpoint(path)
    arch = meta.get("arch", {})
    hidden = tuple(arch.get("hidden", (256, 256)))
    obs_dim = arch.get("obs_dim")
    act_dim = arch.get("act_dim")
    if expect_obs_dim is not None and obs_dim != expect_obs_dim:
        raise CheckpointError(
            f"architecture mismatch: checkpoint obs_dim={obs_dim}, "
            f"environment needs {expect_obs_dim}")
    if expect_act_dim is not None and act_dim != expect_act_dim:
        raise CheckpointError(
            f"architecture mismatch: checkpoint act_dim={act_dim}, "
            f"environment needs {expect_act_dim}")
    n_layers = len(hidden) + 1
    try:
        actor = [(arrays[f"actor.W{i}"], arrays[f"actor.b{i}"])
                 for i in range(n_layers)]
        critic = [(arrays[f"critic.W{i}"], arrays[f"critic.b{i}"])
                  for i in range(n_layers)]
        params = PolicyParams(
            actor=actor, critic=critic, log_std=arrays["log_std"],
            act_center=arrays["act_center"], act_half=arrays["act_half"],
            obs_stats=RunningStats(mean=arrays["obs_mean"],
                                   var=arrays["obs_var"],
                                   count=float(arrays["obs_count"][0])),
            hidden=hidden)
    except KeyError as e:
        raise CheckpointError(f"missing array in checkpoint: {e}") from e
    return params, meta, arrays


def train(cfg: TrainConfig, run_dir, model_params: ModelParams | None = None,
          episode=None, schedule: GaitSchedule | None = None,
          reward_cfg: RewardConfig | None = None, resume: str | None = None,
          log=print):
    """Runs rollout/update cycles to cfg.total_steps. Writes metrics.jsonl
    and checkpoint_*.bpck under run_dir; returns the final checkpoint path.
    """
    os.makedirs(run_dir, exist_ok=True)
    envs = build_envs(cfg, model_params, episode, schedule, reward_cfg)

    steps_per_update = cfg.n_envs * cfg.horizon
    n_updates = max(0, math.ceil(cfg.total_steps / steps_per_update))

    start_update = 0
    env_steps = 0
    if resume:
        params, meta, arrays = load_policy(resume, envs.obs_dim, envs.act_dim)
        adam = Adam(params.flat_arrays())
        for n, _ in params.flat_arrays():
            if f"adam.m.{n}" in arrays:
                adam.m[n] = arrays[f"adam.m.{n}"]
                adam.v[n] = arrays[f"adam.v.{n}"]
        adam.t = int(meta.get("adam_t", 0))
        start_update = int(meta.get("update", 0))
        env_steps = int(meta.get("env_steps", 0))
    else:
        params = PolicyParams.create(
            envs.obs_dim, envs.act_dim, envs.act_center, envs.act_half,
            hidden=cfg.hidden, log_std_init=cfg.log_std_init, seed=cfg.seed)
        adam = Adam(params.flat_arrays())

    def meta_now(update):
        return {"schema": 1, "task": envs.task,
                "arch": {"obs_dim": envs.obs_dim, "act_dim": envs.act_dim,
                         "hidden": list(cfg.hidden)},
                "update": update, "env_steps": env_steps, "adam_t": adam.t,
                "seed": cfg.seed}

    metrics_path = os.path.join(run_dir, "metrics.jsonl")
    metrics_fh = open(metrics_path, "a")
    last_ckpt = os.path.join(run_dir, "checkpoint_last.bpck")
    save_policy(last_ckpt, params, meta_now(start_update), adam)
    if n_updates == 0:
        metrics_fh.close()
        envs.close()
        return last_ckpt

    rng_master = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, 0xB0A4D]))

    for update in range(start_update, n_updates):
        t0 = time.perf_counter()
        batch, roll_metrics = rollout(envs, params, cfg.horizon, rng_master)
        t1 = time.perf_counter()
        progress = update / max(1, n_updates)
        lr = cfg.lr * (1.0 - progress) if cfg.lr_decay else cfg.lr
        stats = ppo_update(params, batch, cfg, adam, lr, rng_master)
        t2 = time.perf_counter()
        env_steps += steps_per_update

        finite = all(np.isfinite(v) for v in stats.values()) and all(
            np.all(np.isfinite(a)) for _, a in params.flat_arrays())
        line = {
            "update": update + 1,
            "env_steps": env_steps,
            "lr": lr,
            **{k: roll_metrics[k] for k in
               ("completed_episodes", "mean_return", "mean_ep_len",
                "mean_step_reward", "tracking_error")},
            "reward_terms": roll_metrics["reward_terms"],
            **stats,
            "perf": {"steps_per_s": steps_per_update / max(1e-9, t2 - t0),
                     "rollout_s": t1 - t0, "update_s": t2 - t1},
        }
        metrics_fh.write(json.dumps(line, sort_keys=True) + "\n")
        metrics_fh.flush()
        if log:
            log(f"update {update + 1}/{n_updates} steps {env_steps} "
                f"return {roll_metrics['mean_return']:.2f} "
                f"loss {stats['loss']:.4f} kl {stats['kl']:.5f}")

        if not finite:
            metrics_fh.close()
            envs.close()
            raise TrainingDiverged(
                f"non-finite loss or parameters at update {update + 1}; "
                f"last good checkpoint: {last_ckpt}")

        if (update + 1) % cfg.checkpoint_interval == 0 or update + 1 == n_updates:
            path = os.path.join(run_dir, f"checkpoint_{update + 1:06d}.bpck")
            save_policy(path, params, meta_now(update + 1), adam)
            save_policy(last_ckpt, params, meta_now(update + 1), adam)

    metrics_fh.close()
    envs.close()
    return last_ckpt
