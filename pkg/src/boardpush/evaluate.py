"""Deterministic-policy evaluation: rollouts at a fixed command with a
trajectory export (JSONL + CSV) and a summary report."""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from boardpush.config import RunConfig
from boardpush.env import SIG, BatchEnv, TERM_REASONS
from boardpush.gait import expected_contact_value
from boardpush.learn.nets import policy_eval
from boardpush.learn.train import load_policy
from boardpush.rewards import TERM_NAMES

CSV_COLUMNS = (
    ["t"] + [f"q_r{i}" for i in range(19)] + [f"v_r{i}" for i in range(18)]
    + [f"q_b{i}" for i in range(9)] + [f"v_b{i}" for i in range(8)]
    + [f"action{i}" for i in range(12)] + list(TERM_NAMES) + ["reward_total"])


def evaluate(checkpoint_path, n_episodes: int, command_vx: float,
             out_dir, cfg: RunConfig | None = None, seed: int = 0,
             log=print):
    """Runs `n_episodes` deterministic episodes at the given forward command.

    Writes trajectory.jsonl, trajectory.csv and report.json into out_dir;
    returns the report dict.
    """
    cfg = cfg or RunConfig()
    os.makedirs(out_dir, exist_ok=True)
    report = {
        "command_vx": command_vx,
        "episodes_requested": n_episodes,
        "checkpoint": str(checkpoint_path),
        "seed": seed,
    }
    traj_path = os.path.join(out_dir, "trajectory.jsonl")
    csv_path = os.path.join(out_dir, "trajectory.csv")
    report_path = os.path.join(out_dir, "report.json")

    if n_episodes <= 0:
        report.update({"episodes": 0, "mean_tracking_error": None,
                       "mean_episode_len": None, "phase_adherence": None,
                       "foot_slip_rms": None})
        open(traj_path, "w").close()
        with open(csv_path, "w", newline="") as fh:
            csv.writer(fh).writerow(CSV_COLUMNS)
        with open(report_path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        if log:
            log(json.dumps(report, sort_keys=True))
        return report

    from boardpush.dynamics import contact_detect

    env = BatchEnv(1, params=cfg.model, episode=cfg.env, schedule=cfg.gait,
                   reward_cfg=cfg.reward, seed=seed, n_workers=1)
    params, meta, _ = load_policy(checkpoint_path, env.obs_dim, env.act_dim)

    def force_command():
        env.cmd[0] = (command_vx, 0.0, 0.0)
        env.obs[0, 33:36] = env.cmd[0]

    force_command()
    track_errs = []
    ep_lens = []
    phase_hits = 0
    phase_total = 0
    slip_sq = []
    t_now = 0.0
    ep_len = 0
    episodes = 0

    f_jsonl = open(traj_path, "w")
    f_csv = open(csv_path, "w", newline="")
    writer = csv.writer(f_csv)
    writer.writerow(CSV_COLUMNS)

    while episodes < n_episodes:
        state = env.state_of(0)
        norm = params.obs_stats.normalize(env.obs.copy())
        mean, _, _ = policy_eval(params, norm)
        obs, totals, dones, term_codes, terms = env.step_batch(mean)
        sig = env.signals[0]
        t_now += env.episode.ctrl_dt
        ep_len += 1

        err = float(np.hypot(command_vx - sig[SIG.v_deck_x], sig[SIG.v_deck_y]))
        track_errs.append(err)
        exp_left = expected_contact_value(
            sig[SIG.phase], "left", env.schedule.t_double, env.schedule.cycle,
            env.schedule.smooth_width)
        actual_left = 1.0 if sig[SIG.f_left] > env.reward_cfg.f_min else 0.0
        phase_hits += int(round(float(exp_left)) == int(actual_left))
        phase_total += 1
        slip_sq.append(float(terms["foot_slip"][0]))

        reason = TERM_REASONS[int(term_codes[0])]
        # contacts at the recorded (pre-action) state, matching the q/v below
        contacts = [
            {"pair": c.pair, "point": [float(x) for x in c.point],
             "normal": [float(x) for x in c.normal],
             "penetration": float(c.penetration),
             "normal_force": float(c.normal_force)}
            for c in contact_detect(state, params=cfg.model,
                                    mat=env.world.mat)]
        frame = {
            "t": round(t_now, 9),
            "q_robot": [float(x) for x in state.q_robot],
            "v_robot": [float(x) for x in state.v_robot],
            "q_board": [float(x) for x in state.q_board],
            "v_board": [float(x) for x in state.v_board],
            "action": [float(x) for x in mean[0]],
            "phase": float(sig[SIG.phase]),
            "command": [float(command_vx), 0.0, 0.0],
            "f_left": float(sig[SIG.f_left]),
            "f_right": float(sig[SIG.f_right]),
            "contacts": contacts,
            "reward": {**{k: float(v[0]) for k, v in terms.items()},
                       "total": float(totals[0])},
            "termination": reason,
        }
        f_jsonl.write(json.dumps(frame) + "\n")
        writer.writerow(
            [frame["t"]] + frame["q_robot"] + frame["v_robot"]
            + frame["q_board"] + frame["v_board"] + frame["action"]
            + [frame["reward"][k] for k in TERM_NAMES]
            + [frame["reward"]["total"]])

        if dones[0]:
            episodes += 1
            ep_lens.append(ep_len)
            ep_len = 0
            force_command()

    f_jsonl.close()
    f_csv.close()
    env.close()

    report.update({
        "episodes": episodes,
        "mean_tracking_error": float(np.mean(track_errs)),
        "mean_episode_len": float(np.mean(ep_lens)),
        "phase_adherence": phase_hits / max(1, phase_total),
        "foot_slip_rms": float(np.sqrt(np.mean(slip_sq))),
        "policy_update": meta.get("update"),
    })
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    if log:
        log(json.dumps(report, sort_keys=True))
    return report
