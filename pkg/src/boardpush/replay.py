"""Trajectory replay: SVG plots and a summary CSV from a trajectory JSONL."""

from __future__ import annotations

import csv
import json
import math
import os
import sys

import numpy as np

from boardpush.rewards import TERM_NAMES


class TrajectoryError(ValueError):
    pass


def load_trajectory(path) -> list:
    frames = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                frames.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise TrajectoryError(f"{path}: bad JSON on line {lineno}: {e}") from e
    return frames


def _deck_world_velocity(frame):
    """World planar deck velocity from the stored body-frame state."""
    q = frame["q_board"]
    v = frame["v_board"]
    qw, qx, qy, qz = q[3:7]
    # first two rows of the rotation matrix
    r00 = qw * qw + qx * qx - qy * qy - qz * qz
    r01 = 2 * (qx * qy - qw * qz)
    r02 = 2 * (qx * qz + qw * qy)
    r10 = 2 * (qx * qy + qw * qz)
    r11 = qw * qw - qx * qx + qy * qy - qz * qz
    r12 = 2 * (qy * qz - qw * qx)
    vx = r00 * v[0] + r01 * v[1] + r02 * v[2]
    vy = r10 * v[0] + r11 * v[1] + r12 * v[2]
    return vx, vy


def replay(traj_path, out_dir, log=print) -> list:
    """Writes deck_velocity.svg, reward_terms.svg, phase_contact.svg and
    summary.csv; returns the list of written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    frames = load_trajectory(traj_path)
    os.makedirs(out_dir, exist_ok=True)
    if not frames and log:
        print("warning: empty trajectory, plots will be empty", file=sys.stderr)

    t = [f["t"] for f in frames]
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    if frames:
        vel = [_deck_world_velocity(f) for f in frames]
        ax.plot(t, [v[0] for v in vel], label="deck v_x")
        ax.plot(t, [v[1] for v in vel], label="deck v_y")
        if "command" in frames[0]:
            ax.plot(t, [f["command"][0] for f in frames], "k--", label="command v_x")
        ax.legend()
    ax.set_xlabel("t [s]")
    ax.set_ylabel("velocity [m/s]")
    ax.set_title("deck velocity vs command")
    path = os.path.join(out_dir, "deck_velocity.svg")
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    if frames:
        for name in TERM_NAMES:
            if name in frames[0].get("reward", {}):
                ax.plot(t, [f["reward"][name] for f in frames], label=name)
        ax.legend(fontsize=6, ncol=2)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("unweighted term value")
    ax.set_title("reward terms")
    path = os.path.join(out_dir, "reward_terms.svg")
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    if frames and "phase" in frames[0]:
        from boardpush.gait import expected_contact_value
        exp = [float(expected_contact_value(f["phase"], "left", 0.75, 1.75, 0.05))
               for f in frames]
        ax.plot(t, exp, label="expected left contact")
        if "f_left" in frames[0]:
            ax.plot(t, [1.0 if f["f_left"] > 20.0 else 0.0 for f in frames],
                    label="actual left contact")
        ax.legend()
    ax.set_xlabel("t [s]")
    ax.set_ylabel("contact indicator")
    ax.set_title("gait phase vs actual contact")
    path = os.path.join(out_dir, "phase_contact.svg")
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    summary = os.path.join(out_dir, "summary.csv")
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        w.writerow(["frames", len(frames)])
        if frames:
            vel = [_deck_world_velocity(f) for f in frames]
            w.writerow(["mean_deck_vx", float(np.mean([v[0] for v in vel]))])
            if "command" in frames[0]:
                errs = [math.hypot(f["command"][0] - v[0], v[1])
                        for f, v in zip(frames, vel)]
                w.writerow(["mean_tracking_error", float(np.mean(errs))])
            for name in TERM_NAMES:
                if name in frames[0].get("reward", {}):
                    w.writerow([f"mean_{name}",
                                float(np.mean([f["reward"][name] for f in frames]))])
    written.append(summary)
    return written
