import math

import numpy as np
import pytest

from boardpush.gait import GaitClock
from boardpush.rewards import (BodySignals, Command, RewardConfig,
                               base_rewards, r1_deck_lin_track,
                               r2_deck_ang_track, r3_deck_foot_world_vel,
                               r4_foot_slip_penalty, r5_foot_rot_penalty,
                               total_reward, TERM_NAMES, _WEIGHT_OF)


def make_signals(v_deck=(0.0, 0.0), w_deck_z=0.0, w_deck_xy=(0.0, 0.0),
                 v_right=(0.0, 0.0, 0.0), w_right_xy=(0.0, 0.0),
                 v_com=(0.0, 0.0), w_base_z=0.0, f_left=0.0, f_right=0.0,
                 f_right_deck=0.0, speed_left=0.0, speed_right=0.0):
    return BodySignals(
        v_deck_xy=np.asarray(v_deck, dtype=float), w_deck_z=w_deck_z,
        w_deck_xy=np.asarray(w_deck_xy, dtype=float),
        v_right=np.asarray(v_right, dtype=float),
        w_right_xy=np.asarray(w_right_xy, dtype=float),
        v_com_xy=np.asarray(v_com, dtype=float), w_base_z=w_base_z,
        f_left=f_left, f_right=f_right, f_right_deck=f_right_deck,
        speed_left=speed_left, speed_right=speed_right)


def test_r1_exact_values():
    cmd = Command(v_x=0.4)
    assert r1_deck_lin_track(cmd, make_signals(v_deck=(0.4, 0.0)), 0.25) == pytest.approx(1.0)
    assert r1_deck_lin_track(cmd, make_signals(), 0.25) == pytest.approx(math.exp(-0.64), abs=1e-12)
    assert r1_deck_lin_track(cmd, make_signals(v_deck=(0.4, 0.3)), 0.25) == pytest.approx(math.exp(-0.36), abs=1e-12)


def test_r2_exact_values():
    cmd = Command(v_x=0.4)
    assert r2_deck_ang_track(cmd, make_signals(), 0.25) == pytest.approx(1.0)
    assert r2_deck_ang_track(cmd, make_signals(w_deck_z=0.5), 0.25) == pytest.approx(math.exp(-1.0), abs=1e-12)
    plus = r2_deck_ang_track(cmd, make_signals(w_deck_z=0.5), 0.25)
    minus = r2_deck_ang_track(cmd, make_signals(w_deck_z=-0.5), 0.25)
    assert plus == minus


def test_r3_exact_values():
    assert r3_deck_foot_world_vel(make_signals()) == 0.0
    assert r3_deck_foot_world_vel(make_signals(v_right=(0.4, 0, 0))) == pytest.approx(0.16)
    assert r3_deck_foot_world_vel(make_signals(v_right=(0.3, 0.4, 0))) == pytest.approx(0.25)


def test_r4_exact_values():
    assert r4_foot_slip_penalty(make_signals(v_deck=(0.3, 0.1), v_right=(0.3, 0.1, 0.5))) == pytest.approx(0.0)
    assert r4_foot_slip_penalty(make_signals(v_deck=(0.4, 0.0), v_right=(0.1, 0, 0))) == pytest.approx(0.09)
    assert r4_foot_slip_penalty(make_signals(v_right=(0, 0.2, 0))) == pytest.approx(0.04)


def test_r5_exact_values():
    assert r5_foot_rot_penalty(make_signals(w_deck_xy=(0.3, -0.2), w_right_xy=(0.3, -0.2))) == 0.0
    assert r5_foot_rot_penalty(make_signals(w_deck_xy=(0.2, -0.1))) == pytest.approx(0.05)
    assert r5_foot_rot_penalty(make_signals(w_deck_xy=(0.3, 0.4))) == pytest.approx(0.25)


def test_r1_requires_positive_sigma():
    with pytest.raises(ValueError):
        r1_deck_lin_track(Command(v_x=0.4), make_signals(), 0.0)


def test_command_invariants():
    with pytest.raises(ValueError):
        Command(v_x=1.5)
    with pytest.raises(ValueError):
        Command(v_x=0.5, v_y=0.1)


def test_base_rewards_maximal_when_perfect():
    cfg = RewardConfig()
    cmd = Command(v_x=0.4)
    clock = GaitClock(phase_time=0.3)  # double support
    sig = make_signals(v_com=(0.4, 0.0), f_left=50.0, f_right=50.0,
                       speed_left=0.0, speed_right=0.0)
    a = np.zeros(12)
    terms = base_rewards(cmd, sig, clock, a, a, np.zeros(12), cfg)
    assert terms["com_track"] == pytest.approx(1.0)
    assert terms["yaw_track"] == pytest.approx(1.0)
    assert terms["periodic_contact"] == pytest.approx(2.0)
    assert terms["action_rate"] == 0.0
    assert terms["torque"] == 0.0
    assert terms["alive"] == 1.0


def test_base_rewards_left_loaded_in_single_support():
    # left foot loaded while it should swing: left contributes 0
    cfg = RewardConfig()
    cmd = Command(v_x=0.4)
    clock = GaitClock(phase_time=1.2)  # single support
    sig = make_signals(f_left=100.0, f_right=100.0, speed_left=1.0)
    terms = base_rewards(cmd, sig, clock, np.zeros(12), np.zeros(12),
                         np.zeros(12), cfg)
    assert terms["periodic_contact"] == pytest.approx(1.0)  # right only


def test_total_reward_zero_weights():
    cfg = RewardConfig(**{name: 0.0 for name in
                          ("w_deck_lin", "w_deck_ang", "w_deck_foot_vel",
                           "w_foot_slip", "w_foot_rot", "w_com_track",
                           "w_yaw_track", "w_periodic_contact",
                           "w_action_rate", "w_torque", "w_alive")})
    sig = make_signals(v_deck=(0.9, 0.4), w_deck_z=2.0, f_left=100)
    bd = total_reward(Command(v_x=0.2), sig, GaitClock(), np.zeros(12),
                      np.ones(12), np.ones(12), cfg)
    assert bd.total == 0.0


def test_total_reward_single_weight():
    cfg = RewardConfig(**{name: 0.0 for name in
                          ("w_deck_ang", "w_deck_foot_vel", "w_foot_slip",
                           "w_foot_rot", "w_com_track", "w_yaw_track",
                           "w_periodic_contact", "w_action_rate", "w_torque",
                           "w_alive")})
    sig = make_signals(v_deck=(0.4, 0.0))
    bd = total_reward(Command(v_x=0.4), sig, GaitClock(), np.zeros(12),
                      np.zeros(12), np.zeros(12), cfg)
    assert bd.total == pytest.approx(1.0)


def test_r3_gated_on_deck_contact():
    cfg = RewardConfig()
    sig_off = make_signals(v_right=(1.0, 0, 0), f_right_deck=0.0)
    sig_on = make_signals(v_right=(1.0, 0, 0), f_right_deck=10.0)
    a = np.zeros(12)
    off = total_reward(Command(v_x=0.4), sig_off, GaitClock(), a, a, a, cfg)
    on = total_reward(Command(v_x=0.4), sig_on, GaitClock(), a, a, a, cfg)
    assert off.terms["deck_foot_vel"] == 0.0
    assert on.terms["deck_foot_vel"] == pytest.approx(1.0)


def test_breakdown_total_is_weighted_sum():
    rng = np.random.default_rng(3)
    cfg = RewardConfig()
    for _ in range(100):
        sig = make_signals(v_deck=rng.normal(size=2), w_deck_z=rng.normal(),
                           w_deck_xy=rng.normal(size=2),
                           v_right=rng.normal(size=3),
                           w_right_xy=rng.normal(size=2),
                           v_com=rng.normal(size=2), w_base_z=rng.normal(),
                           f_left=rng.uniform(0, 100),
                           f_right=rng.uniform(0, 100),
                           f_right_deck=rng.uniform(0, 50),
                           speed_left=rng.uniform(0, 1),
                           speed_right=rng.uniform(0, 1))
        a_prev = rng.normal(size=12)
        a = rng.normal(size=12)
        tau = rng.normal(size=12)
        clock = GaitClock(phase_time=rng.uniform(0, 1.7499))
        bd = total_reward(Command(v_x=rng.uniform(0, 1)), sig, clock,
                          a_prev, a, tau, cfg)
        expect = sum(getattr(cfg, _WEIGHT_OF[n]) * bd.terms[n] for n in TERM_NAMES)
        assert bd.total == pytest.approx(expect, abs=1e-12)


def test_monotone_in_tracking_error():
    cfg = RewardConfig()
    cmd = Command(v_x=0.5)
    last = 2.0
    for err in np.linspace(0, 2.0, 21):
        val = r1_deck_lin_track(cmd, make_signals(v_deck=(0.5 + err, 0.0)), cfg.sigma)
        assert val < last or err == 0.0
        last = val


def test_rotation_invariance_of_relative_terms():
    # r3, r4, r5 depend only on norms of relative quantities: rotating all
    # planar vectors jointly about z leaves them unchanged
    rng = np.random.default_rng(7)
    for _ in range(20):
        th = rng.uniform(0, 2 * np.pi)
        R2 = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        v_deck = rng.normal(size=2)
        v_right = rng.normal(size=3)
        w_deck = rng.normal(size=2)
        w_right = rng.normal(size=2)
        sig = make_signals(v_deck=v_deck, v_right=v_right, w_deck_xy=w_deck,
                           w_right_xy=w_right)
        v_right_rot = np.concatenate([R2 @ v_right[:2], v_right[2:]])
        sig_rot = make_signals(v_deck=R2 @ v_deck, v_right=v_right_rot,
                               w_deck_xy=R2 @ w_deck, w_right_xy=R2 @ w_right)
        assert r3_deck_foot_world_vel(sig) == pytest.approx(r3_deck_foot_world_vel(sig_rot))
        assert r4_foot_slip_penalty(sig) == pytest.approx(r4_foot_slip_penalty(sig_rot))
        assert r5_foot_rot_penalty(sig) == pytest.approx(r5_foot_rot_penalty(sig_rot))


def test_penalty_weights_validated():
    cfg = RewardConfig(w_foot_slip=0.5)
    assert any("w_foot_slip" in d for d in cfg.validate())
