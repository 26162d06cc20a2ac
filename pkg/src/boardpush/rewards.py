"""Deck-task reward terms, the tracking/regularization base set, and the
weighted total.

The five deck terms:
  deck_lin_track   e^(-||v_cmd_xy - v_deck_xy||^2 / sigma)
  deck_ang_track   e^(-(w_cmd_z - w_deck_z)^2 / sigma)
  deck_foot_vel    ||v_right||^2 while the right foot touches the deck
  foot_slip        ||v_deck_xy - v_right_xy||^2      (negative weight)
  foot_rot         ||w_deck_xy - w_right_xy||^2      (negative weight)

Every term function also accepts equal-length numpy arrays, which is how
the batched environment evaluates whole rollouts at once; the scalar API
and the batch path share the same formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from boardpush.gait import GaitClock, expected_contact_value


@dataclass(frozen=True)
class Command:
    """Commanded planar velocity; this task is forward-only."""

    v_x: float
    v_y: float = 0.0
    yaw_rate: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.v_x <= 1.0):
            raise ValueError("v_x must be in [0, 1]")
        if self.v_y != 0.0 or self.yaw_rate != 0.0:
            raise ValueError("v_y and yaw_rate are fixed to 0 for this task")


@dataclass
class RewardConfig:
    sigma: float = 0.25
    w_deck_lin: float = 1.0
    w_deck_ang: float = 1.0
    w_deck_foot_vel: float = 0.5
    w_foot_slip: float = -1.0
    w_foot_rot: float = -1.0
    w_com_track: float = 1.0
    w_yaw_track: float = 0.5
    w_periodic_contact: float = 1.0
    w_action_rate: float = -0.01
    w_torque: float = -2e-5
    w_alive: float = 0.5
    f_min: float = 20.0        # N, loaded-foot threshold
    v_swing_max: float = 0.2   # m/s, at-rest swing-foot threshold

    def validate(self) -> list:
        out = []
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            out.append("reward.sigma: must be > 0")
        for f in fields(self):
            if not np.isfinite(getattr(self, f.name)):
                out.append(f"reward.{f.name}: must be finite")
        for name in ("w_foot_slip", "w_foot_rot", "w_action_rate", "w_torque"):
            if getattr(self, name) > 0:
                out.append(f"reward.{name}: penalty weight must be <= 0")
        return out


@dataclass
class BodySignals:
    """Per-step body quantities the reward terms consume (world frame)."""

    v_deck_xy: np.ndarray        # (2,)
    w_deck_z: float
    w_deck_xy: np.ndarray        # (2,)
    v_right: np.ndarray          # (3,) right foot
    w_right_xy: np.ndarray       # (2,)
    v_com_xy: np.ndarray         # (2,) robot CoM
    w_base_z: float
    f_left: float                # N, total left-foot normal force
    f_right: float
    f_right_deck: float          # N, right foot on deck only (gates r3)
    speed_left: float            # m/s, |v| of each foot
    speed_right: float

    @property
    def v_right_xy(self) -> np.ndarray:
        return self.v_right[:2]


@dataclass
class RewardBreakdown:
    terms: dict
    total: float


TERM_NAMES = [
    "deck_lin_track", "deck_ang_track", "deck_foot_vel", "foot_slip",
    "foot_rot", "com_track", "yaw_track", "periodic_contact", "action_rate",
    "torque", "alive",
]

_WEIGHT_OF = {
    "deck_lin_track": "w_deck_lin", "deck_ang_track": "w_deck_ang",
    "deck_foot_vel": "w_deck_foot_vel", "foot_slip": "w_foot_slip",
    "foot_rot": "w_foot_rot", "com_track": "w_com_track",
    "yaw_track": "w_yaw_track", "periodic_contact": "w_periodic_contact",
    "action_rate": "w_action_rate", "torque": "w_torque", "alive": "w_alive",
}


# ---------------------------------------------------------------------------
# Term formulas (scalar or batched along the leading axis)


def _track(err_sq, sigma):
    return np.exp(-err_sq / sigma)


def r1_deck_lin_track(cmd: Command, sig: BodySignals, sigma: float) -> float:
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    err = (cmd.v_x - sig.v_deck_xy[0]) ** 2 + (cmd.v_y - sig.v_deck_xy[1]) ** 2
    return float(_track(err, sigma))


def r2_deck_ang_track(cmd: Command, sig: BodySignals, sigma: float) -> float:
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    return float(_track((cmd.yaw_rate - sig.w_deck_z) ** 2, sigma))


def r3_deck_foot_world_vel(sig: BodySignals) -> float:
    """Squared world speed of the right foot; the weighted total gates this
    on actual deck contact (it rewards pumping while standing on the deck)."""
    v = sig.v_right
    return float(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)


def r4_foot_slip_penalty(sig: BodySignals) -> float:
    dx = sig.v_deck_xy[0] - sig.v_right[0]
    dy = sig.v_deck_xy[1] - sig.v_right[1]
    return float(dx * dx + dy * dy)


def r5_foot_rot_penalty(sig: BodySignals) -> float:
    dx = sig.w_deck_xy[0] - sig.w_right_xy[0]
    dy = sig.w_deck_xy[1] - sig.w_right_xy[1]
    return float(dx * dx + dy * dy)


def base_rewards(cmd: Command, sig: BodySignals, clock: GaitClock,
                 action_prev, action, tau, cfg: RewardConfig) -> dict:
    """Tracking/regularization terms inherited from the walking formulation."""
    s = clock.schedule
    return _base_terms(
        np.asarray([cmd.v_x]), np.asarray([cmd.v_y]), np.asarray([cmd.yaw_rate]),
        np.asarray([sig.v_com_xy[0]]), np.asarray([sig.v_com_xy[1]]),
        np.asarray([sig.w_base_z]),
        np.asarray([clock.phase_time]),
        np.asarray([sig.f_left]), np.asarray([sig.f_right]),
        np.asarray([sig.speed_left]), np.asarray([sig.speed_right]),
        np.asarray(action_prev, dtype=float)[None, :],
        np.asarray(action, dtype=float)[None, :],
        np.asarray(tau, dtype=float)[None, :],
        s.t_double, s.cycle, s.smooth_width, cfg, scalar=True)


def _base_terms(cvx, cvy, cwz, vcx, vcy, wbz, phase, f_l, f_r, sp_l, sp_r,
                a_prev, a, tau, t_double, cycle, smooth_w, cfg, scalar=False):
    com = _track((cvx - vcx) ** 2 + (cvy - vcy) ** 2, cfg.sigma)
    yawt = _track((cwz - wbz) ** 2, cfg.sigma)
    per = np.zeros_like(com)
    for exp_c, f, sp in ((expected_contact_value(phase, "left", t_double, cycle, smooth_w), f_l, sp_l),
                         (expected_contact_value(phase, "right", t_double, cycle, smooth_w), f_r, sp_r)):
        loaded = (f > cfg.f_min).astype(float)
        at_rest = (sp < cfg.v_swing_max).astype(float)
        per = per + exp_c * loaded + (1.0 - exp_c) * at_rest
    act_rate = np.sum((a - a_prev) ** 2, axis=-1)
    torque = np.sum(tau * tau, axis=-1)
    alive = np.ones_like(com)
    out = {"com_track": com, "yaw_track": yawt, "periodic_contact": per,
           "action_rate": act_rate, "torque": torque, "alive": alive}
    if scalar:
        out = {k: float(v[0]) for k, v in out.items()}
    return out


def total_reward(cmd: Command, sig: BodySignals, clock: GaitClock,
                 action_prev, action, tau, cfg: RewardConfig) -> RewardBreakdown:
    """Every term (unweighted) plus the weighted total."""
    terms = {
        "deck_lin_track": r1_deck_lin_track(cmd, sig, cfg.sigma),
        "deck_ang_track": r2_deck_ang_track(cmd, sig, cfg.sigma),
        "deck_foot_vel": r3_deck_foot_world_vel(sig) if sig.f_right_deck > 0.0 else 0.0,
        "foot_slip": r4_foot_slip_penalty(sig),
        "foot_rot": r5_foot_rot_penalty(sig),
    }
    terms.update(base_rewards(cmd, sig, clock, action_prev, action, tau, cfg))
    total = 0.0
    for name in TERM_NAMES:
        total += getattr(cfg, _WEIGHT_OF[name]) * terms[name]
    return RewardBreakdown(terms=terms, total=total)


def batch_rewards(cmd, signals, action_prev, action, tau, schedule, cfg):
    """Vectorized evaluation over N environments.

    cmd: (N,3); signals: (N, NSIG) kernel signal rows; action/tau: (N,12).
    Returns (terms dict of (N,) arrays, totals (N,)). Shares the formulas
    with the scalar API above so the audit identity holds exactly.
    """
    from boardpush.env import SIG  # local import to avoid a cycle

    v_dx, v_dy = signals[:, SIG.v_deck_x], signals[:, SIG.v_deck_y]
    terms = {
        "deck_lin_track": _track((cmd[:, 0] - v_dx) ** 2 + (cmd[:, 1] - v_dy) ** 2, cfg.sigma),
        "deck_ang_track": _track((cmd[:, 2] - signals[:, SIG.w_deck_z]) ** 2, cfg.sigma),
        "deck_foot_vel": np.where(
            signals[:, SIG.f_right_deck] > 0.0,
            signals[:, SIG.v_right_x] ** 2 + signals[:, SIG.v_right_y] ** 2
            + signals[:, SIG.v_right_z] ** 2, 0.0),
        "foot_slip": (v_dx - signals[:, SIG.v_right_x]) ** 2
        + (v_dy - signals[:, SIG.v_right_y]) ** 2,
        "foot_rot": (signals[:, SIG.w_deck_x] - signals[:, SIG.w_right_x]) ** 2
        + (signals[:, SIG.w_deck_y] - signals[:, SIG.w_right_y]) ** 2,
    }
    terms.update(_base_terms(
        cmd[:, 0], cmd[:, 1], cmd[:, 2],
        signals[:, SIG.v_com_x], signals[:, SIG.v_com_y],
        signals[:, SIG.w_base_z], signals[:, SIG.phase],
        signals[:, SIG.f_left], signals[:, SIG.f_right],
        signals[:, SIG.speed_left], signals[:, SIG.speed_right],
        action_prev, action, tau,
        schedule.t_double, schedule.cycle, schedule.smooth_width, cfg))
    totals = np.zeros(signals.shape[0])
    for name in TERM_NAMES:
        totals += getattr(cfg, _WEIGHT_OF[name]) * terms[name]
    return terms, totals
