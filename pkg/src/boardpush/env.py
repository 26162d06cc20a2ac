"""RL environments: the skateboard task (single and batched) and the toy
deck-only velocity-matching task used for training smoke tests.

The policy commands 12 joint position targets at 50 Hz; each control step
runs 10 physics substeps of 2 ms, advances the gait clock, evaluates the
reward breakdown and checks termination. Batched environments step
contiguous index slices on a thread pool; all per-env randomness comes from
per-env PCG32 streams so results are bit-identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from boardpush import _envkern as EK
from boardpush import rewards as R
from boardpush.dynamics import ContactMaterial, SimState, World
from boardpush.gait import GaitClock, GaitSchedule
from boardpush.model import ModelParams


class SIG:
    """Column indices of the kernel signal rows."""
    v_deck_x = EK.SIG_V_DECK_X
    v_deck_y = EK.SIG_V_DECK_Y
    w_deck_z = EK.SIG_W_DECK_Z
    w_deck_x = EK.SIG_W_DECK_X
    w_deck_y = EK.SIG_W_DECK_Y
    v_right_x = EK.SIG_V_RIGHT_X
    v_right_y = EK.SIG_V_RIGHT_Y
    v_right_z = EK.SIG_V_RIGHT_Z
    w_right_x = EK.SIG_W_RIGHT_X
    w_right_y = EK.SIG_W_RIGHT_Y
    v_com_x = EK.SIG_V_COM_X
    v_com_y = EK.SIG_V_COM_Y
    w_base_z = EK.SIG_W_BASE_Z
    f_left = EK.SIG_F_LEFT
    f_right = EK.SIG_F_RIGHT
    f_right_deck = EK.SIG_F_RIGHT_DECK
    speed_left = EK.SIG_SPEED_LEFT
    speed_right = EK.SIG_SPEED_RIGHT
    phase = EK.SIG_PHASE


OBS_DIM = EK.OBS_DIM
ACT_DIM = 12

# Observation layout (fixed; golden-tested): joint pos 12, joint vel 12,
# gravity direction in base frame 3, base angular vel 3, base linear vel 3,
# command 3, clock sin/cos 2, deck position in base frame 3, deck linear
# vel in base frame 3, deck angular vel in base frame 3.
OBS_SLICES = {
    "joint_pos": slice(0, 12),
    "joint_vel": slice(12, 24),
    "gravity_dir": slice(24, 27),
    "base_ang_vel": slice(27, 30),
    "base_lin_vel": slice(30, 33),
    "command": slice(33, 36),
    "clock": slice(36, 38),
    "deck_pos": slice(38, 41),
    "deck_lin_vel": slice(41, 44),
    "deck_ang_vel": slice(44, 47),
}

TERM_REASONS = {
    EK.TERM_NONE: None,
    EK.TERM_FELL: "fell",
    EK.TERM_TILTED: "tilted",
    EK.TERM_BOARD_LOST: "board_lost",
    EK.TERM_DIVERGED: "diverged",
    EK.TERM_MAX_STEPS: "max_steps",
}


@dataclass
class EpisodeConfig:
    max_steps: int = 1000
    min_pelvis_z: float = 0.6
    max_tilt: float = 0.8
    board_lost_dist: float = 0.3
    noise_joint: float = 0.03      # rad, uniform half-range
    noise_base: float = 0.01       # m, uniform half-range
    dt: float = 0.002
    n_substeps: int = 10
    cmd_v_max: float = 1.0
    # per-leg joint order: hip yaw, hip roll, hip pitch, knee, ankle pitch/roll.
    # Gains sized so a crouched 80 kg stance sags well under the fall
    # threshold: knee gravity moments reach ~75 N*m.
    kp: tuple = (300.0, 300.0, 300.0, 300.0, 100.0, 100.0) * 2
    # critically-damped heuristic 2*sqrt(kp*I_eff), I_eff ~0.14 hips/knees,
    # ~0.01 ankles
    kd: tuple = (13.0, 13.0, 13.0, 13.0, 2.0, 2.0) * 2
    tau_max: tuple = (80.0, 80.0, 120.0, 120.0, 60.0, 60.0) * 2

    def validate(self) -> list:
        out = []
        for name in ("max_steps", "min_pelvis_z", "max_tilt", "board_lost_dist",
                     "dt", "cmd_v_max"):
            if not getattr(self, name) > 0:
                out.append(f"env.{name}: must be > 0")
        if not (0 < self.dt <= 0.01):
            out.append("env.dt: must be in (0, 0.01]")
        if self.n_substeps < 1:
            out.append("env.n_substeps: must be >= 1")
        for name in ("noise_joint", "noise_base"):
            if getattr(self, name) < 0:
                out.append(f"env.{name}: must be >= 0")
        for name in ("kp", "kd", "tau_max"):
            vals = getattr(self, name)
            if len(vals) != 12:
                out.append(f"env.{name}: needs 12 entries")
            elif any(v <= 0 for v in vals):
                out.append(f"env.{name}: entries must be > 0")
        return out

    @property
    def ctrl_dt(self) -> float:
        return self.dt * self.n_substeps


def nominal_pose(params: ModelParams, deck_top_z: float) -> np.ndarray:
    """Initial configuration: left foot flat on the ground, right foot flat
    on the deck, both ankles under their hips, torso upright."""
    r = params.robot
    L = r.thigh_len + r.shank_len
    # left knee bend sets the pelvis height; right leg follows the deck
    knee_l = 0.56
    h = r.ankle_height + L * np.cos(knee_l / 2)
    q = np.zeros(19)
    q[2] = h
    q[3] = 1.0

    def leg(drop):
        d = h - drop - r.ankle_height
        c = d / L
        if not (0.2 < c < 1.0):
            raise ValueError("nominal pose infeasible: leg span vs deck height")
        knee = 2.0 * np.arccos(c)
        return np.array([0.0, 0.0, -knee / 2, knee, -knee / 2, 0.0])

    q[7:13] = leg(0.0)          # left
    q[13:19] = leg(deck_top_z)  # right
    return q


def _joint_limit_arrays(params: ModelParams):
    lo = np.empty(12)
    hi = np.empty(12)
    order = ("hip_yaw", "hip_roll", "hip_pitch", "knee", "ankle_pitch", "ankle_roll")
    for leg in range(2):
        for j, name in enumerate(order):
            lo[leg * 6 + j], hi[leg * 6 + j] = params.robot.joint_limits[name]
    return lo, hi


def _n_workers(requested: int | None) -> int:
    cap = os.environ.get("BOARDPUSH_THREADS")
    n = requested if requested else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


class BatchEnv:
    """n_envs independent skateboard environments stepped as slices on a
    thread pool. State lives in struct-of-arrays form; the reward breakdown
    is evaluated vectorized from the kernel's per-step body signals."""

    def __init__(self, n_envs: int, params: ModelParams | None = None,
                 episode: EpisodeConfig | None = None,
                 schedule: GaitSchedule | None = None,
                 reward_cfg: R.RewardConfig | None = None,
                 mat: ContactMaterial | None = None,
                 seed: int = 0, n_workers: int | None = None):
        self.n_envs = n_envs
        self.params = params or ModelParams()
        self.episode = episode or EpisodeConfig()
        self.schedule = schedule or GaitSchedule()
        self.reward_cfg = reward_cfg or R.RewardConfig()
        self.world = World(self.params, mat or ContactMaterial())
        self.seed = seed

        act_lo, act_hi = _joint_limit_arrays(self.params)
        self.act_lo, self.act_hi = act_lo, act_hi
        q_nom = nominal_pose(self.params, self.world.deck_top_z)
        self.q_nominal = q_nom
        rt = self.world.robot_tree
        self.envp = EK.EnvP(
            kp=np.asarray(self.episode.kp, dtype=float),
            kd=np.asarray(self.episode.kd, dtype=float),
            tau_max=np.asarray(self.episode.tau_max, dtype=float),
            act_lo=act_lo, act_hi=act_hi, q_nominal=q_nom,
            deck_center_z=float(self.world.nominal_board_q()[2]),
            deck_top_z=self.world.deck_top_z,
            noise_joint=self.episode.noise_joint,
            noise_base=self.episode.noise_base,
            min_pelvis_z=self.episode.min_pelvis_z,
            max_tilt=self.episode.max_tilt,
            board_lost_dist=self.episode.board_lost_dist,
            dt=self.episode.dt, n_sub=self.episode.n_substeps,
            max_steps=self.episode.max_steps,
            t_double=self.schedule.t_double, cycle=self.schedule.cycle,
            smooth_w=self.schedule.smooth_width,
            rfoot=rt.body_index("r_foot"), lfoot=rt.body_index("l_foot"),
            sole_center=np.array([self.params.robot.foot_forward, 0.0,
                                  -self.params.robot.ankle_height]),
            cmd_hi=self.episode.cmd_v_max)

        n = n_envs
        self.q_r = np.zeros((n, 19))
        self.v_r = np.zeros((n, 18))
        self.q_b = np.zeros((n, 9))
        self.v_b = np.zeros((n, 8))
        self.phase = np.zeros(n)
        self.cmd = np.zeros((n, 3))
        self.prev_action = np.zeros((n, 12))
        self.stepc = np.zeros(n, dtype=np.int64)
        self.rng = np.zeros((n, 2), dtype=np.uint64)
        self.obs = np.zeros((n, OBS_DIM))
        self.signals = np.zeros((n, EK.NSIG))
        self.tau_last = np.zeros((n, 12))
        self.done = np.zeros(n, dtype=np.uint8)
        self.term = np.zeros(n, dtype=np.uint8)

        self.n_workers = _n_workers(n_workers)
        self._pool = None
        self._scratch = [self._alloc_scratch() for _ in range(self.n_workers)]
        EK.seed_streams(self.rng, seed)
        self.reset_all()

    def _alloc_scratch(self):
        rt, bt = self.world.robot_tree, self.world.board_tree
        return EK.alloc_env_scratch(len(rt.bodies), rt.nv, rt.nq,
                                    len(bt.bodies), bt.nv, bt.nq)

    def _slices(self):
        n, w = self.n_envs, self.n_workers
        w = min(w, n)
        bounds = np.linspace(0, n, w + 1).astype(int)
        return [(int(bounds[i]), int(bounds[i + 1])) for i in range(w)
                if bounds[i] < bounds[i + 1]]

    def reset_all(self):
        t = self.world.tables

        def do(scr, lo, hi):
            EK.reset_slice(t, self.envp, scr, self.q_r, self.v_r, self.q_b,
                           self.v_b, self.phase, self.cmd, self.prev_action,
                           self.stepc, self.rng, self.obs, lo, hi)
        self._run_simple(do)
        return self.obs

    def _run_simple(self, do):
        slices = self._slices()
        if len(slices) == 1:
            do(self._scratch[0], slices[0][0], slices[0][1])
            return
        if self._pool is None:
            self._pool = ThreadPoolExecutor(self.n_workers)
        futs = [self._pool.submit(do, self._scratch[i], lo, hi)
                for i, (lo, hi) in enumerate(slices)]
        for f in futs:
            f.result()

    def step_batch(self, actions: np.ndarray):
        """Advance every environment one control step.

        Returns (obs, rewards, dones, terms, reward_terms). Rewards are
        evaluated from pre-reset signals, so terminal-step rewards reflect
        the state that ended the episode.
        """
        actions = np.ascontiguousarray(actions, dtype=float)
        cmd_before = self.cmd.copy()
        prev_before = self.prev_action.copy()
        act_clamped = np.clip(actions, self.act_lo, self.act_hi)
        t = self.world.tables

        def do(scr, lo, hi):
            EK.step_slice(t, self.envp, scr, self.q_r, self.v_r, self.q_b,
                          self.v_b, self.phase, self.cmd, self.prev_action,
                          self.stepc, self.rng, actions, self.signals,
                          self.tau_last, self.obs, self.done, self.term,
                          lo, hi)
        self._run_simple(do)

        terms, totals = R.batch_rewards(
            cmd_before, self.signals, prev_before, act_clamped,
            self.tau_last, self.schedule, self.reward_cfg)
        return self.obs, totals, self.done.copy(), self.term.copy(), terms

    def state_of(self, k: int) -> SimState:
        return SimState(self.q_r[k].copy(), self.v_r[k].copy(),
                        self.q_b[k].copy(), self.v_b[k].copy(),
                        t=float(self.stepc[k]) * self.episode.ctrl_dt)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    # interface bits the learner uses
    @property
    def obs_dim(self):
        return OBS_DIM

    @property
    def act_dim(self):
        return ACT_DIM

    @property
    def act_center(self):
        return 0.5 * (self.act_lo + self.act_hi)

    @property
    def act_half(self):
        return 0.5 * (self.act_hi - self.act_lo)

    @property
    def task(self):
        return "skateboard"


class Env:
    """Single skateboard environment: a BatchEnv of size one with a scalar
    step/reset surface and the full reward breakdown in `info`."""

    def __init__(self, seed: int = 0, **kwargs):
        kwargs.setdefault("n_workers", 1)
        self.batch = BatchEnv(1, seed=seed, **kwargs)

    def reset(self, seed: int | None = None):
        """Returns (SimState, GaitClock, Command, Observation)."""
        if seed is not None:
            EK.seed_streams(self.batch.rng, seed)
        self.batch.reset_all()
        b = self.batch
        return (b.state_of(0), self.clock, self.command, b.obs[0].copy())

    @property
    def clock(self) -> GaitClock:
        return GaitClock(schedule=self.batch.schedule,
                         phase_time=float(self.batch.phase[0]))

    @property
    def command(self) -> R.Command:
        c = self.batch.cmd[0]
        return R.Command(v_x=float(c[0]), v_y=float(c[1]), yaw_rate=float(c[2]))

    @property
    def state(self) -> SimState:
        return self.batch.state_of(0)

    def close(self):
        self.batch.close()

    def step(self, action):
        action = np.asarray(action, dtype=float)
        if action.shape != (12,) or not np.all(np.isfinite(action)):
            raise ValueError("action must be a finite 12-vector")
        obs, totals, dones, term_codes, reward_terms = \
            self.batch.step_batch(action[None, :])
        breakdown = R.RewardBreakdown(
            terms={k: float(v[0]) for k, v in reward_terms.items()},
            total=float(totals[0]))
        reason = TERM_REASONS[int(term_codes[0])]
        info = {
            "breakdown": breakdown,
            "termination": reason if reason != "max_steps" else None,
            "truncated": reason == "max_steps",
            "signals": self.batch.signals[0].copy(),
            "tau": self.batch.tau_last[0].copy(),
        }
        return obs[0].copy(), float(totals[0]), bool(dones[0]), info


def sample_command(rng: np.random.Generator, v_max: float = 1.0) -> R.Command:
    """Forward command only: v_x ~ U[0, v_max], zero lateral and yaw rate."""
    return R.Command(v_x=float(rng.uniform(0.0, v_max)), v_y=0.0, yaw_rate=0.0)


def apply_action(action, state: SimState, cfg: EpisodeConfig,
                 params: ModelParams | None = None) -> np.ndarray:
    """PD torques for position-target actions, clamped per joint."""
    action = np.asarray(action, dtype=float)
    if not np.all(np.isfinite(action)):
        raise ValueError("action must be finite")
    params = params or ModelParams()
    lo, hi = _joint_limit_arrays(params)
    a = np.clip(action, lo, hi)
    kp = np.asarray(cfg.kp)
    kd = np.asarray(cfg.kd)
    tmax = np.asarray(cfg.tau_max)
    tau = kp * (a - state.q_robot[7:19]) - kd * state.v_robot[6:18]
    return np.clip(tau, -tmax, tmax)


def terminated(state: SimState, cfg: EpisodeConfig,
               params: ModelParams | None = None) -> str | None:
    """First matching failure reason, or None."""
    params = params or ModelParams()
    if not all(np.all(np.isfinite(a)) for a in
               (state.q_robot, state.v_robot, state.q_board, state.v_board)):
        return "diverged"
    if state.q_robot[2] < cfg.min_pelvis_z:
        return "fell"
    qw, qx, qy, qz = state.q_robot[3:7]
    r22 = qw * qw - qx * qx - qy * qy + qz * qz
    if np.arccos(np.clip(r22, -1.0, 1.0)) > cfg.max_tilt:
        return "tilted"
    # right sole center vs deck center, horizontal
    w = World(params, ContactMaterial())
    from boardpush.dynamics import _kernels as K
    K._fk(w.tables.robot, state.q_robot, w.rs)
    rf = w.robot_tree.body_index("r_foot")
    sole = np.array([params.robot.foot_forward, 0.0, -params.robot.ankle_height])
    p = w.rs.pw[rf] + w.rs.Rw[rf] @ sole
    if np.hypot(p[0] - state.q_board[0], p[1] - state.q_board[1]) > cfg.board_lost_dist:
        return "board_lost"
    return None


class ToyDeckEnv:
    """Deck-only velocity matching: one horizontal force on the deck, reward
    for tracking a commanded forward speed. Smoke-test task for the learner."""

    F_MAX = 20.0

    def __init__(self, n_envs: int, params: ModelParams | None = None,
                 seed: int = 0, sigma: float = 0.25, max_steps: int = 100,
                 n_workers: int | None = None):
        self.n_envs = n_envs
        self.params = params or ModelParams()
        self.world = World(self.params, ContactMaterial())
        self.sigma = sigma
        self.max_steps = max_steps
        ep = EpisodeConfig()
        self.envp = EK.EnvP(
            kp=np.zeros(12), kd=np.zeros(12), tau_max=np.zeros(12),
            act_lo=np.zeros(12), act_hi=np.zeros(12),
            q_nominal=np.zeros(19),
            deck_center_z=float(self.world.nominal_board_q()[2]),
            deck_top_z=self.world.deck_top_z,
            noise_joint=0.0, noise_base=0.0, min_pelvis_z=0.0, max_tilt=1e9,
            board_lost_dist=1e9, dt=ep.dt, n_sub=ep.n_substeps,
            max_steps=max_steps, t_double=0.75, cycle=1.75, smooth_w=0.05,
            rfoot=0, lfoot=0, sole_center=np.zeros(3), cmd_hi=1.0)
        n = n_envs
        self.q_r = np.zeros((n, 19))
        self.q_r[:, 3] = 1.0
        self.q_r[:, 2] = 50.0
        self.v_r = np.zeros((n, 18))
        self.q_b = np.zeros((n, 9))
        self.v_b = np.zeros((n, 8))
        self.cmd = np.zeros((n, 3))
        self.stepc = np.zeros(n, dtype=np.int64)
        self.rng = np.zeros((n, 2), dtype=np.uint64)
        self.obs = np.zeros((n, 4))
        self.done = np.zeros(n, dtype=np.uint8)
        self.n_workers = _n_workers(n_workers)
        self._pool = None
        rt, bt = self.world.robot_tree, self.world.board_tree
        self._scratch = [EK.alloc_env_scratch(len(rt.bodies), rt.nv, rt.nq,
                                              len(bt.bodies), bt.nv, bt.nq)
                         for _ in range(self.n_workers)]
        EK.seed_streams(self.rng, seed)
        self.reset_all()

    def _run_simple(self, do):
        n, w = self.n_envs, min(self.n_workers, self.n_envs)
        bounds = np.linspace(0, n, w + 1).astype(int)
        slices = [(int(bounds[i]), int(bounds[i + 1])) for i in range(w)
                  if bounds[i] < bounds[i + 1]]
        if len(slices) == 1:
            do(self._scratch[0], slices[0][0], slices[0][1])
            return
        if self._pool is None:
            self._pool = ThreadPoolExecutor(self.n_workers)
        futs = [self._pool.submit(do, self._scratch[i], lo, hi)
                for i, (lo, hi) in enumerate(slices)]
        for f in futs:
            f.result()

    def reset_all(self):
        t = self.world.tables

        def do(scr, lo, hi):
            EK.toy_reset_slice(t, self.envp, scr, self.q_r, self.v_r,
                               self.q_b, self.v_b, self.cmd, self.stepc,
                               self.rng, self.obs, lo, hi)
        self._run_simple(do)
        return self.obs

    def step_batch(self, actions):
        actions = np.ascontiguousarray(actions, dtype=float)
        rewards = np.zeros(self.n_envs)
        t = self.world.tables

        def do(scr, lo, hi):
            EK.toy_step_slice(t, self.envp, scr, self.q_r, self.v_r, self.q_b,
                              self.v_b, self.cmd, self.stepc, self.rng,
                              actions, self.F_MAX, self.sigma, self.max_steps,
                              rewards, self.obs, self.done, lo, hi)
        self._run_simple(do)
        return self.obs, rewards, self.done.copy(), self.done.copy(), {}

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    @property
    def obs_dim(self):
        return 4

    @property
    def act_dim(self):
        return 1

    @property
    def act_center(self):
        return np.zeros(1)

    @property
    def act_half(self):
        return np.full(1, self.F_MAX)

    @property
    def task(self):
        return "toy_deck"
