"""Environment-layer numba kernels: PD control loop, signal extraction,
observation building, termination, reset randomization and the per-env
RNG streams (PCG32). One kernel call advances a contiguous slice of
environments so slices can run on a thread pool without touching the GIL.
"""

import math
from collections import namedtuple

import numpy as np
from numba import njit

from boardpush.dynamics import _kernels as K

# Signal row layout (world frame unless noted)
SIG_V_DECK_X = 0
SIG_V_DECK_Y = 1
SIG_W_DECK_Z = 2
SIG_W_DECK_X = 3
SIG_W_DECK_Y = 4
SIG_V_RIGHT_X = 5
SIG_V_RIGHT_Y = 6
SIG_V_RIGHT_Z = 7
SIG_W_RIGHT_X = 8
SIG_W_RIGHT_Y = 9
SIG_V_COM_X = 10
SIG_V_COM_Y = 11
SIG_W_BASE_Z = 12
SIG_F_LEFT = 13
SIG_F_RIGHT = 14
SIG_F_RIGHT_DECK = 15
SIG_SPEED_LEFT = 16
SIG_SPEED_RIGHT = 17
SIG_PHASE = 18
NSIG = 19

OBS_DIM = 47

TERM_NONE = 0
TERM_FELL = 1
TERM_TILTED = 2
TERM_BOARD_LOST = 3
TERM_DIVERGED = 4
TERM_MAX_STEPS = 5

# Environment constants bundle
EnvP = namedtuple(
    "EnvP",
    "kp kd tau_max act_lo act_hi q_nominal deck_center_z deck_top_z "
    "noise_joint noise_base min_pelvis_z max_tilt board_lost_dist "
    "dt n_sub max_steps t_double cycle smooth_w "
    "rfoot lfoot sole_center cmd_hi")

# Per-worker scratch bundle
EnvScr = namedtuple("EnvScr", "rs bs con foot_fn qb_r vb_r qb_b vb_b act tau dw")


def alloc_env_scratch(nb_r, nv_r, nq_r, nb_b, nv_b, nq_b):
    return EnvScr(
        rs=K.alloc_tree_scratch(nb_r, nv_r),
        bs=K.alloc_tree_scratch(nb_b, nv_b),
        con=K.alloc_contact_scratch(),
        foot_fn=np.zeros(3),
        qb_r=np.zeros(nq_r), vb_r=np.zeros(nv_r),
        qb_b=np.zeros(nq_b), vb_b=np.zeros(nv_b),
        act=np.zeros(12), tau=np.zeros(12), dw=np.zeros(6))


# ---------------------------------------------------------------------------
# PCG32 per-environment streams


@njit(cache=True, nogil=True)
def _rng_u32(rng, k):
    s = rng[k, 0]
    rng[k, 0] = s * np.uint64(6364136223846793005) + rng[k, 1]
    xs = np.uint64(((s >> np.uint64(18)) ^ s) >> np.uint64(27))
    rot = np.uint64(s >> np.uint64(59))
    out = (xs >> rot) | (xs << ((np.uint64(0) - rot) & np.uint64(31)))
    return out & np.uint64(0xFFFFFFFF)


@njit(cache=True, nogil=True)
def _rng_uniform(rng, k):
    return float(_rng_u32(rng, k)) * (1.0 / 4294967296.0)


def seed_streams(rng, root_seed):
    """Seed per-env PCG32 streams from a root seed (splitmix64 spread)."""
    n = rng.shape[0]
    mask = (1 << 64) - 1

    def splitmix(x):
        x = (x + 0x9E3779B97F4A7C15) & mask
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        return (z ^ (z >> 31)) & mask, x

    x = int(root_seed) & mask
    for k in range(n):
        s0, x = splitmix(x)
        s1, x = splitmix(x)
        rng[k, 0] = np.uint64(s0)
        rng[k, 1] = np.uint64(s1 | 1)


# ---------------------------------------------------------------------------
# Observation, signals, termination


@njit(cache=True, nogil=True)
def _build_obs(world, envp, rs, bs, q_r, v_r, q_b, v_b, phase, cmd, obs):
    for j in range(12):
        obs[j] = q_r[7 + j]
        obs[12 + j] = v_r[6 + j]
    R0 = rs.Rw[0]
    obs[24] = -R0[2, 0]
    obs[25] = -R0[2, 1]
    obs[26] = -R0[2, 2]
    obs[27] = v_r[3]
    obs[28] = v_r[4]
    obs[29] = v_r[5]
    obs[30] = v_r[0]
    obs[31] = v_r[1]
    obs[32] = v_r[2]
    obs[33] = cmd[0]
    obs[34] = cmd[1]
    obs[35] = cmd[2]
    ang = 2.0 * math.pi * phase / envp.cycle
    obs[36] = math.sin(ang)
    obs[37] = math.cos(ang)
    dx = bs.pw[0, 0] - rs.pw[0, 0]
    dy = bs.pw[0, 1] - rs.pw[0, 1]
    dz = bs.pw[0, 2] - rs.pw[0, 2]
    obs[38] = R0[0, 0] * dx + R0[1, 0] * dy + R0[2, 0] * dz
    obs[39] = R0[0, 1] * dx + R0[1, 1] * dy + R0[2, 1] * dz
    obs[40] = R0[0, 2] * dx + R0[1, 2] * dy + R0[2, 2] * dz
    for c in range(3):
        obs[41 + c] = (R0[0, c] * bs.vow[0, 0] + R0[1, c] * bs.vow[0, 1]
                       + R0[2, c] * bs.vow[0, 2])
        obs[44 + c] = (R0[0, c] * bs.ww[0, 0] + R0[1, c] * bs.ww[0, 1]
                       + R0[2, c] * bs.ww[0, 2])


@njit(cache=True, nogil=True)
def _fill_signals(world, envp, rs, bs, v_r, phase, foot_fn, sig):
    rf = envp.rfoot
    lf = envp.lfoot
    sig[SIG_V_DECK_X] = bs.vow[0, 0]
    sig[SIG_V_DECK_Y] = bs.vow[0, 1]
    sig[SIG_W_DECK_Z] = bs.ww[0, 2]
    sig[SIG_W_DECK_X] = bs.ww[0, 0]
    sig[SIG_W_DECK_Y] = bs.ww[0, 1]
    sig[SIG_V_RIGHT_X] = rs.vow[rf, 0]
    sig[SIG_V_RIGHT_Y] = rs.vow[rf, 1]
    sig[SIG_V_RIGHT_Z] = rs.vow[rf, 2]
    sig[SIG_W_RIGHT_X] = rs.ww[rf, 0]
    sig[SIG_W_RIGHT_Y] = rs.ww[rf, 1]
    # robot CoM velocity
    mtot = 0.0
    sx = 0.0
    sy = 0.0
    nb = world.robot.parent.shape[0]
    for i in range(nb):
        m = world.robot.mass[i]
        mtot += m
        sx += m * rs.vcw[i, 0]
        sy += m * rs.vcw[i, 1]
    sig[SIG_V_COM_X] = sx / mtot
    sig[SIG_V_COM_Y] = sy / mtot
    sig[SIG_W_BASE_Z] = rs.ww[0, 2]
    sig[SIG_F_LEFT] = foot_fn[0]
    sig[SIG_F_RIGHT] = foot_fn[1]
    sig[SIG_F_RIGHT_DECK] = foot_fn[2]
    sig[SIG_SPEED_LEFT] = math.sqrt(rs.vow[lf, 0] ** 2 + rs.vow[lf, 1] ** 2
                                    + rs.vow[lf, 2] ** 2)
    sig[SIG_SPEED_RIGHT] = math.sqrt(rs.vow[rf, 0] ** 2 + rs.vow[rf, 1] ** 2
                                     + rs.vow[rf, 2] ** 2)
    sig[SIG_PHASE] = phase


@njit(cache=True, nogil=True)
def _sole_center_world(envp, rs, foot, out):
    R = rs.Rw[foot]
    for r in range(3):
        out[r] = (rs.pw[foot, r] + R[r, 0] * envp.sole_center[0]
                  + R[r, 1] * envp.sole_center[1] + R[r, 2] * envp.sole_center[2])


@njit(cache=True, nogil=True)
def _check_termination(world, envp, rs, bs, q_r, w3):
    if q_r[2] < envp.min_pelvis_z:
        return TERM_FELL
    c = rs.Rw[0, 2, 2]
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    if math.acos(c) > envp.max_tilt:
        return TERM_TILTED
    _sole_center_world(envp, rs, envp.rfoot, w3)
    dx = w3[0] - bs.pw[0, 0]
    dy = w3[1] - bs.pw[0, 1]
    if math.sqrt(dx * dx + dy * dy) > envp.board_lost_dist:
        return TERM_BOARD_LOST
    return TERM_NONE


# ---------------------------------------------------------------------------
# Reset


@njit(cache=True, nogil=True)
def _reset_env(world, envp, scr, q_r, v_r, q_b, v_b, phase, cmd, prev_act,
               stepc, rng, k, obs):
    rs, bs = scr.rs, scr.bs
    nq_r = world.robot.nq
    for j in range(nq_r):
        q_r[j] = envp.q_nominal[j]
    for j in range(world.robot.nv):
        v_r[j] = 0.0
    for j in range(12):
        u = 2.0 * _rng_uniform(rng, k) - 1.0
        a = envp.q_nominal[7 + j] + u * envp.noise_joint
        if a < envp.act_lo[j]:
            a = envp.act_lo[j]
        elif a > envp.act_hi[j]:
            a = envp.act_hi[j]
        q_r[7 + j] = a
    q_r[0] += (2.0 * _rng_uniform(rng, k) - 1.0) * envp.noise_base
    q_r[1] += (2.0 * _rng_uniform(rng, k) - 1.0) * envp.noise_base
    zn = (2.0 * _rng_uniform(rng, k) - 1.0) * envp.noise_base

    # seat: lowest sole point of each foot decides the base height
    K._fk(world.robot, q_r, rs)
    minz_l = 1e30
    minz_r = 1e30
    cxr = 0.0
    cyr = 0.0
    ns = world.sole_body.shape[0]
    for s in range(ns):
        b = world.sole_body[s]
        R = rs.Rw[b]
        lx, ly, lz = world.sole_pos[s, 0], world.sole_pos[s, 1], world.sole_pos[s, 2]
        px = rs.pw[b, 0] + R[0, 0] * lx + R[0, 1] * ly + R[0, 2] * lz
        py = rs.pw[b, 1] + R[1, 0] * lx + R[1, 1] * ly + R[1, 2] * lz
        pz = rs.pw[b, 2] + R[2, 0] * lx + R[2, 1] * ly + R[2, 2] * lz
        if world.sole_right[s] == 1:
            if pz < minz_r:
                minz_r = pz
            cxr += 0.25 * px
            cyr += 0.25 * py
        else:
            if pz < minz_l:
                minz_l = pz
    shift_l = -minz_l
    shift_r = envp.deck_top_z - minz_r
    shift = shift_l if shift_l > shift_r else shift_r
    q_r[2] += shift + zn

    for j in range(world.board.nq):
        q_b[j] = 0.0
    q_b[0] = cxr
    q_b[1] = cyr
    q_b[2] = envp.deck_center_z
    q_b[3] = 1.0
    for j in range(world.board.nv):
        v_b[j] = 0.0

    phase[k] = 0.0
    cmd[k, 0] = _rng_uniform(rng, k) * envp.cmd_hi
    cmd[k, 1] = 0.0
    cmd[k, 2] = 0.0
    for j in range(12):
        prev_act[k, j] = envp.q_nominal[7 + j]
    stepc[k] = 0

    K._fk(world.robot, q_r, rs)
    K._world_vels(world.robot, q_r, v_r, rs)
    K._fk(world.board, q_b, bs)
    K._world_vels(world.board, q_b, v_b, bs)
    _build_obs(world, envp, rs, bs, q_r, v_r, q_b, v_b, phase[k], cmd[k], obs)


# ---------------------------------------------------------------------------
# Control step (10 physics substeps + signals + termination + auto-reset)


@njit(cache=True, nogil=True)
def _control_step(world, envp, scr, q_r, v_r, q_b, v_b, phase, cmd, prev_act,
                  stepc, rng, k, action, sig, tau_out, obs):
    rs, bs = scr.rs, scr.bs
    for j in range(12):
        a = action[j]
        if a < envp.act_lo[j]:
            a = envp.act_lo[j]
        elif a > envp.act_hi[j]:
            a = envp.act_hi[j]
        scr.act[j] = a

    term = TERM_NONE
    for s in range(envp.n_sub):
        for j in range(world.robot.nq):
            scr.qb_r[j] = q_r[j]
        for j in range(world.robot.nv):
            scr.vb_r[j] = v_r[j]
        for j in range(world.board.nq):
            scr.qb_b[j] = q_b[j]
        for j in range(world.board.nv):
            scr.vb_b[j] = v_b[j]
        K._pd_torques(world, q_r, v_r, scr.act, envp.kp, envp.kd,
                      envp.tau_max, scr.tau)
        ok = K._substep(world, q_r, v_r, q_b, v_b, scr.tau, scr.dw, envp.dt,
                        rs, bs, scr.con, 1, scr.foot_fn)
        if not ok:
            for j in range(world.robot.nq):
                q_r[j] = scr.qb_r[j]
            for j in range(world.robot.nv):
                v_r[j] = scr.vb_r[j]
            for j in range(world.board.nq):
                q_b[j] = scr.qb_b[j]
            for j in range(world.board.nv):
                v_b[j] = scr.vb_b[j]
            term = TERM_DIVERGED
            break

    ph = phase[k] + envp.dt * envp.n_sub
    if ph >= envp.cycle:
        ph -= envp.cycle
    phase[k] = ph

    K._fk(world.robot, q_r, rs)
    K._world_vels(world.robot, q_r, v_r, rs)
    K._fk(world.board, q_b, bs)
    K._world_vels(world.board, q_b, v_b, bs)
    K._contacts(world, rs, bs, scr.con, 0, rs.w6b, bs.w6b, scr.foot_fn, envp.dt)
    _fill_signals(world, envp, rs, bs, v_r, ph, scr.foot_fn, sig)
    for j in range(12):
        tau_out[j] = scr.tau[j]

    if term == TERM_NONE:
        term = _check_termination(world, envp, rs, bs, q_r, rs.w6a[:3])
    stepc[k] += 1
    if term == TERM_NONE and stepc[k] >= envp.max_steps:
        term = TERM_MAX_STEPS
    done = term != TERM_NONE
    if done:
        _reset_env(world, envp, scr, q_r, v_r, q_b, v_b, phase, cmd, prev_act,
                   stepc, rng, k, obs)
    else:
        _build_obs(world, envp, rs, bs, q_r, v_r, q_b, v_b, ph, cmd[k], obs)
        for j in range(12):
            prev_act[k, j] = scr.act[j]
    return term


@njit(cache=True, nogil=True)
def step_slice(world, envp, scr, q_r, v_r, q_b, v_b, phase, cmd, prev_act,
               stepc, rng, actions, sig, tau_out, obs, done, term, lo, hi):
    for k in range(lo, hi):
        t = _control_step(world, envp, scr, q_r[k], v_r[k], q_b[k], v_b[k],
                          phase, cmd, prev_act, stepc, rng, k, actions[k],
                          sig[k], tau_out[k], obs[k])
        term[k] = t
        done[k] = 1 if t != TERM_NONE else 0


@njit(cache=True, nogil=True)
def reset_slice(world, envp, scr, q_r, v_r, q_b, v_b, phase, cmd, prev_act,
                stepc, rng, obs, lo, hi):
    for k in range(lo, hi):
        _reset_env(world, envp, scr, q_r[k], v_r[k], q_b[k], v_b[k], phase,
                   cmd, prev_act, stepc, rng, k, obs[k])


# ---------------------------------------------------------------------------
# Toy deck-only task: one actuated horizontal force, velocity matching


@njit(cache=True, nogil=True)
def _toy_reset(world, envp, scr, q_r, v_r, q_b, v_b, cmd, stepc, rng, k, obs):
    for j in range(world.board.nq):
        q_b[j] = 0.0
    q_b[2] = envp.deck_center_z
    q_b[3] = 1.0
    for j in range(world.board.nv):
        v_b[j] = 0.0
    cmd[k, 0] = _rng_uniform(rng, k) * envp.cmd_hi
    cmd[k, 1] = 0.0
    cmd[k, 2] = 0.0
    stepc[k] = 0
    obs[0] = 0.0
    obs[1] = 0.0
    obs[2] = 0.0
    obs[3] = cmd[k, 0]


@njit(cache=True, nogil=True)
def toy_step_slice(world, envp, scr, q_r, v_r, q_b, v_b, cmd, stepc, rng,
                   actions, f_max, sigma, max_steps, rewards, obs, done,
                   lo, hi):
    rs, bs = scr.rs, scr.bs
    for k in range(lo, hi):
        f = actions[k, 0]
        if f > f_max:
            f = f_max
        elif f < -f_max:
            f = -f_max
        scr.dw[0] = f
        ok = True
        for s in range(envp.n_sub):
            ok = K._substep(world, q_r[k], v_r[k], q_b[k], v_b[k], scr.tau,
                            scr.dw, envp.dt, rs, bs, scr.con, 0, scr.foot_fn)
            if not ok:
                break
        scr.dw[0] = 0.0
        K._fk(world.board, q_b[k], bs)
        K._world_vels(world.board, q_b[k], v_b[k], bs)
        err = cmd[k, 0] - bs.vow[0, 0]
        rewards[k] = math.exp(-(err * err) / sigma)
        obs[k, 0] = bs.vow[0, 0]
        obs[k, 1] = bs.vow[0, 1]
        obs[k, 2] = bs.ww[0, 2]
        obs[k, 3] = cmd[k, 0]
        stepc[k] += 1
        if (not ok) or stepc[k] >= max_steps:
            _toy_reset(world, envp, scr, q_r[k], v_r[k], q_b[k], v_b[k], cmd,
                       stepc, rng, k, obs[k])
            done[k] = 1
        else:
            done[k] = 0


@njit(cache=True, nogil=True)
def toy_reset_slice(world, envp, scr, q_r, v_r, q_b, v_b, cmd, stepc, rng,
                    obs, lo, hi):
    for k in range(lo, hi):
        _toy_reset(world, envp, scr, q_r[k], v_r[k], q_b[k], v_b[k], cmd,
                   stepc, rng, k, obs[k])
