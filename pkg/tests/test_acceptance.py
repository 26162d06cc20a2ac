"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Timing assertions measure steady-state behavior: the autouse fixture warms
up (JIT-compiles) every kernel first. Criterion 9 is the stretch target and
runs only when BOARDPUSH_RUN_STRETCH=1.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from boardpush import dynamics as dyn
from boardpush.dynamics import ContactMaterial, SimState, World
from boardpush.env import BatchEnv, ToyDeckEnv, nominal_pose
from boardpush.gait import GaitClock, GaitSchedule, advance, expected_contact
from boardpush.learn import (Adam, PolicyParams, TrainConfig, gae,
                             policy_eval, ppo_update, rollout, train)
from boardpush.model import ModelParams

CPU_BOUND = min(8, os.cpu_count() or 1)


def _make_calib_kernel():
    from numba import njit

    @njit(cache=True, nogil=True)
    def kern(buf, lo, hi, iters):
        for k in range(lo, hi):
            acc = 0.0
            x = 1.0 + 0.1 * k
            for _ in range(iters):
                x = 1.0 + (x * 0.99 + 0.02 / x) * 0.5
                acc += x
            buf[k, 0] = acc
    return kern


_calib_kernel = _make_calib_kernel()


def report(criterion, ok, detail):
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


@pytest.fixture(scope="module", autouse=True)
def warmup():
    # compile every kernel before any timed section
    env = BatchEnv(2, seed=0, n_workers=2)
    env.step_batch(np.tile(env.q_nominal[7:19], (2, 1)))
    env.close()
    toy = ToyDeckEnv(2, seed=0, n_workers=1)
    toy.step_batch(np.zeros((2, 1)))
    toy.close()
    w = World(ModelParams(), ContactMaterial())
    st = SimState(nominal_pose(w.params, w.deck_top_z), np.zeros(18),
                  w.nominal_board_q(), np.zeros(8))
    dyn.step(st, np.zeros(12), 0.002, world=w)
    dyn.mass_matrix(w.robot_tree, st.q_robot)
    dyn.bias_forces(w.robot_tree, st.q_robot, st.v_robot)
    yield


@pytest.fixture(scope="module")
def world():
    return World(ModelParams(), ContactMaterial())


def standing_state(world, x=10.0):
    q_r = nominal_pose(world.params, world.deck_top_z)
    q_r[0] = x
    return SimState(q_r, np.zeros(18), world.nominal_board_q(), np.zeros(8))


def hold_tau(world, st):
    q_nom = nominal_pose(world.params, world.deck_top_z)
    return np.clip(300.0 * (q_nom[7:19] - st.q_robot[7:19])
                   - 13.0 * st.v_robot[6:18], -120, 120)


# ---------------------------------------------------------------------------


def test_criterion_1_reward_formula_oracle():
    """r1-r5 match an independently coded direct evaluation to 1e-12."""
    from boardpush.rewards import (BodySignals, Command, r1_deck_lin_track,
                                   r2_deck_ang_track, r3_deck_foot_world_vel,
                                   r4_foot_slip_penalty, r5_foot_rot_penalty)

    rng = np.random.default_rng(12345)
    n = 10_000
    sigma = 0.25
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(n):
        vx = rng.uniform(0, 1)
        v_deck = rng.normal(0, 1, 2)
        w_deck_z = rng.normal()
        w_deck = rng.normal(0, 1, 2)
        v_right = rng.normal(0, 1, 3)
        w_right = rng.normal(0, 1, 2)
        sig = BodySignals(v_deck_xy=v_deck, w_deck_z=w_deck_z,
                          w_deck_xy=w_deck, v_right=v_right,
                          w_right_xy=w_right, v_com_xy=np.zeros(2),
                          w_base_z=0.0, f_left=0.0, f_right=0.0,
                          f_right_deck=1.0, speed_left=0.0, speed_right=0.0)
        cmd = Command(v_x=vx)
        # independent evaluation, plain math on the printed formulas
        o1 = math.exp(-((vx - v_deck[0]) ** 2 + (0.0 - v_deck[1]) ** 2) / sigma)
        o2 = math.exp(-((0.0 - w_deck_z) ** 2) / sigma)
        o3 = v_right[0] ** 2 + v_right[1] ** 2 + v_right[2] ** 2
        o4 = (v_deck[0] - v_right[0]) ** 2 + (v_deck[1] - v_right[1]) ** 2
        o5 = (w_deck[0] - w_right[0]) ** 2 + (w_deck[1] - w_right[1]) ** 2
        worst = max(
            worst,
            abs(r1_deck_lin_track(cmd, sig, sigma) - o1),
            abs(r2_deck_ang_track(cmd, sig, sigma) - o2),
            abs(r3_deck_foot_world_vel(sig) - o3),
            abs(r4_foot_slip_penalty(sig) - o4),
            abs(r5_foot_rot_penalty(sig) - o5))
    elapsed = time.perf_counter() - t0
    report("1 reward-formula oracle",
           worst < 1e-12 and elapsed < 1.0,
           f"max abs err {worst:.2e} over {n} draws in {elapsed:.2f}s")


def test_criterion_2_gait_schedule():
    """Indicator period 1.75 s; left 1 on double support, 0 on swing
    interior; right identically 1."""
    t0 = time.perf_counter()
    s = GaitSchedule()
    ok = s.cycle == 1.75
    w = s.smooth_width
    for phase in np.linspace(w, 0.75 - w, 200):
        ok &= expected_contact(GaitClock(phase_time=phase), "left") == 1.0
    for phase in np.linspace(0.75 + w, 1.75 - w, 200, endpoint=False):
        ok &= expected_contact(GaitClock(phase_time=phase), "left") == 0.0
    for phase in np.linspace(0, 1.7499, 500):
        ok &= expected_contact(GaitClock(phase_time=phase), "right") == 1.0
    # periodicity
    for phase in np.linspace(0, 1.75, 100, endpoint=False):
        a = expected_contact(GaitClock(phase_time=phase), "left")
        b = expected_contact(advance(GaitClock(phase_time=phase), 1.75), "left")
        ok &= abs(a - b) < 1e-12
    elapsed = time.perf_counter() - t0
    report("2 gait schedule", ok and elapsed < 1.0,
           f"period {s.cycle}s, property suite in {elapsed:.2f}s")


def test_criterion_3_dynamics_correctness(world):
    t0 = time.perf_counter()
    details = []

    # (a) momentum conservation, no gravity/contacts, 1000 steps
    zg = world.fork()
    zg.tables = zg.tables._replace(gravity=0.0)
    rng = np.random.default_rng(0)
    st = SimState(np.concatenate([[0, 0, 50], [1, 0, 0, 0], np.zeros(12)]),
                  rng.normal(0, 0.5, 18),
                  np.concatenate([[5, 0, 30], [1, 0, 0, 0], np.zeros(2)]),
                  rng.normal(0, 0.5, 8))
    h0r = dyn.momentum(world.robot_tree, st.q_robot, st.v_robot)
    h0b = dyn.momentum(world.board_tree, st.q_board, st.v_board)
    for _ in range(1000):
        st = dyn.step(st, np.zeros(12), 0.002, world=zg)
    rel_r = np.abs(dyn.momentum(world.robot_tree, st.q_robot, st.v_robot) - h0r).max() / np.abs(h0r).max()
    rel_b = np.abs(dyn.momentum(world.board_tree, st.q_board, st.v_board) - h0b).max() / np.abs(h0b).max()
    ok_a = rel_r < 1e-8 and rel_b < 1e-8
    details.append(f"momentum rel {max(rel_r, rel_b):.1e}")

    # (b) free-fall energy drift over 1 s
    st = SimState(np.concatenate([[0, 0, 50], [1, 0, 0, 0], np.zeros(12)]),
                  np.zeros(18),
                  np.concatenate([[0, 0, 30], [1, 0, 0, 0], np.zeros(2)]),
                  np.zeros(8))
    e0 = (dyn.energy(world.robot_tree, st.q_robot, st.v_robot)
          + dyn.energy(world.board_tree, st.q_board, st.v_board))
    for _ in range(500):
        st = dyn.step(st, np.zeros(12), 0.002, world=world)
    e1 = (dyn.energy(world.robot_tree, st.q_robot, st.v_robot)
          + dyn.energy(world.board_tree, st.q_board, st.v_board))
    drift = abs(e1 - e0) / abs(e0)
    ok_b = drift < 1e-3
    details.append(f"energy drift {drift:.1e}")

    # (c) static wheel penetration vs m g / (4 k_c)
    st = standing_state(world)
    st.q_board[2] += 0.005
    for _ in range(1500):
        st = dyn.step(st, hold_tau(world, st), 0.002, world=world)
    pens = [c.penetration for c in st.contact_cache if c.pair == "wheel_ground"]
    expect = world.board_tree.total_mass * 9.81 / (4 * world.mat.k_c)
    ratio = float(np.mean(pens)) / expect
    ok_c = len(pens) == 4 and abs(ratio - 1.0) < 0.05
    details.append(f"penetration ratio {ratio:.4f}")

    # (d) mass matrix vs impulse-response oracle (articulated-body route)
    from boardpush.dynamics import _kernels as K
    worst = 0.0
    for tree, tt, scr in ((world.robot_tree, world.tables.robot, world.rs),
                          (world.board_tree, world.tables.board, world.bs)):
        q = np.zeros(tree.nq)
        q[2] = 50.0
        quat = np.random.default_rng(1).normal(0, 1, 4)
        q[3:7] = quat / np.linalg.norm(quat)
        q[7:] = np.random.default_rng(2).normal(0, 0.5, tree.nq - 7)
        m = dyn.mass_matrix(tree, q)
        minv = np.zeros_like(m)
        dt = 0.005
        K._fk(tt, q, scr)
        for i in range(tree.nv):
            scr.fext[:] = 0.0
            tv = np.zeros(tree.nv)
            if i < 3:
                scr.fext[0, 3 + i] = 1.0 / dt
            elif i < 6:
                scr.fext[0, i - 3] = 1.0 / dt
            else:
                tv[i] = 1.0 / dt
            a = np.zeros(tree.nv)
            K._aba(tt, q, np.zeros(tree.nv), tv, scr, a)
            minv[:, i] = a * dt
        scr.fext[:] = 0.0
        m_oracle = np.linalg.inv(minv)
        worst = max(worst, np.abs(m - m_oracle).max() / max(1.0, np.abs(m_oracle).max()))
    ok_d = worst < 1e-6
    details.append(f"impulse-oracle err {worst:.1e}")

    elapsed = time.perf_counter() - t0
    report("3 dynamics correctness",
           ok_a and ok_b and ok_c and ok_d and elapsed < 30.0,
           "; ".join(details) + f"; {elapsed:.1f}s")


def test_criterion_4_skateboard_behavior(world):
    t0 = time.perf_counter()
    details = []

    st = standing_state(world)
    st.v_board[0] = 0.5
    for _ in range(1000):
        st = dyn.step(st, hold_tau(world, st), 0.002, world=world)
    fwd_keep = st.v_board[0] / 0.5
    ok_fwd = fwd_keep > 0.9
    details.append(f"forward retention {fwd_keep:.3f}")

    st = standing_state(world)
    st.v_board[1] = 0.5
    for _ in range(1000):
        st = dyn.step(st, hold_tau(world, st), 0.002, world=world)
    lat_keep = abs(st.v_board[1]) / 0.5
    ok_lat = lat_keep < 0.1
    details.append(f"lateral retention {lat_keep:.3f}")

    delta = dyn.steer_angle(0.1, math.pi / 4)
    ok_steer = abs(delta - 0.0708) <= 1e-4
    details.append(f"steer {delta:.5f} rad")

    # curved path under a held lean: yaw rate sign matches the lean side
    phi_t = 0.1
    st = standing_state(world)
    st.q_board[3:7] = (math.cos(phi_t / 2), math.sin(phi_t / 2), 0, 0)
    st.q_board[2] += 0.01
    st.v_board[0] = 0.5
    for _ in range(1000):
        q = st.q_board
        roll = math.atan2(2 * (q[3] * q[4] + q[5] * q[6]),
                          1 - 2 * (q[4] ** 2 + q[5] ** 2))
        fwd = np.array([1 - 2 * (q[5] ** 2 + q[6] ** 2),
                        2 * (q[4] * q[5] + q[3] * q[6]),
                        2 * (q[4] * q[6] - q[3] * q[5])])
        qw = np.zeros(6)
        qw[3:6] = (250.0 * (phi_t - roll) - 3.0 * st.v_board[3]) * fwd
        st = dyn.step(st, hold_tau(world, st), 0.002, world=world,
                      deck_wrench=qw)
    q = st.q_board
    yaw = math.atan2(2 * (q[3] * q[6] + q[4] * q[5]),
                     1 - 2 * (q[5] ** 2 + q[6] ** 2))
    # positive roll = right edge down: the board must turn clockwise
    ok_carve = yaw < -0.05 and st.q_board[1] < 0.0
    details.append(f"carve yaw {yaw:.3f}")

    elapsed = time.perf_counter() - t0
    report("4 skateboard behavior",
           ok_fwd and ok_lat and ok_steer and ok_carve and elapsed < 10.0,
           "; ".join(details) + f"; {elapsed:.1f}s")


def test_criterion_5_ppo_machinery():
    t0 = time.perf_counter()
    details = []

    # GAE vs brute force
    rng = np.random.default_rng(3)
    t_max, n = 16, 4
    gamma, lam = 0.99, 0.95
    r = rng.normal(size=(t_max, n))
    v = rng.normal(size=(t_max, n))
    d = (rng.random((t_max, n)) < 0.2).astype(float)
    boot = rng.normal(size=n)
    adv, _ = gae(r, v, d, boot, gamma, lam)
    worst_gae = 0.0
    for t in range(t_max):
        for k in range(n):
            acc, fac = 0.0, 1.0
            for j in range(t, t_max):
                nxt = boot[k] if j == t_max - 1 else v[j + 1, k]
                delta = r[j, k] + gamma * nxt * (1 - d[j, k]) - v[j, k]
                acc += fac * delta
                if d[j, k]:
                    break
                fac *= gamma * lam
            worst_gae = max(worst_gae, abs(adv[t, k] - acc))
    ok_gae = worst_gae < 1e-10
    details.append(f"GAE err {worst_gae:.1e}")

    # gradients vs central finite differences on 8 random draws
    from boardpush.learn.ppo import _policy_loss_grads
    worst_g = 0.0
    for draw in range(8):
        p = PolicyParams.create(7, 3, np.zeros(3), np.ones(3),
                                hidden=(12, 12), seed=draw)
        grng = np.random.default_rng(100 + draw)
        for w, b in p.actor + p.critic:
            w += 0.3 * grng.standard_normal(w.shape)
            b += 0.1 * grng.standard_normal(b.shape)
        p.log_std += 0.2 * grng.standard_normal(3)
        B = 12
        args = (grng.standard_normal((B, 7)), grng.standard_normal((B, 3)),
                0.1 * grng.standard_normal(B), grng.standard_normal(B),
                0.2, 0.5, 0.01, grng.standard_normal(B))
        _, _, grads = _policy_loss_grads(p, *args)
        gd = dict(grads)
        # h sized so central-difference roundoff (eps*|L|/2h ~ 5e-12) sits
        # far below the 1e-4 relative tolerance even for small entries
        h = 1e-5
        for name, arr in p.flat_arrays():
            flat = arr.reshape(-1)
            gflat = gd[name].reshape(-1)
            for i in grng.choice(flat.size, size=min(3, flat.size), replace=False):
                old = flat[i]
                flat[i] = old + h
                lp = _policy_loss_grads(p, *args)[0]
                flat[i] = old - h
                lm = _policy_loss_grads(p, *args)[0]
                flat[i] = old
                fd = (lp - lm) / (2 * h)
                worst_g = max(worst_g, abs(fd - gflat[i])
                              / max(abs(fd), abs(gflat[i]), 1e-4))
    ok_grad = worst_g < 1e-4
    details.append(f"grad rel err {worst_g:.1e}")

    # lr = 0 update is bit-exact
    from boardpush.learn.nets import gaussian_logp
    from boardpush.learn.ppo import TransitionBatch

    p = PolicyParams.create(6, 2, np.zeros(2), np.ones(2), hidden=(16, 16), seed=1)
    brng = np.random.default_rng(4)
    t_max, n_env = 8, 4
    obs = brng.standard_normal((t_max, n_env, 6))
    mean, std, val = policy_eval(p, obs.reshape(-1, 6))
    actions = (mean + std * brng.standard_normal(mean.shape)).reshape(t_max, n_env, 2)
    batch = TransitionBatch(
        obs=obs, actions=actions,
        logp=gaussian_logp(actions.reshape(-1, 2), mean, std).reshape(t_max, n_env),
        rewards=brng.standard_normal((t_max, n_env)),
        values=val.reshape(t_max, n_env),
        dones=np.zeros((t_max, n_env)), bootstrap=np.zeros(n_env))
    before = [(nm, a.copy()) for nm, a in p.flat_arrays()]
    cfg = TrainConfig(n_envs=4, horizon=8, minibatches=2, epochs=2, hidden=(16, 16))
    ppo_update(p, batch, cfg, Adam(p.flat_arrays()), 0.0, np.random.default_rng(5))
    ok_noop = all(np.array_equal(old, new) for (_, old), (_, new)
                  in zip(before, p.flat_arrays()))
    details.append(f"lr0 no-op {ok_noop}")

    elapsed = time.perf_counter() - t0
    report("5 PPO machinery",
           ok_gae and ok_grad and ok_noop and elapsed < 30.0,
           "; ".join(details) + f"; {elapsed:.1f}s")


def test_criterion_6_determinism(tmp_path):
    t0 = time.perf_counter()

    # rollout batches bit-identical across 1 vs 8 workers (full task)
    hashes = []
    for workers in (1, 8):
        envs = BatchEnv(8, seed=31, n_workers=workers)
        p = PolicyParams.create(envs.obs_dim, envs.act_dim, envs.act_center,
                                envs.act_half, hidden=(32, 32), seed=31)
        batch, _ = rollout(envs, p, 8, np.random.default_rng(7))
        hashes.append(batch.hash())
        envs.close()
    ok_roll = hashes[0] == hashes[1]

    # two 1000-step end-to-end training runs produce identical metrics
    def run(d):
        cfg = TrainConfig(task="skateboard", n_envs=8, total_steps=1000,
                          horizon=16, hidden=(32, 32), minibatches=2,
                          seed=17, n_workers=2)
        train(cfg, d, log=None)
        out = []
        for line in open(os.path.join(d, "metrics.jsonl")):
            rec = json.loads(line)
            rec.pop("perf", None)  # wall-clock throughput is not replayable
            out.append(json.dumps(rec, sort_keys=True))
        return out

    m1 = run(str(tmp_path / "a"))
    m2 = run(str(tmp_path / "b"))
    ok_train = m1 == m2 and len(m1) == 8

    elapsed = time.perf_counter() - t0
    report("6 determinism", ok_roll and ok_train and elapsed < 120.0,
           f"rollout hashes equal: {ok_roll}; metrics identical over "
           f"{len(m1)} updates: {ok_train}; {elapsed:.1f}s")


def test_criterion_7_smoke_training(tmp_path):
    t0 = time.perf_counter()
    cfg = TrainConfig(task="toy_deck", n_envs=64, total_steps=64 * 64 * 50,
                      horizon=64, hidden=(64, 64), minibatches=8, lr=1e-3,
                      seed=0, checkpoint_interval=100)
    train(cfg, str(tmp_path / "smoke"), log=None)
    lines = [json.loads(l) for l in open(tmp_path / "smoke" / "metrics.jsonl")]
    rets = [l["mean_return"] for l in lines if np.isfinite(l["mean_return"])]
    first, last = rets[0], rets[-1]
    elapsed = time.perf_counter() - t0
    report("7 smoke training",
           last >= 1.5 * first and elapsed < 300.0,
           f"return {first:.1f} -> {last:.1f} "
           f"({last / first:.2f}x) over 50 updates in {elapsed:.0f}s")


def test_criterion_8_throughput(world):
    from concurrent.futures import ThreadPoolExecutor

    from boardpush.dynamics import _kernels as K

    # single-core physics step rate on the contact-rich standing state
    st = standing_state(world, x=0.0)
    tau = hold_tau(world, st)
    q_r, v_r = st.q_robot.copy(), st.v_robot.copy()
    q_b, v_b = st.q_board.copy(), st.v_board.copy()
    dw = np.zeros(6)
    n = 20_000
    t0 = time.perf_counter()
    for _ in range(n):
        K._substep(world.tables, q_r, v_r, q_b, v_b, tau, dw, 0.002,
                   world.rs, world.bs, world.con, 1, world.foot_fn)
    rate = n / (time.perf_counter() - t0)
    ok_rate = rate >= 10_000

    # Worker-pool scaling on the rollout stepping path, normalized by what
    # this machine can actually parallelize: the same 8-way pool running a
    # pure nogil compute kernel calibrates the attainable speedup (8 on a
    # free 8-core box; less under core limits or cgroup cpu shares). The
    # rollout path must keep >= 70% of that, which fails if anything in it
    # serializes on the GIL or on shared state. All four quantities are
    # sampled interleaved (min over trials) so load fluctuations hit them
    # equally.
    envs1 = BatchEnv(256, seed=5, n_workers=1)
    envs8 = BatchEnv(256, seed=5, n_workers=8)
    act = np.tile(envs1.q_nominal[7:19], (256, 1))
    envs1.step_batch(act)
    envs8.step_batch(act)
    buf = np.zeros((8, 4))
    pool8 = ThreadPoolExecutor(8)
    spans = np.linspace(0, 8, 9).astype(int)

    def time_rollout(envs):
        t0 = time.perf_counter()
        for _ in range(4):
            envs.step_batch(act)
        return time.perf_counter() - t0

    def time_calib(workers):
        if workers == 1:
            t0 = time.perf_counter()
            _calib_kernel(buf, 0, 8, 200_000)
            return time.perf_counter() - t0
        t0 = time.perf_counter()
        futs = [pool8.submit(_calib_kernel, buf, int(s), int(e), 200_000)
                for s, e in zip(spans[:-1], spans[1:])]
        [f.result() for f in futs]
        return time.perf_counter() - t0

    time_calib(8)  # compile/warm
    t1 = t8 = c1 = c8 = 1e9
    for _ in range(8):
        t1 = min(t1, time_rollout(envs1))
        t8 = min(t8, time_rollout(envs8))
        c1 = min(c1, time_calib(1))
        c8 = min(c8, time_calib(8))
    envs1.close()
    envs8.close()
    pool8.shutdown()

    roll_speedup = t1 / t8
    attainable = min(c1 / c8, 8.0)
    efficiency = roll_speedup / attainable
    ok_eff = efficiency >= 0.7
    report("8 throughput",
           ok_rate and ok_eff,
           f"{rate:,.0f} physics steps/s/core; rollout speedup "
           f"{roll_speedup:.2f} vs attainable {attainable:.2f} "
           f"(machine: {CPU_BOUND} cores) -> efficiency {efficiency:.2f}")


@pytest.mark.skipif(os.environ.get("BOARDPUSH_RUN_STRETCH") != "1",
                    reason="stretch target: 1024-env 10M-step run is beyond "
                    "the desk-scale suite; set BOARDPUSH_RUN_STRETCH=1")
def test_criterion_9_stretch_tracking(tmp_path):
    from boardpush.evaluate import evaluate

    cfg = TrainConfig(task="skateboard", n_envs=1024, total_steps=10_000_000,
                      horizon=64, seed=0, checkpoint_interval=20)
    final = train(cfg, str(tmp_path / "stretch"))
    rep = evaluate(final, 100, 0.4, str(tmp_path / "stretch_eval"))
    report("9 stretch tracking",
           rep["mean_tracking_error"] < 0.15 and rep["phase_adherence"] > 0.7,
           json.dumps(rep))
