"""Numba kernels: articulated dynamics, compliant contacts, time stepping.

Everything here is allocation-free on the per-substep path (scratch buffers
are allocated once per slice call) and compiled with nogil so environment
slices parallelize across threads. Spatial vectors follow the body-frame
convention with angular components first; generalized base velocity is
[linear, angular] in the base body frame.

Forward dynamics uses the articulated-body algorithm; the mass-matrix and
bias-force operations use composite-rigid-body and recursive Newton-Euler
passes so the two routes can check each other. The integrator is
semi-implicit (velocity first, midpoint position update) with an exact
momentum correction of the base velocity from the integrated external
impulse, which keeps free-floating momentum conserved to round-off.
"""

import math
from collections import namedtuple

import numpy as np
from numba import njit

from boardpush.dynamics._scalars import steer_angle, truck_torque

_steer = njit(cache=True, nogil=True)(steer_angle)
_truck_tq = njit(cache=True, nogil=True)(truck_torque)

TreeScr = namedtuple(
    "TreeScr",
    "Rw pw ww vow vcw fext vsp asp csp IA pA U dd uu X T1 T2 L w6a w6b h6 vb vtmp")

ConScr = namedtuple(
    "ConScr",
    "pair bodyr bodyb point normal t1 t2 mu pen fn relv")

MAX_CONTACTS = 16

PAIR_FOOT_GROUND = 0
PAIR_FOOT_DECK = 1
PAIR_WHEEL_GROUND = 2


def alloc_tree_scratch(nb, nv):
    return TreeScr(
        Rw=np.zeros((nb, 3, 3)), pw=np.zeros((nb, 3)),
        ww=np.zeros((nb, 3)), vow=np.zeros((nb, 3)), vcw=np.zeros((nb, 3)),
        fext=np.zeros((nb, 6)), vsp=np.zeros((nb, 6)), asp=np.zeros((nb, 6)),
        csp=np.zeros((nb, 6)), IA=np.zeros((nb, 6, 6)), pA=np.zeros((nb, 6)),
        U=np.zeros((nb, 6)), dd=np.zeros(nb), uu=np.zeros(nb),
        X=np.zeros((6, 6)), T1=np.zeros((6, 6)), T2=np.zeros((6, 6)),
        L=np.zeros((6, 6)), w6a=np.zeros(6), w6b=np.zeros(6),
        h6=np.zeros(6), vb=np.zeros(nv), vtmp=np.zeros(nv))


def alloc_contact_scratch():
    return ConScr(
        pair=np.zeros(MAX_CONTACTS, dtype=np.int32),
        bodyr=np.zeros(MAX_CONTACTS, dtype=np.int32),
        bodyb=np.zeros(MAX_CONTACTS, dtype=np.int32),
        point=np.zeros((MAX_CONTACTS, 3)), normal=np.zeros((MAX_CONTACTS, 3)),
        t1=np.zeros((MAX_CONTACTS, 3)), t2=np.zeros((MAX_CONTACTS, 3)),
        mu=np.zeros((MAX_CONTACTS, 2)), pen=np.zeros(MAX_CONTACTS),
        fn=np.zeros(MAX_CONTACTS), relv=np.zeros((MAX_CONTACTS, 3)))


# ---------------------------------------------------------------------------
# Small math


@njit(cache=True, nogil=True)
def _quat_to_mat(qw, qx, qy, qz, R):
    ww, xx, yy, zz = qw * qw, qx * qx, qy * qy, qz * qz
    R[0, 0] = ww + xx - yy - zz
    R[0, 1] = 2.0 * (qx * qy - qw * qz)
    R[0, 2] = 2.0 * (qx * qz + qw * qy)
    R[1, 0] = 2.0 * (qx * qy + qw * qz)
    R[1, 1] = ww - xx + yy - zz
    R[1, 2] = 2.0 * (qy * qz - qw * qx)
    R[2, 0] = 2.0 * (qx * qz - qw * qy)
    R[2, 1] = 2.0 * (qy * qz + qw * qx)
    R[2, 2] = ww - xx - yy + zz


@njit(cache=True, nogil=True)
def _quat_integrate_body(q, wx, wy, wz, dt):
    """q <- q ⊗ exp(0.5*dt*w), w in body frame; renormalized."""
    ang = math.sqrt(wx * wx + wy * wy + wz * wz) * dt
    if ang < 1e-12:
        ew, ex, ey, ez = 1.0, 0.5 * dt * wx, 0.5 * dt * wy, 0.5 * dt * wz
    else:
        h = 0.5 * ang
        s = math.sin(h) / (ang / dt)
        ew, ex, ey, ez = math.cos(h), s * wx, s * wy, s * wz
    aw, ax, ay, az = q[0], q[1], q[2], q[3]
    q[0] = aw * ew - ax * ex - ay * ey - az * ez
    q[1] = aw * ex + ax * ew + ay * ez - az * ey
    q[2] = aw * ey - ax * ez + ay * ew + az * ex
    q[3] = aw * ez + ax * ey - ay * ex + az * ew
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    q[0] /= n
    q[1] /= n
    q[2] /= n
    q[3] /= n


@njit(cache=True, nogil=True)
def _rot_about_axis(ax, ay, az, ang, R):
    c = math.cos(ang)
    s = math.sin(ang)
    t = 1.0 - c
    R[0, 0] = c + ax * ax * t
    R[0, 1] = ax * ay * t - az * s
    R[0, 2] = ax * az * t + ay * s
    R[1, 0] = ax * ay * t + az * s
    R[1, 1] = c + ay * ay * t
    R[1, 2] = ay * az * t - ax * s
    R[2, 0] = ax * az * t - ay * s
    R[2, 1] = ay * az * t + ax * s
    R[2, 2] = c + az * az * t


@njit(cache=True, nogil=True)
def _chol_solve6(A, b, x, L):
    """x = A^-1 b for symmetric positive-definite 6x6 A; L is a 6x6 workspace."""
    for i in range(6):
        for j in range(i + 1):
            s = A[i, j]
            for p in range(j):
                s -= L[i, p] * L[j, p]
            if i == j:
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    for i in range(6):
        s = b[i]
        for p in range(i):
            s -= L[i, p] * x[p]
        x[i] = s / L[i, i]
    for i in range(5, -1, -1):
        s = x[i]
        for p in range(i + 1, 6):
            s -= L[p, i] * x[p]
        x[i] = s / L[i, i]


# ---------------------------------------------------------------------------
# Kinematics


@njit(cache=True, nogil=True)
def _fk(tree, q, scr):
    Rw, pw = scr.Rw, scr.pw
    nb = tree.parent.shape[0]
    _quat_to_mat(q[3], q[4], q[5], q[6], Rw[0])
    pw[0, 0] = q[0]
    pw[0, 1] = q[1]
    pw[0, 2] = q[2]
    for i in range(1, nb):
        p = tree.parent[i]
        ang = q[tree.q_adr[i]]
        _rot_about_axis(tree.axis[i, 0], tree.axis[i, 1], tree.axis[i, 2],
                        ang, scr.T1[:3, :3])
        for r in range(3):
            for c in range(3):
                s = 0.0
                for k in range(3):
                    s += Rw[p, r, k] * scr.T1[k, c]
                Rw[i, r, c] = s
        for r in range(3):
            pw[i, r] = (pw[p, r] + Rw[p, r, 0] * tree.origin[i, 0]
                        + Rw[p, r, 1] * tree.origin[i, 1]
                        + Rw[p, r, 2] * tree.origin[i, 2])


@njit(cache=True, nogil=True)
def _world_vels(tree, q, v, scr):
    """World angular velocity, body-origin velocity and CoM velocity."""
    Rw, pw, ww, vow, vcw = scr.Rw, scr.pw, scr.ww, scr.vow, scr.vcw
    nb = tree.parent.shape[0]
    for r in range(3):
        ww[0, r] = Rw[0, r, 0] * v[3] + Rw[0, r, 1] * v[4] + Rw[0, r, 2] * v[5]
        vow[0, r] = Rw[0, r, 0] * v[0] + Rw[0, r, 1] * v[1] + Rw[0, r, 2] * v[2]
    for i in range(1, nb):
        p = tree.parent[i]
        qd = v[tree.v_adr[i]]
        axw0 = Rw[i, 0, 0] * tree.axis[i, 0] + Rw[i, 0, 1] * tree.axis[i, 1] + Rw[i, 0, 2] * tree.axis[i, 2]
        axw1 = Rw[i, 1, 0] * tree.axis[i, 0] + Rw[i, 1, 1] * tree.axis[i, 1] + Rw[i, 1, 2] * tree.axis[i, 2]
        axw2 = Rw[i, 2, 0] * tree.axis[i, 0] + Rw[i, 2, 1] * tree.axis[i, 1] + Rw[i, 2, 2] * tree.axis[i, 2]
        dx = pw[i, 0] - pw[p, 0]
        dy = pw[i, 1] - pw[p, 1]
        dz = pw[i, 2] - pw[p, 2]
        vow[i, 0] = vow[p, 0] + ww[p, 1] * dz - ww[p, 2] * dy
        vow[i, 1] = vow[p, 1] + ww[p, 2] * dx - ww[p, 0] * dz
        vow[i, 2] = vow[p, 2] + ww[p, 0] * dy - ww[p, 1] * dx
        ww[i, 0] = ww[p, 0] + axw0 * qd
        ww[i, 1] = ww[p, 1] + axw1 * qd
        ww[i, 2] = ww[p, 2] + axw2 * qd
    for i in range(nb):
        cx = Rw[i, 0, 0] * tree.com[i, 0] + Rw[i, 0, 1] * tree.com[i, 1] + Rw[i, 0, 2] * tree.com[i, 2]
        cy = Rw[i, 1, 0] * tree.com[i, 0] + Rw[i, 1, 1] * tree.com[i, 1] + Rw[i, 1, 2] * tree.com[i, 2]
        cz = Rw[i, 2, 0] * tree.com[i, 0] + Rw[i, 2, 1] * tree.com[i, 1] + Rw[i, 2, 2] * tree.com[i, 2]
        vcw[i, 0] = vow[i, 0] + ww[i, 1] * cz - ww[i, 2] * cy
        vcw[i, 1] = vow[i, 1] + ww[i, 2] * cx - ww[i, 0] * cz
        vcw[i, 2] = vow[i, 2] + ww[i, 0] * cy - ww[i, 1] * cx


@njit(cache=True, nogil=True)
def _energy(tree, scr, gravity):
    """(kinetic, potential) after _fk/_world_vels. Independent of ABA/CRBA."""
    nb = tree.parent.shape[0]
    ke = 0.0
    pe = 0.0
    for i in range(nb):
        m = tree.mass[i]
        vx, vy, vz = scr.vcw[i, 0], scr.vcw[i, 1], scr.vcw[i, 2]
        wx, wy, wz = scr.ww[i, 0], scr.ww[i, 1], scr.ww[i, 2]
        ke += 0.5 * m * (vx * vx + vy * vy + vz * vz)
        # body-frame angular velocity for the rotational term
        bx = scr.Rw[i, 0, 0] * wx + scr.Rw[i, 1, 0] * wy + scr.Rw[i, 2, 0] * wz
        by = scr.Rw[i, 0, 1] * wx + scr.Rw[i, 1, 1] * wy + scr.Rw[i, 2, 1] * wz
        bz = scr.Rw[i, 0, 2] * wx + scr.Rw[i, 1, 2] * wy + scr.Rw[i, 2, 2] * wz
        ke += 0.5 * (bx * (tree.icom[i, 0, 0] * bx + tree.icom[i, 0, 1] * by + tree.icom[i, 0, 2] * bz)
                     + by * (tree.icom[i, 1, 0] * bx + tree.icom[i, 1, 1] * by + tree.icom[i, 1, 2] * bz)
                     + bz * (tree.icom[i, 2, 0] * bx + tree.icom[i, 2, 1] * by + tree.icom[i, 2, 2] * bz))
        zc = (scr.pw[i, 2] + scr.Rw[i, 2, 0] * tree.com[i, 0]
              + scr.Rw[i, 2, 1] * tree.com[i, 1] + scr.Rw[i, 2, 2] * tree.com[i, 2])
        pe += m * gravity * zc
    return ke, pe


@njit(cache=True, nogil=True)
def _momentum(tree, scr, h):
    """Spatial momentum about the world origin: h = (angular, linear)."""
    nb = tree.parent.shape[0]
    for r in range(6):
        h[r] = 0.0
    for i in range(nb):
        m = tree.mass[i]
        # world inertia about com: R Icom R^T w
        wx, wy, wz = scr.ww[i, 0], scr.ww[i, 1], scr.ww[i, 2]
        bx = scr.Rw[i, 0, 0] * wx + scr.Rw[i, 1, 0] * wy + scr.Rw[i, 2, 0] * wz
        by = scr.Rw[i, 0, 1] * wx + scr.Rw[i, 1, 1] * wy + scr.Rw[i, 2, 1] * wz
        bz = scr.Rw[i, 0, 2] * wx + scr.Rw[i, 1, 2] * wy + scr.Rw[i, 2, 2] * wz
        lx = tree.icom[i, 0, 0] * bx + tree.icom[i, 0, 1] * by + tree.icom[i, 0, 2] * bz
        ly = tree.icom[i, 1, 0] * bx + tree.icom[i, 1, 1] * by + tree.icom[i, 1, 2] * bz
        lz = tree.icom[i, 2, 0] * bx + tree.icom[i, 2, 1] * by + tree.icom[i, 2, 2] * bz
        hx = scr.Rw[i, 0, 0] * lx + scr.Rw[i, 0, 1] * ly + scr.Rw[i, 0, 2] * lz
        hy = scr.Rw[i, 1, 0] * lx + scr.Rw[i, 1, 1] * ly + scr.Rw[i, 1, 2] * lz
        hz = scr.Rw[i, 2, 0] * lx + scr.Rw[i, 2, 1] * ly + scr.Rw[i, 2, 2] * lz
        px = (scr.pw[i, 0] + scr.Rw[i, 0, 0] * tree.com[i, 0]
              + scr.Rw[i, 0, 1] * tree.com[i, 1] + scr.Rw[i, 0, 2] * tree.com[i, 2])
        py = (scr.pw[i, 1] + scr.Rw[i, 1, 0] * tree.com[i, 0]
              + scr.Rw[i, 1, 1] * tree.com[i, 1] + scr.Rw[i, 1, 2] * tree.com[i, 2])
        pz = (scr.pw[i, 2] + scr.Rw[i, 2, 0] * tree.com[i, 0]
              + scr.Rw[i, 2, 1] * tree.com[i, 1] + scr.Rw[i, 2, 2] * tree.com[i, 2])
        mvx = m * scr.vcw[i, 0]
        mvy = m * scr.vcw[i, 1]
        mvz = m * scr.vcw[i, 2]
        h[0] += hx + py * mvz - pz * mvy
        h[1] += hy + pz * mvx - px * mvz
        h[2] += hz + px * mvy - py * mvx
        h[3] += mvx
        h[4] += mvy
        h[5] += mvz


# ---------------------------------------------------------------------------
# Spatial transforms (6x6 helpers used by ABA/CRBA inward passes)


@njit(cache=True, nogil=True)
def _build_xup(tree, i, scr, X):
    """Motion transform parent -> body i: X = [[E,0],[-E r~, E]] with
    E = Rod(axis,q)^T (set by the caller into scr.T2[:3,:3]) and r the
    joint origin in the parent frame."""
    E = scr.T2[:3, :3]
    rx, ry, rz = tree.origin[i, 0], tree.origin[i, 1], tree.origin[i, 2]
    for r in range(6):
        for c in range(6):
            X[r, c] = 0.0
    for r in range(3):
        for c in range(3):
            X[r, c] = E[r, c]
            X[r + 3, c + 3] = E[r, c]
    # lower-left = -E * skew(r)
    for r in range(3):
        X[r + 3, 0] = -(E[r, 1] * rz - E[r, 2] * ry)
        X[r + 3, 1] = -(E[r, 2] * rx - E[r, 0] * rz)
        X[r + 3, 2] = -(E[r, 0] * ry - E[r, 1] * rx)


@njit(cache=True, nogil=True)
def _xform_motion(E, rx, ry, rz, w, out):
    """out = X * w for motion vector w (ang-first), X from (E, r)."""
    ax, ay, az = w[0], w[1], w[2]
    lx = w[3] - (ry * az - rz * ay)
    ly = w[4] - (rz * ax - rx * az)
    lz = w[5] - (rx * ay - ry * ax)
    out[0] = E[0, 0] * ax + E[0, 1] * ay + E[0, 2] * az
    out[1] = E[1, 0] * ax + E[1, 1] * ay + E[1, 2] * az
    out[2] = E[2, 0] * ax + E[2, 1] * ay + E[2, 2] * az
    out[3] = E[0, 0] * lx + E[0, 1] * ly + E[0, 2] * lz
    out[4] = E[1, 0] * lx + E[1, 1] * ly + E[1, 2] * lz
    out[5] = E[2, 0] * lx + E[2, 1] * ly + E[2, 2] * lz


@njit(cache=True, nogil=True)
def _xform_force_to_parent(E, rx, ry, rz, f, out):
    """out = X^T * f: force vector (ang-first) from child to parent coords."""
    nx = E[0, 0] * f[0] + E[1, 0] * f[1] + E[2, 0] * f[2]
    ny = E[0, 1] * f[0] + E[1, 1] * f[1] + E[2, 1] * f[2]
    nz = E[0, 2] * f[0] + E[1, 2] * f[1] + E[2, 2] * f[2]
    fx = E[0, 0] * f[3] + E[1, 0] * f[4] + E[2, 0] * f[5]
    fy = E[0, 1] * f[3] + E[1, 1] * f[4] + E[2, 1] * f[5]
    fz = E[0, 2] * f[3] + E[1, 2] * f[4] + E[2, 2] * f[5]
    out[0] = nx + ry * fz - rz * fy
    out[1] = ny + rz * fx - rx * fz
    out[2] = nz + rx * fy - ry * fx
    out[3] = fx
    out[4] = fy
    out[5] = fz


@njit(cache=True, nogil=True)
def _rel_rotation_T(tree, i, q, E):
    """E = Rod(axis_i, q_i)^T, the parent->child coordinate map."""
    _rot_about_axis(tree.axis[i, 0], tree.axis[i, 1], tree.axis[i, 2],
                    -q[tree.q_adr[i]], E)


@njit(cache=True, nogil=True)
def _spatial_cross_motion(v, m, out):
    """out = v x m for motion vectors (ang-first)."""
    out[0] = v[1] * m[2] - v[2] * m[1]
    out[1] = v[2] * m[0] - v[0] * m[2]
    out[2] = v[0] * m[1] - v[1] * m[0]
    out[3] = v[1] * m[5] - v[2] * m[4] + v[4] * m[2] - v[5] * m[1]
    out[4] = v[2] * m[3] - v[0] * m[5] + v[5] * m[0] - v[3] * m[2]
    out[5] = v[0] * m[4] - v[1] * m[3] + v[3] * m[1] - v[4] * m[0]


@njit(cache=True, nogil=True)
def _spatial_cross_force(v, f, out):
    """out = v x* f for a force vector f (ang-first)."""
    out[0] = v[1] * f[2] - v[2] * f[1] + v[4] * f[5] - v[5] * f[4]
    out[1] = v[2] * f[0] - v[0] * f[2] + v[5] * f[3] - v[3] * f[5]
    out[2] = v[0] * f[1] - v[1] * f[0] + v[3] * f[4] - v[4] * f[3]
    out[3] = v[1] * f[5] - v[2] * f[4]
    out[4] = v[2] * f[3] - v[0] * f[5]
    out[5] = v[0] * f[4] - v[1] * f[3]


@njit(cache=True, nogil=True)
def _imul6(I, w, out):
    for r in range(6):
        s = 0.0
        for c in range(6):
            s += I[r, c] * w[c]
        out[r] = s


# ---------------------------------------------------------------------------
# Body-frame spatial velocities (pass 1 shared by ABA / RNEA / CRBA)


@njit(cache=True, nogil=True)
def _spatial_vels(tree, q, v, scr):
    """Fill scr.vsp (body-frame spatial velocity) and scr.csp (velocity-
    product acceleration, zero joint accel)."""
    nb = tree.parent.shape[0]
    vsp, csp = scr.vsp, scr.csp
    vsp[0, 0] = v[3]
    vsp[0, 1] = v[4]
    vsp[0, 2] = v[5]
    vsp[0, 3] = v[0]
    vsp[0, 4] = v[1]
    vsp[0, 5] = v[2]
    for r in range(6):
        csp[0, r] = 0.0
    for i in range(1, nb):
        p = tree.parent[i]
        _rel_rotation_T(tree, i, q, scr.T2[:3, :3])
        _xform_motion(scr.T2[:3, :3], tree.origin[i, 0], tree.origin[i, 1],
                      tree.origin[i, 2], vsp[p], vsp[i])
        qd = v[tree.v_adr[i]]
        # vJ = (axis*qd, 0); c = v x vJ
        scr.w6a[0] = tree.axis[i, 0] * qd
        scr.w6a[1] = tree.axis[i, 1] * qd
        scr.w6a[2] = tree.axis[i, 2] * qd
        scr.w6a[3] = 0.0
        scr.w6a[4] = 0.0
        scr.w6a[5] = 0.0
        _spatial_cross_motion(vsp[i], scr.w6a, csp[i])
        for r in range(3):
            vsp[i, r] += scr.w6a[r]


# ---------------------------------------------------------------------------
# RNEA: bias forces (Coriolis + centrifugal + gravity), q̈ = 0


@njit(cache=True, nogil=True)
def _rnea_bias(tree, q, v, gravity, scr, bias):
    """bias such that M(q) a = tau + f_ext - bias. Gravity enters as an
    external CoM force on each body; scr must hold current _fk results."""
    nb = tree.parent.shape[0]
    _spatial_vels(tree, q, v, scr)
    # pass 1: accelerations (q̈=0) and per-body forces stored in pA
    for i in range(nb):
        if i == 0:
            for r in range(6):
                scr.asp[0, r] = 0.0
        else:
            p = tree.parent[i]
            _rel_rotation_T(tree, i, q, scr.T2[:3, :3])
            _xform_motion(scr.T2[:3, :3], tree.origin[i, 0], tree.origin[i, 1],
                          tree.origin[i, 2], scr.asp[p], scr.asp[i])
            for r in range(6):
                scr.asp[i, r] += scr.csp[i, r]
        _imul6(tree.isp[i], scr.asp[i], scr.w6a)
        _imul6(tree.isp[i], scr.vsp[i], scr.w6b)
        _spatial_cross_force(scr.vsp[i], scr.w6b, scr.pA[i])
        for r in range(6):
            scr.pA[i, r] += scr.w6a[r]
        # subtract gravity wrench (body frame): f = R^T (0,0,-m g), n = com x f
        fgx = -tree.mass[i] * gravity * scr.Rw[i, 2, 0]
        fgy = -tree.mass[i] * gravity * scr.Rw[i, 2, 1]
        fgz = -tree.mass[i] * gravity * scr.Rw[i, 2, 2]
        scr.pA[i, 0] -= tree.com[i, 1] * fgz - tree.com[i, 2] * fgy
        scr.pA[i, 1] -= tree.com[i, 2] * fgx - tree.com[i, 0] * fgz
        scr.pA[i, 2] -= tree.com[i, 0] * fgy - tree.com[i, 1] * fgx
        scr.pA[i, 3] -= fgx
        scr.pA[i, 4] -= fgy
        scr.pA[i, 5] -= fgz
    # pass 2: inward
    for i in range(nb - 1, 0, -1):
        p = tree.parent[i]
        bias[tree.v_adr[i]] = (tree.axis[i, 0] * scr.pA[i, 0]
                               + tree.axis[i, 1] * scr.pA[i, 1]
                               + tree.axis[i, 2] * scr.pA[i, 2])
        _rel_rotation_T(tree, i, q, scr.T2[:3, :3])
        _xform_force_to_parent(scr.T2[:3, :3], tree.origin[i, 0],
                               tree.origin[i, 1], tree.origin[i, 2],
                               scr.pA[i], scr.w6a)
        for r in range(6):
            scr.pA[p, r] += scr.w6a[r]
    bias[0] = scr.pA[0, 3]
    bias[1] = scr.pA[0, 4]
    bias[2] = scr.pA[0, 5]
    bias[3] = scr.pA[0, 0]
    bias[4] = scr.pA[0, 1]
    bias[5] = scr.pA[0, 2]


# ---------------------------------------------------------------------------
# CRBA: joint-space inertia matrix


@njit(cache=True, nogil=True)
def _crba(tree, q, scr, M):
    nb = tree.parent.shape[0]
    nv = tree.nv
    Ic = np.zeros((nb, 6, 6))
    X = np.zeros((nb, 6, 6))
    for i in range(nb):
        for r in range(6):
            for c in range(6):
                Ic[i, r, c] = tree.isp[i, r, c]
    for i in range(1, nb):
        _rel_rotation_T(tree, i, q, scr.T2[:3, :3])
        _build_xup(tree, i, scr, X[i])
    for r in range(nv):
        for c in range(nv):
            M[r, c] = 0.0
    for i in range(nb - 1, 0, -1):
        p = tree.parent[i]
        # Ic[p] += X^T Ic[i] X
        for r in range(6):
            for c in range(6):
                s = 0.0
                for k in range(6):
                    s += Ic[i, r, k] * X[i, k, c]
                scr.T1[r, c] = s
        for r in range(6):
            for c in range(6):
                s = 0.0
                for k in range(6):
                    s += X[i, k, r] * scr.T1[k, c]
                Ic[p, r, c] += s
    for i in range(1, nb):
        vi = tree.v_adr[i]
        # F = Ic[i] * S_i, S = (axis, 0)
        for r in range(6):
            scr.w6a[r] = (Ic[i, r, 0] * tree.axis[i, 0]
                          + Ic[i, r, 1] * tree.axis[i, 1]
                          + Ic[i, r, 2] * tree.axis[i, 2])
        M[vi, vi] = (tree.axis[i, 0] * scr.w6a[0] + tree.axis[i, 1] * scr.w6a[1]
                     + tree.axis[i, 2] * scr.w6a[2])
        j = i
        while tree.parent[j] >= 0:
            _rel_rotation_T(tree, j, q, scr.T2[:3, :3])
            _xform_force_to_parent(scr.T2[:3, :3], tree.origin[j, 0],
                                   tree.origin[j, 1], tree.origin[j, 2],
                                   scr.w6a, scr.w6b)
            for r in range(6):
                scr.w6a[r] = scr.w6b[r]
            j = tree.parent[j]
            if j == 0:
                M[vi, 0] = scr.w6a[3]
                M[vi, 1] = scr.w6a[4]
                M[vi, 2] = scr.w6a[5]
                M[vi, 3] = scr.w6a[0]
                M[vi, 4] = scr.w6a[1]
                M[vi, 5] = scr.w6a[2]
            else:
                vj = tree.v_adr[j]
                M[vi, vj] = (tree.axis[j, 0] * scr.w6a[0]
                             + tree.axis[j, 1] * scr.w6a[1]
                             + tree.axis[j, 2] * scr.w6a[2])
    # base block: generalized [lin, ang] from spatial [ang, lin]
    for r in range(3):
        for c in range(3):
            M[r, c] = Ic[0, r + 3, c + 3]
            M[r, c + 3] = Ic[0, r + 3, c]
            M[r + 3, c] = Ic[0, r, c + 3]
            M[r + 3, c + 3] = Ic[0, r, c]
    for r in range(nv):
        for c in range(r):
            M[c, r] = M[r, c]


# ---------------------------------------------------------------------------
# ABA: forward dynamics accelerations


@njit(cache=True, nogil=True)
def _aba(tree, q, v, tau_v, scr, a_out):
    """Articulated-body forward dynamics. tau_v is the generalized applied
    force (base entries unused and assumed zero); scr.fext holds body-frame
    external wrenches (gravity and contacts). Requires current _fk in scr."""
    nb = tree.parent.shape[0]
    _spatial_vels(tree, q, v, scr)
    for i in range(nb):
        for r in range(6):
            for c in range(6):
                scr.IA[i, r, c] = tree.isp[i, r, c]
        _imul6(tree.isp[i], scr.vsp[i], scr.w6a)
        _spatial_cross_force(scr.vsp[i], scr.w6a, scr.pA[i])
        for r in range(6):
            scr.pA[i, r] -= scr.fext[i, r]
    for i in range(nb - 1, 0, -1):
        p = tree.parent[i]
        for r in range(6):
            scr.U[i, r] = (scr.IA[i, r, 0] * tree.axis[i, 0]
                           + scr.IA[i, r, 1] * tree.axis[i, 1]
                           + scr.IA[i, r, 2] * tree.axis[i, 2])
        d = (tree.axis[i, 0] * scr.U[i, 0] + tree.axis[i, 1] * scr.U[i, 1]
             + tree.axis[i, 2] * scr.U[i, 2])
        scr.dd[i] = d
        u = tau_v[tree.v_adr[i]] - (tree.axis[i, 0] * scr.pA[i, 0]
                                    + tree.axis[i, 1] * scr.pA[i, 1]
                                    + tree.axis[i, 2] * scr.pA[i, 2])
        scr.uu[i] = u
        # Ia = IA - U U^T / d ; pa = pA + Ia*c + U*u/d
        inv_d = 1.0 / d
        for r in range(6):
            for c in range(6):
                scr.T1[r, c] = scr.IA[i, r, c] - scr.U[i, r] * scr.U[i, c] * inv_d
        for r in range(6):
            s = scr.pA[i, r] + scr.U[i, r] * u * inv_d
            for c in range(6):
                s += scr.T1[r, c] * scr.csp[i, c]
            scr.w6a[r] = s
        _rel_rotation_T(tree, i, q, scr.T2[:3, :3])
        _build_xup(tree, i, scr, scr.X)
        # IA[p] += X^T Ia X ; pA[p] += X^T pa
        for r in range(6):
            for c in range(6):
                s = 0.0
                for k in range(6):
                    s += scr.T1[r, k] * scr.X[k, c]
                scr.IA[i, r, c] = s  # reuse IA[i] as temp (done with it)
        for r in range(6):
            for c in range(6):
                s = 0.0
                for k in range(6):
                    s += scr.X[k, r] * scr.IA[i, k, c]
                scr.IA[p, r, c] += s
        _xform_force_to_parent(scr.T2[:3, :3], tree.origin[i, 0],
                               tree.origin[i, 1], tree.origin[i, 2],
                               scr.w6a, scr.w6b)
        for r in range(6):
            scr.pA[p, r] += scr.w6b[r]
    # base 6x6 solve: a0 = -IA0^{-1} pA0
    for r in range(6):
        scr.w6a[r] = -scr.pA[0, r]
    _chol_solve6(scr.IA[0], scr.w6a, scr.asp[0], scr.L)
    a_out[0] = scr.asp[0, 3]
    a_out[1] = scr.asp[0, 4]
    a_out[2] = scr.asp[0, 5]
    a_out[3] = scr.asp[0, 0]
    a_out[4] = scr.asp[0, 1]
    a_out[5] = scr.asp[0, 2]
    for i in range(1, nb):
        p = tree.parent[i]
        _rel_rotation_T(tree, i, q, scr.T2[:3, :3])
        _xform_motion(scr.T2[:3, :3], tree.origin[i, 0], tree.origin[i, 1],
                      tree.origin[i, 2], scr.asp[p], scr.w6a)
        for r in range(6):
            scr.w6a[r] += scr.csp[i, r]
        qdd = (scr.uu[i] - (scr.U[i, 0] * scr.w6a[0] + scr.U[i, 1] * scr.w6a[1]
                            + scr.U[i, 2] * scr.w6a[2] + scr.U[i, 3] * scr.w6a[3]
                            + scr.U[i, 4] * scr.w6a[4] + scr.U[i, 5] * scr.w6a[5])) / scr.dd[i]
        a_out[tree.v_adr[i]] = qdd
        for r in range(6):
            scr.asp[i, r] = scr.w6a[r]
        scr.asp[i, 0] += tree.axis[i, 0] * qdd
        scr.asp[i, 1] += tree.axis[i, 1] * qdd
        scr.asp[i, 2] += tree.axis[i, 2] * qdd


# ---------------------------------------------------------------------------
# Gravity external wrenches + world-origin external wrench accumulator


@njit(cache=True, nogil=True)
def _apply_gravity(tree, scr, gravity, wext):
    nb = tree.parent.shape[0]
    for i in range(nb):
        m = tree.mass[i]
        fgx = -m * gravity * scr.Rw[i, 2, 0]
        fgy = -m * gravity * scr.Rw[i, 2, 1]
        fgz = -m * gravity * scr.Rw[i, 2, 2]
        scr.fext[i, 0] += tree.com[i, 1] * fgz - tree.com[i, 2] * fgy
        scr.fext[i, 1] += tree.com[i, 2] * fgx - tree.com[i, 0] * fgz
        scr.fext[i, 2] += tree.com[i, 0] * fgy - tree.com[i, 1] * fgx
        scr.fext[i, 3] += fgx
        scr.fext[i, 4] += fgy
        scr.fext[i, 5] += fgz
        # world-origin wrench: force (0,0,-mg) at world com
        px = (scr.pw[i, 0] + scr.Rw[i, 0, 0] * tree.com[i, 0]
              + scr.Rw[i, 0, 1] * tree.com[i, 1] + scr.Rw[i, 0, 2] * tree.com[i, 2])
        py = (scr.pw[i, 1] + scr.Rw[i, 1, 0] * tree.com[i, 0]
              + scr.Rw[i, 1, 1] * tree.com[i, 1] + scr.Rw[i, 1, 2] * tree.com[i, 2])
        fz = -m * gravity
        wext[0] += py * fz
        wext[1] += -px * fz
        wext[5] += fz


@njit(cache=True, nogil=True)
def _add_world_force(tree, scr, body, px, py, pz, fx, fy, fz, wext):
    """Apply world force f at world point p to `body`; update body-frame
    external wrench and the tree's world-origin wrench accumulator."""
    rx = px - scr.pw[body, 0]
    ry = py - scr.pw[body, 1]
    rz = pz - scr.pw[body, 2]
    nx = ry * fz - rz * fy
    ny = rz * fx - rx * fz
    nz = rx * fy - ry * fx
    R = scr.Rw[body]
    scr.fext[body, 0] += R[0, 0] * nx + R[1, 0] * ny + R[2, 0] * nz
    scr.fext[body, 1] += R[0, 1] * nx + R[1, 1] * ny + R[2, 1] * nz
    scr.fext[body, 2] += R[0, 2] * nx + R[1, 2] * ny + R[2, 2] * nz
    scr.fext[body, 3] += R[0, 0] * fx + R[1, 0] * fy + R[2, 0] * fz
    scr.fext[body, 4] += R[0, 1] * fx + R[1, 1] * fy + R[2, 1] * fz
    scr.fext[body, 5] += R[0, 2] * fx + R[1, 2] * fy + R[2, 2] * fz
    wext[0] += py * fz - pz * fy
    wext[1] += pz * fx - px * fz
    wext[2] += px * fy - py * fx
    wext[3] += fx
    wext[4] += fy
    wext[5] += fz


# ---------------------------------------------------------------------------
# Contacts


# Explicit integration of the contact damper and of the regularized-Coulomb
# viscous slope mu*Fn/veps is only stable while coefficient*dt stays below
# the effective mass seen at the contact point. Both are capped per contact
# using the point effective mass 1/(1/m + r^2/I_min) of the touching body,
# which accounts for rocking modes at long levers (foot toes, wheel arms).
_STAB_BETA = 2.0


@njit(cache=True, nogil=True)
def _point_eff_mass(tree, scr, body, px, py, pz):
    cx = (scr.pw[body, 0] + scr.Rw[body, 0, 0] * tree.com[body, 0]
          + scr.Rw[body, 0, 1] * tree.com[body, 1] + scr.Rw[body, 0, 2] * tree.com[body, 2])
    cy = (scr.pw[body, 1] + scr.Rw[body, 1, 0] * tree.com[body, 0]
          + scr.Rw[body, 1, 1] * tree.com[body, 1] + scr.Rw[body, 1, 2] * tree.com[body, 2])
    cz = (scr.pw[body, 2] + scr.Rw[body, 2, 0] * tree.com[body, 0]
          + scr.Rw[body, 2, 1] * tree.com[body, 1] + scr.Rw[body, 2, 2] * tree.com[body, 2])
    rr = (px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2
    return 1.0 / (1.0 / tree.mass[body] + rr / tree.imin[body])


@njit(cache=True, nogil=True)
def _contact_force_law(pen, vn, vt1, vt2, mu1, mu2, kc, bc, veps, dt, m_eff):
    b_eff = bc
    b_lim = 0.5 * m_eff / dt
    if b_eff > b_lim:
        b_eff = b_lim
    fn = kc * pen - b_eff * vn
    if fn < 0.0:
        fn = 0.0
    v1 = veps
    lim1 = _STAB_BETA * mu1 * fn * dt / m_eff
    if lim1 > v1:
        v1 = lim1
    v2 = veps
    lim2 = _STAB_BETA * mu2 * fn * dt / m_eff
    if lim2 > v2:
        v2 = lim2
    ft1 = -mu1 * fn * math.tanh(vt1 / v1)
    ft2 = -mu2 * fn * math.tanh(vt2 / v2)
    return fn, ft1, ft2


@njit(cache=True, nogil=True)
def _contacts(world, rs, bs, con, apply_forces, wext_r, wext_b, foot_fn, dt):
    """Detect all contacts; fill detail arrays in `con`; optionally apply
    forces to scr.fext / world-origin accumulators. foot_fn collects
    (left total, right total, right-on-deck) normal force sums.
    Returns the contact count."""
    nc = 0
    foot_fn[0] = 0.0
    foot_fn[1] = 0.0
    foot_fn[2] = 0.0
    kc, bc, veps = world.kc, world.bc, world.veps

    # deck frame info
    Rd = bs.Rw[0]
    pd = bs.pw[0]
    hx, hy, hz = world.deck_half[0], world.deck_half[1], world.deck_half[2]
    max_engage = 3.0 * hz

    # sole points vs ground, right sole points vs deck
    ns = world.sole_body.shape[0]
    for s in range(ns):
        b = world.sole_body[s]
        lx, ly, lz = world.sole_pos[s, 0], world.sole_pos[s, 1], world.sole_pos[s, 2]
        R = rs.Rw[b]
        px = rs.pw[b, 0] + R[0, 0] * lx + R[0, 1] * ly + R[0, 2] * lz
        py = rs.pw[b, 1] + R[1, 0] * lx + R[1, 1] * ly + R[1, 2] * lz
        pz = rs.pw[b, 2] + R[2, 0] * lx + R[2, 1] * ly + R[2, 2] * lz
        rx = px - rs.pw[b, 0]
        ry = py - rs.pw[b, 1]
        rz = pz - rs.pw[b, 2]
        vx = rs.vow[b, 0] + rs.ww[b, 1] * rz - rs.ww[b, 2] * ry
        vy = rs.vow[b, 1] + rs.ww[b, 2] * rx - rs.ww[b, 0] * rz
        vz = rs.vow[b, 2] + rs.ww[b, 0] * ry - rs.ww[b, 1] * rx

        if pz < 0.0 and nc < MAX_CONTACTS:
            pen = -pz
            mu = world.mu_ground_foot
            m_eff = _point_eff_mass(world.robot, rs, b, px, py, pz)
            fn, ft1, ft2 = _contact_force_law(pen, vz, vx, vy, mu, mu, kc, bc,
                                              veps, dt, m_eff)
            con.pair[nc] = PAIR_FOOT_GROUND
            con.bodyr[nc] = b
            con.bodyb[nc] = -1
            con.point[nc, 0] = px
            con.point[nc, 1] = py
            con.point[nc, 2] = pz
            con.normal[nc, 0] = 0.0
            con.normal[nc, 1] = 0.0
            con.normal[nc, 2] = 1.0
            con.t1[nc, 0] = 1.0
            con.t1[nc, 1] = 0.0
            con.t1[nc, 2] = 0.0
            con.t2[nc, 0] = 0.0
            con.t2[nc, 1] = 1.0
            con.t2[nc, 2] = 0.0
            con.mu[nc, 0] = mu
            con.mu[nc, 1] = mu
            con.pen[nc] = pen
            con.fn[nc] = fn
            con.relv[nc, 0] = vx
            con.relv[nc, 1] = vy
            con.relv[nc, 2] = vz
            if world.sole_right[s] == 1:
                foot_fn[1] += fn
            else:
                foot_fn[0] += fn
            if apply_forces == 1:
                fx = ft1
                fy = ft2
                fz = fn
                _add_world_force(world.robot, rs, b, px, py, pz, fx, fy, fz, wext_r)
            nc += 1

        if world.sole_right[s] == 1:
            # point in deck frame
            dxw = px - pd[0]
            dyw = py - pd[1]
            dzw = pz - pd[2]
            qx = Rd[0, 0] * dxw + Rd[1, 0] * dyw + Rd[2, 0] * dzw
            qy = Rd[0, 1] * dxw + Rd[1, 1] * dyw + Rd[2, 1] * dzw
            qz = Rd[0, 2] * dxw + Rd[1, 2] * dyw + Rd[2, 2] * dzw
            pen = hz - qz
            if (abs(qx) < hx and abs(qy) < hy and 0.0 < pen < max_engage
                    and nc < MAX_CONTACTS):
                # deck-side point velocity
                dvx = bs.vow[0, 0] + bs.ww[0, 1] * dzw - bs.ww[0, 2] * dyw
                dvy = bs.vow[0, 1] + bs.ww[0, 2] * dxw - bs.ww[0, 0] * dzw
                dvz = bs.vow[0, 2] + bs.ww[0, 0] * dyw - bs.ww[0, 1] * dxw
                rvx = vx - dvx
                rvy = vy - dvy
                rvz = vz - dvz
                # normal = deck +z in world; tangents from deck x
                nx_, ny_, nz_ = Rd[0, 2], Rd[1, 2], Rd[2, 2]
                t1x, t1y, t1z = Rd[0, 0], Rd[1, 0], Rd[2, 0]
                t2x = ny_ * t1z - nz_ * t1y
                t2y = nz_ * t1x - nx_ * t1z
                t2z = nx_ * t1y - ny_ * t1x
                vn = rvx * nx_ + rvy * ny_ + rvz * nz_
                vt1 = rvx * t1x + rvy * t1y + rvz * t1z
                vt2 = rvx * t2x + rvy * t2y + rvz * t2z
                mu = world.mu_deck_foot
                m_f = _point_eff_mass(world.robot, rs, b, px, py, pz)
                m_d = _point_eff_mass(world.board, bs, 0, px, py, pz)
                m_pair = m_f * m_d / (m_f + m_d)
                fn, ft1, ft2 = _contact_force_law(pen, vn, vt1, vt2, mu, mu,
                                                  kc, bc, veps, dt, m_pair)
                con.pair[nc] = PAIR_FOOT_DECK
                con.bodyr[nc] = b
                con.bodyb[nc] = 0
                con.point[nc, 0] = px
                con.point[nc, 1] = py
                con.point[nc, 2] = pz
                con.normal[nc, 0] = nx_
                con.normal[nc, 1] = ny_
                con.normal[nc, 2] = nz_
                con.t1[nc, 0] = t1x
                con.t1[nc, 1] = t1y
                con.t1[nc, 2] = t1z
                con.t2[nc, 0] = t2x
                con.t2[nc, 1] = t2y
                con.t2[nc, 2] = t2z
                con.mu[nc, 0] = mu
                con.mu[nc, 1] = mu
                con.pen[nc] = pen
                con.fn[nc] = fn
                con.relv[nc, 0] = rvx
                con.relv[nc, 1] = rvy
                con.relv[nc, 2] = rvz
                foot_fn[1] += fn
                foot_fn[2] += fn
                if apply_forces == 1:
                    fx = fn * nx_ + ft1 * t1x + ft2 * t2x
                    fy = fn * ny_ + ft1 * t1y + ft2 * t2y
                    fz = fn * nz_ + ft1 * t1z + ft2 * t2z
                    _add_world_force(world.robot, rs, b, px, py, pz, fx, fy, fz, wext_r)
                    _add_world_force(world.board, bs, 0, px, py, pz, -fx, -fy, -fz, wext_b)
                nc += 1

    # wheels vs ground, with lean-steered friction frames
    roll = math.atan2(Rd[2, 1], Rd[2, 2])
    yaw = math.atan2(Rd[1, 0], Rd[0, 0])
    delta = _steer(roll, world.rake)
    nw = world.wheel_body.shape[0]
    for wi in range(nw):
        b = world.wheel_body[wi]
        lx, ly, lz = world.wheel_pos[wi, 0], world.wheel_pos[wi, 1], world.wheel_pos[wi, 2]
        rad = world.wheel_radius[wi]
        R = bs.Rw[b]
        cx = bs.pw[b, 0] + R[0, 0] * lx + R[0, 1] * ly + R[0, 2] * lz
        cy = bs.pw[b, 1] + R[1, 0] * lx + R[1, 1] * ly + R[1, 2] * lz
        cz = bs.pw[b, 2] + R[2, 0] * lx + R[2, 1] * ly + R[2, 2] * lz
        pen = rad - cz
        if pen > 0.0 and nc < MAX_CONTACTS:
            px = cx
            py = cy
            pz = cz - rad
            rx = px - bs.pw[b, 0]
            ry = py - bs.pw[b, 1]
            rz = pz - bs.pw[b, 2]
            vx = bs.vow[b, 0] + bs.ww[b, 1] * rz - bs.ww[b, 2] * ry
            vy = bs.vow[b, 1] + bs.ww[b, 2] * rx - bs.ww[b, 0] * rz
            vz = bs.vow[b, 2] + bs.ww[b, 0] * ry - bs.ww[b, 1] * rx
            # rolling heading: yaw steered toward the leaned side
            if world.wheel_front[wi] == 1:
                head = yaw - delta
            else:
                head = yaw + delta
            t1x, t1y = math.cos(head), math.sin(head)
            t2x, t2y = -t1y, t1x
            vt1 = vx * t1x + vy * t1y
            vt2 = vx * t2x + vy * t2y
            m_eff = _point_eff_mass(world.board, bs, b, px, py, pz)
            fn, ft1, ft2 = _contact_force_law(
                pen, vz, vt1, vt2, world.mu_wheel_roll, world.mu_wheel_lat,
                kc, bc, veps, dt, m_eff)
            con.pair[nc] = PAIR_WHEEL_GROUND
            con.bodyr[nc] = -1
            con.bodyb[nc] = b
            con.point[nc, 0] = px
            con.point[nc, 1] = py
            con.point[nc, 2] = pz
            con.normal[nc, 0] = 0.0
            con.normal[nc, 1] = 0.0
            con.normal[nc, 2] = 1.0
            con.t1[nc, 0] = t1x
            con.t1[nc, 1] = t1y
            con.t1[nc, 2] = 0.0
            con.t2[nc, 0] = t2x
            con.t2[nc, 1] = t2y
            con.t2[nc, 2] = 0.0
            con.mu[nc, 0] = world.mu_wheel_roll
            con.mu[nc, 1] = world.mu_wheel_lat
            con.pen[nc] = pen
            con.fn[nc] = fn
            con.relv[nc, 0] = vx
            con.relv[nc, 1] = vy
            con.relv[nc, 2] = vz
            if apply_forces == 1:
                fx = ft1 * t1x + ft2 * t2x
                fy = ft1 * t1y + ft2 * t2y
                fz = fn
                _add_world_force(world.board, bs, b, px, py, pz, fx, fy, fz, wext_b)
            nc += 1
    return nc


# ---------------------------------------------------------------------------
# Integration with momentum-consistent base correction


@njit(cache=True, nogil=True)
def _integrate_q(tree, q, v_old, v_new, dt):
    """Midpoint position update: exact for constant acceleration, which
    keeps free-fall energy drift at round-off."""
    hx = 0.5 * (v_old[0] + v_new[0])
    hy = 0.5 * (v_old[1] + v_new[1])
    hz = 0.5 * (v_old[2] + v_new[2])
    # base linear velocity is body-frame: rotate to world with current q
    qw, qx, qy, qz = q[3], q[4], q[5], q[6]
    R00 = qw * qw + qx * qx - qy * qy - qz * qz
    R01 = 2.0 * (qx * qy - qw * qz)
    R02 = 2.0 * (qx * qz + qw * qy)
    R10 = 2.0 * (qx * qy + qw * qz)
    R11 = qw * qw - qx * qx + qy * qy - qz * qz
    R12 = 2.0 * (qy * qz - qw * qx)
    R20 = 2.0 * (qx * qz - qw * qy)
    R21 = 2.0 * (qy * qz + qw * qx)
    R22 = qw * qw - qx * qx - qy * qy + qz * qz
    q[0] += dt * (R00 * hx + R01 * hy + R02 * hz)
    q[1] += dt * (R10 * hx + R11 * hy + R12 * hz)
    q[2] += dt * (R20 * hx + R21 * hy + R22 * hz)
    _quat_integrate_body(q[3:7],
                         0.5 * (v_old[3] + v_new[3]),
                         0.5 * (v_old[4] + v_new[4]),
                         0.5 * (v_old[5] + v_new[5]), dt)
    nb = tree.parent.shape[0]
    for i in range(1, nb):
        q[tree.q_adr[i]] += dt * 0.5 * (v_old[tree.v_adr[i]] + v_new[tree.v_adr[i]])


@njit(cache=True, nogil=True)
def _project_base_momentum(tree, q, v, scr, h_target):
    """Adjust the 6 base velocity entries so the tree's world-origin spatial
    momentum equals h_target, keeping joint rates fixed. Requires current
    _fk results in scr."""
    nb = tree.parent.shape[0]
    # joint-only momentum: zero base velocity
    for r in range(tree.nv):
        scr.vtmp[r] = v[r]
    for r in range(6):
        scr.vtmp[r] = 0.0
    _world_vels(tree, q, scr.vtmp, scr)
    _momentum(tree, scr, scr.w6a)
    p0x, p0y, p0z = scr.pw[0, 0], scr.pw[0, 1], scr.pw[0, 2]
    # shift both momenta to the base origin: h(p0) = h(0) - p0 x h_lin
    rhs = scr.w6b
    rhs[0] = (h_target[0] - scr.w6a[0]) - (p0y * (h_target[5] - scr.w6a[5]) - p0z * (h_target[4] - scr.w6a[4]))
    rhs[1] = (h_target[1] - scr.w6a[1]) - (p0z * (h_target[3] - scr.w6a[3]) - p0x * (h_target[5] - scr.w6a[5]))
    rhs[2] = (h_target[2] - scr.w6a[2]) - (p0x * (h_target[4] - scr.w6a[4]) - p0y * (h_target[3] - scr.w6a[3]))
    rhs[3] = h_target[3] - scr.w6a[3]
    rhs[4] = h_target[4] - scr.w6a[4]
    rhs[5] = h_target[5] - scr.w6a[5]
    # locked spatial inertia about base origin, world axes
    A = scr.T1
    for r in range(6):
        for c in range(6):
            A[r, c] = 0.0
    mtot = 0.0
    sx = 0.0
    sy = 0.0
    sz = 0.0
    for i in range(nb):
        m = tree.mass[i]
        R = scr.Rw[i]
        px = (scr.pw[i, 0] + R[0, 0] * tree.com[i, 0] + R[0, 1] * tree.com[i, 1] + R[0, 2] * tree.com[i, 2]) - p0x
        py = (scr.pw[i, 1] + R[1, 0] * tree.com[i, 0] + R[1, 1] * tree.com[i, 1] + R[1, 2] * tree.com[i, 2]) - p0y
        pz = (scr.pw[i, 2] + R[2, 0] * tree.com[i, 0] + R[2, 1] * tree.com[i, 1] + R[2, 2] * tree.com[i, 2]) - p0z
        mtot += m
        sx += m * px
        sy += m * py
        sz += m * pz
        # world inertia about com: R Icom R^T
        for r in range(3):
            for c in range(3):
                s = 0.0
                for k in range(3):
                    t = 0.0
                    for l in range(3):
                        t += tree.icom[i, k, l] * R[c, l]
                    s += R[r, k] * t
                A[r, c] += s
        dd = px * px + py * py + pz * pz
        A[0, 0] += m * (dd - px * px)
        A[0, 1] += -m * px * py
        A[0, 2] += -m * px * pz
        A[1, 0] += -m * py * px
        A[1, 1] += m * (dd - py * py)
        A[1, 2] += -m * py * pz
        A[2, 0] += -m * pz * px
        A[2, 1] += -m * pz * py
        A[2, 2] += m * (dd - pz * pz)
    # coupling blocks: skew(sum m d)
    A[0, 4] = -sz
    A[0, 5] = sy
    A[1, 3] = sz
    A[1, 5] = -sx
    A[2, 3] = -sy
    A[2, 4] = sx
    A[3, 1] = sz
    A[3, 2] = -sy
    A[4, 0] = -sz
    A[4, 2] = sx
    A[5, 0] = sy
    A[5, 1] = -sx
    A[3, 3] = mtot
    A[4, 4] = mtot
    A[5, 5] = mtot
    x = scr.w6a
    _chol_solve6(A, rhs, x, scr.L)
    # x = (omega_world, v_base_origin_world) -> body-frame generalized base
    R0 = scr.Rw[0]
    v[0] = R0[0, 0] * x[3] + R0[1, 0] * x[4] + R0[2, 0] * x[5]
    v[1] = R0[0, 1] * x[3] + R0[1, 1] * x[4] + R0[2, 1] * x[5]
    v[2] = R0[0, 2] * x[3] + R0[1, 2] * x[4] + R0[2, 2] * x[5]
    v[3] = R0[0, 0] * x[0] + R0[1, 0] * x[1] + R0[2, 0] * x[2]
    v[4] = R0[0, 1] * x[0] + R0[1, 1] * x[1] + R0[2, 1] * x[2]
    v[5] = R0[0, 2] * x[0] + R0[1, 2] * x[1] + R0[2, 2] * x[2]


@njit(cache=True, nogil=True)
def _pd_torques(world, q_r, v_r, action, kp, kd, tau_max, tau_out):
    nb = world.robot.parent.shape[0]
    for i in range(nb):
        a = world.robot.act_idx[i]
        if a >= 0:
            t = kp[a] * (action[a] - q_r[world.robot.q_adr[i]]) - kd[a] * v_r[world.robot.v_adr[i]]
            if t > tau_max[a]:
                t = tau_max[a]
            elif t < -tau_max[a]:
                t = -tau_max[a]
            tau_out[a] = t


@njit(cache=True, nogil=True)
def _substep(world, q_r, v_r, q_b, v_b, tau12, deck_wrench, dt,
             rs, bs, con, has_robot, foot_fn):
    """One physics step of both trees. Returns False on non-finite state.
    deck_wrench is an external world wrench on the deck: force (3,) applied
    at the deck origin plus couple (3,); used by the toy task and tests."""
    # kinematics + velocities at the current state
    if has_robot == 1:
        _fk(world.robot, q_r, rs)
        _world_vels(world.robot, q_r, v_r, rs)
    _fk(world.board, q_b, bs)
    _world_vels(world.board, q_b, v_b, bs)

    nb_r = world.robot.parent.shape[0]
    nb_b = world.board.parent.shape[0]
    for i in range(nb_r):
        for r in range(6):
            rs.fext[i, r] = 0.0
    for i in range(nb_b):
        for r in range(6):
            bs.fext[i, r] = 0.0
    wext_r = rs.w6b  # reused as accumulators; w6a/w6b free here
    wext_b = bs.w6b
    for r in range(6):
        wext_r[r] = 0.0
        wext_b[r] = 0.0

    if has_robot == 1:
        _apply_gravity(world.robot, rs, world.gravity, wext_r)
    _apply_gravity(world.board, bs, world.gravity, wext_b)
    _contacts(world, rs, bs, con, 1, wext_r, wext_b, foot_fn, dt)
    for r in range(3):
        if deck_wrench[r] != 0.0:
            _add_world_force(world.board, bs, 0, bs.pw[0, 0], bs.pw[0, 1],
                             bs.pw[0, 2], deck_wrench[0], deck_wrench[1],
                             deck_wrench[2], wext_b)
            break
    if deck_wrench[3] != 0.0 or deck_wrench[4] != 0.0 or deck_wrench[5] != 0.0:
        R0 = bs.Rw[0]
        for c in range(3):
            bs.fext[0, c] += (R0[0, c] * deck_wrench[3] + R0[1, c] * deck_wrench[4]
                              + R0[2, c] * deck_wrench[5])
        for r in range(3):
            wext_b[r] += deck_wrench[3 + r]

    # momentum targets before the velocity update
    h_r = rs.h6
    if has_robot == 1:
        _momentum(world.robot, rs, h_r)
        for r in range(6):
            h_r[r] += dt * wext_r[r]
    h_b = bs.h6
    _momentum(world.board, bs, h_b)
    for r in range(6):
        h_b[r] += dt * wext_b[r]

    # generalized applied forces
    if has_robot == 1:
        for r in range(world.robot.nv):
            rs.vb[r] = 0.0
        for i in range(nb_r):
            a = world.robot.act_idx[i]
            if a >= 0:
                rs.vb[world.robot.v_adr[i]] = tau12[a]
    for r in range(world.board.nv):
        bs.vb[r] = 0.0
    for i in range(1, nb_b):
        adr = world.board.v_adr[i]
        bs.vb[adr] = _truck_tq(q_b[world.board.q_adr[i]], v_b[adr],
                               world.board.stiffness[i], world.board.damping[i])

    ok = True
    if has_robot == 1:
        _aba(world.robot, q_r, v_r, rs.vb, rs, rs.vtmp)
        for r in range(world.robot.nv):
            if not math.isfinite(rs.vtmp[r]):
                ok = False
    _aba(world.board, q_b, v_b, bs.vb, bs, bs.vtmp)
    for r in range(world.board.nv):
        if not math.isfinite(bs.vtmp[r]):
            ok = False
    if not ok:
        return False

    # velocity update then midpoint position update
    if has_robot == 1:
        for r in range(world.robot.nv):
            rs.vb[r] = v_r[r]              # old velocity
            v_r[r] = v_r[r] + dt * rs.vtmp[r]
        _integrate_q(world.robot, q_r, rs.vb, v_r, dt)
        _fk(world.robot, q_r, rs)
        _project_base_momentum(world.robot, q_r, v_r, rs, h_r)
    for r in range(world.board.nv):
        bs.vb[r] = v_b[r]
        v_b[r] = v_b[r] + dt * bs.vtmp[r]
    _integrate_q(world.board, q_b, bs.vb, v_b, dt)
    _fk(world.board, q_b, bs)
    _project_base_momentum(world.board, q_b, v_b, bs, h_b)

    for r in range(world.board.nq):
        if not math.isfinite(q_b[r]):
            ok = False
    if has_robot == 1:
        for r in range(world.robot.nq):
            if not math.isfinite(q_r[r]):
                ok = False
        for r in range(world.robot.nv):
            if not math.isfinite(v_r[r]):
                ok = False
    for r in range(world.board.nv):
        if not math.isfinite(v_b[r]):
            ok = False
    return ok
