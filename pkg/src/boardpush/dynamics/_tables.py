"""Flat-array form of the kinematic trees consumed by the numba kernels.

Bodies are stored in topological order (parent index < body index); body i's
inbound joint is joint i. Generalized coordinates: free6 root is
q[0:3] position, q[3:7] unit quaternion (w,x,y,z), then one angle per
revolute joint. Velocities: v[0:3] base linear velocity and v[3:6] base
angular velocity, both in the base body frame, then joint rates.
"""

from __future__ import annotations

from collections import namedtuple

import numpy as np

from boardpush.model import KinematicTree, ModelParams

# Arrays describing one tree. isp is the 6x6 spatial inertia about the body
# origin in body coordinates, angular components first.
TreeT = namedtuple(
    "TreeT",
    "parent jtype q_adr v_adr origin axis mass com icom imin isp "
    "stiffness damping act_idx nq nv")

# Both trees plus contact geometry and material/friction constants.
WorldT = namedtuple(
    "WorldT",
    "robot board "
    "sole_body sole_pos sole_right "
    "wheel_body wheel_pos wheel_radius wheel_front "
    "deck_half "
    "mu_ground_foot mu_deck_foot mu_wheel_lat mu_wheel_roll rake "
    "kc bc veps gravity")

GRAVITY = 9.81


def _spatial_inertia(mass, com, icom):
    cx = np.array([
        [0.0, -com[2], com[1]],
        [com[2], 0.0, -com[0]],
        [-com[1], com[0], 0.0],
    ])
    isp = np.zeros((6, 6))
    isp[:3, :3] = icom + mass * cx @ cx.T
    isp[:3, 3:] = mass * cx
    isp[3:, :3] = mass * cx.T
    isp[3:, 3:] = mass * np.eye(3)
    return isp


def compile_tree(tree: KinematicTree) -> TreeT:
    nb = len(tree.bodies)
    body_idx = {b.name: i for i, b in enumerate(tree.bodies)}
    joint_of = {j.child: j for j in tree.joints}

    parent = np.empty(nb, dtype=np.int32)
    jtype = np.empty(nb, dtype=np.int32)
    q_adr = np.empty(nb, dtype=np.int32)
    v_adr = np.empty(nb, dtype=np.int32)
    origin = np.zeros((nb, 3))
    axis = np.zeros((nb, 3))
    mass = np.zeros(nb)
    com = np.zeros((nb, 3))
    icom = np.zeros((nb, 3, 3))
    imin = np.zeros(nb)
    isp = np.zeros((nb, 6, 6))
    stiffness = np.zeros(nb)
    damping = np.zeros(nb)
    act_idx = np.full(nb, -1, dtype=np.int32)

    qa, va, ai = 7, 6, 0
    for i, b in enumerate(tree.bodies):
        j = joint_of[b.name]
        parent[i] = -1 if j.parent == "world" else body_idx[j.parent]
        if parent[i] >= i and parent[i] != -1:
            raise ValueError("bodies must be ordered parent-first")
        if j.kind == "free6":
            jtype[i] = 0
            q_adr[i] = 0
            v_adr[i] = 0
        else:
            jtype[i] = 1
            q_adr[i] = qa
            v_adr[i] = va
            qa += 1
            va += 1
            if j.actuated:
                act_idx[i] = ai
                ai += 1
        origin[i] = np.asarray(j.origin, dtype=float)
        axis[i] = np.asarray(j.axis, dtype=float)
        mass[i] = b.mass
        com[i] = np.asarray(b.com_offset, dtype=float)
        icom[i] = np.asarray(b.inertia, dtype=float)
        imin[i] = float(np.linalg.eigvalsh(icom[i]).min())
        isp[i] = _spatial_inertia(mass[i], com[i], icom[i])
        stiffness[i] = j.stiffness
        damping[i] = j.damping

    return TreeT(parent=parent, jtype=jtype, q_adr=q_adr, v_adr=v_adr,
                 origin=origin, axis=axis, mass=mass, com=com, icom=icom,
                 imin=imin, isp=isp, stiffness=stiffness, damping=damping,
                 act_idx=act_idx, nq=tree.nq, nv=tree.nv)


def compile_world(robot: KinematicTree, board: KinematicTree,
                  params: ModelParams, kc: float, bc: float,
                  veps: float) -> WorldT:
    """Bundle both trees with contact-point tables and material constants."""
    rt = compile_tree(robot)
    bt = compile_tree(board)

    sole_body, sole_pos, sole_right = [], [], []
    for i, b in enumerate(robot.bodies):
        for g in b.geometry:
            if g.role.startswith("foot_sole"):
                hx, hy, hz = g.size
                cx, cy, cz = g.pos
                for sx in (-1.0, 1.0):
                    for sy in (-1.0, 1.0):
                        sole_body.append(i)
                        sole_pos.append((cx + sx * hx, cy + sy * hy, cz - hz))
                        sole_right.append(1 if g.role.endswith("right") else 0)

    wheel_body, wheel_pos, wheel_radius, wheel_front = [], [], [], []
    deck_half = np.zeros(3)
    for i, b in enumerate(board.bodies):
        for g in b.geometry:
            if g.role.startswith("wheel"):
                wheel_body.append(i)
                wheel_pos.append(g.pos)
                wheel_radius.append(g.size[0])
                wheel_front.append(1 if g.role.endswith("front") else 0)
            elif g.role == "deck":
                deck_half = np.asarray(g.size, dtype=float)

    f = params.friction
    return WorldT(
        robot=rt, board=bt,
        sole_body=np.asarray(sole_body, dtype=np.int32),
        sole_pos=np.asarray(sole_pos, dtype=float),
        sole_right=np.asarray(sole_right, dtype=np.int32),
        wheel_body=np.asarray(wheel_body, dtype=np.int32),
        wheel_pos=np.asarray(wheel_pos, dtype=float),
        wheel_radius=np.asarray(wheel_radius, dtype=float),
        wheel_front=np.asarray(wheel_front, dtype=np.int32),
        deck_half=deck_half,
        mu_ground_foot=f.mu_ground_foot, mu_deck_foot=f.mu_deck_foot,
        mu_wheel_lat=f.mu_wheel_lat, mu_wheel_roll=f.mu_wheel_roll,
        rake=params.skateboard.truck_rake,
        kc=kc, bc=bc, veps=veps, gravity=GRAVITY)
