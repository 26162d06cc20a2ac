"""Articulated forward dynamics with compliant unilateral contacts.

Public surface: `SimState` (both trees' generalized state), contact types,
single-step `step`, the oracle-friendly operations `mass_matrix`,
`bias_forces`, `energy`, contact queries and the truck closed forms.

Generalized coordinates per tree: q = [pos(3), quat wxyz(4), joint angles];
v = [base linear velocity (body frame, 3), base angular velocity (body
frame, 3), joint rates]. The robot has nq=19/nv=18, the board nq=9/nv=8.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from boardpush.dynamics._scalars import steer_angle, truck_torque
from boardpush.dynamics import _kernels as K
from boardpush.dynamics._tables import (
    GRAVITY, TreeT, WorldT, compile_tree, compile_world)
from boardpush.model import (
    KinematicTree, ModelParams, build_robot_tree, build_skateboard_tree)

__all__ = [
    "ActiveContact", "ContactMaterial", "DivergenceError", "SimState",
    "World", "GRAVITY", "bias_forces", "contact_detect", "contact_force",
    "energy", "mass_matrix", "momentum", "step", "steer_angle",
    "truck_torque",
]

_PAIR_NAMES = {0: "foot_ground", 1: "foot_deck", 2: "wheel_ground"}


@dataclass
class ContactMaterial:
    k_c: float = 1e4     # N/m
    b_c: float = 100.0   # N·s/m
    v_eps: float = 0.01  # m/s

    def __post_init__(self):
        if not self.k_c > 0:
            raise ValueError("k_c must be > 0")
        if self.b_c < 0:
            raise ValueError("b_c must be >= 0")
        if not self.v_eps > 0:
            raise ValueError("v_eps must be > 0")


@dataclass
class ActiveContact:
    pair: str                 # foot_ground | foot_deck | wheel_ground
    point: np.ndarray         # world, m
    normal: np.ndarray        # unit, from the support toward the toucher
    penetration: float        # m, >= 0
    rel_velocity: np.ndarray  # toucher relative to support, world, m/s
    friction_frame: tuple     # (t1, t2) world unit tangents
    mu: tuple                 # (mu_t1, mu_t2)
    normal_force: float = 0.0  # N, at current material constants


@dataclass
class SimState:
    q_robot: np.ndarray
    v_robot: np.ndarray
    q_board: np.ndarray
    v_board: np.ndarray
    t: float = 0.0
    contact_cache: list = field(default_factory=list)

    def copy(self) -> "SimState":
        return SimState(self.q_robot.copy(), self.v_robot.copy(),
                        self.q_board.copy(), self.v_board.copy(),
                        self.t, list(self.contact_cache))

    def check(self):
        for name, arr in (("q_robot", self.q_robot), ("v_robot", self.v_robot),
                          ("q_board", self.q_board), ("v_board", self.v_board)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        for name, q in (("q_robot", self.q_robot), ("q_board", self.q_board)):
            if abs(np.linalg.norm(q[3:7]) - 1.0) > 1e-9:
                raise ValueError(f"{name} root quaternion not unit-norm")
        if self.t < 0:
            raise ValueError("t must be >= 0")

    def snapshot(self) -> dict:
        """Trajectory-frame JSON form (shared with divergence reports)."""
        return {
            "t": self.t,
            "q_robot": [float(x) for x in self.q_robot],
            "v_robot": [float(x) for x in self.v_robot],
            "q_board": [float(x) for x in self.q_board],
            "v_board": [float(x) for x in self.v_board],
        }


class DivergenceError(RuntimeError):
    """The integrator produced a non-finite state; carries the last valid
    state snapshot in trajectory-frame schema for replay."""

    def __init__(self, snapshot: dict):
        self.snapshot = snapshot
        super().__init__("dynamics diverged: " + json.dumps(
            {k: snapshot[k] for k in ("t",)}))


class World:
    """Compiled tree tables plus scratch buffers for the kernel calls.

    One World may be shared across threads for read-only tables, but each
    concurrent stepping stream needs its own scratch (`World.fork()`).
    """

    def __init__(self, params: ModelParams, mat: ContactMaterial | None = None):
        self.params = params
        self.mat = mat or ContactMaterial()
        self.robot_tree = build_robot_tree(params)
        self.board_tree = build_skateboard_tree(params)
        self.tables = compile_world(self.robot_tree, self.board_tree, params,
                                    self.mat.k_c, self.mat.b_c, self.mat.v_eps)
        self._alloc()

    def _alloc(self):
        nb_r = len(self.robot_tree.bodies)
        nb_b = len(self.board_tree.bodies)
        self.rs = K.alloc_tree_scratch(nb_r, self.robot_tree.nv)
        self.bs = K.alloc_tree_scratch(nb_b, self.board_tree.nv)
        self.con = K.alloc_contact_scratch()
        self.foot_fn = np.zeros(3)

    def fork(self) -> "World":
        w = World.__new__(World)
        w.params = self.params
        w.mat = self.mat
        w.robot_tree = self.robot_tree
        w.board_tree = self.board_tree
        w.tables = self.tables
        w._alloc()
        return w

    def nominal_board_q(self, x: float = 0.0, y: float = 0.0) -> np.ndarray:
        """Deck resting pose with all four wheels exactly on the ground."""
        s = self.params.skateboard
        z = s.deck_thickness / 2 + s.truck_drop + s.hanger_drop + s.wheel_radius
        q = np.zeros(self.board_tree.nq)
        q[0], q[1], q[2] = x, y, z
        q[3] = 1.0
        return q

    @property
    def deck_top_z(self) -> float:
        s = self.params.skateboard
        return s.deck_thickness + s.truck_drop + s.hanger_drop + s.wheel_radius


_world_cache: dict = {}


def _get_world(params: ModelParams, mat: ContactMaterial) -> World:
    key = (json.dumps(params.to_dict(), sort_keys=True), mat.k_c, mat.b_c, mat.v_eps)
    w = _world_cache.get(key)
    if w is None:
        w = World(params, mat)
        _world_cache[key] = w
    return w


# ---------------------------------------------------------------------------
# Tree-level operations (oracle surface)

_tree_cache: dict = {}


def _tables_for(tree: KinematicTree):
    key = id(tree)
    hit = _tree_cache.get(key)
    if hit is None or hit[0] is not tree:
        tt = compile_tree(tree)
        scr = K.alloc_tree_scratch(len(tree.bodies), tree.nv)
        hit = (tree, tt, scr)
        _tree_cache[key] = hit
    return hit[1], hit[2]


def _check_q(tree: KinematicTree, q: np.ndarray):
    q = np.asarray(q, dtype=float)
    if q.shape != (tree.nq,):
        raise ValueError(f"q must have shape ({tree.nq},)")
    if not np.all(np.isfinite(q)):
        raise ValueError("q contains non-finite values")
    if abs(np.linalg.norm(q[3:7]) - 1.0) > 1e-9:
        raise ValueError("root quaternion not unit-norm")
    return q


def _check_v(tree: KinematicTree, v: np.ndarray):
    v = np.asarray(v, dtype=float)
    if v.shape != (tree.nv,):
        raise ValueError(f"v must have shape ({tree.nv},)")
    if not np.all(np.isfinite(v)):
        raise ValueError("v contains non-finite values")
    return v


def mass_matrix(tree: KinematicTree, q) -> np.ndarray:
    """Joint-space inertia matrix via the composite-rigid-body pass."""
    q = _check_q(tree, q)
    tt, scr = _tables_for(tree)
    M = np.zeros((tree.nv, tree.nv))
    K._fk(tt, q, scr)
    K._crba(tt, q, scr, M)
    return M


def bias_forces(tree: KinematicTree, q, v, gravity: float = GRAVITY) -> np.ndarray:
    """Coriolis + centrifugal + gravity generalized forces (recursive
    Newton-Euler with zero joint acceleration): M a = tau + f_ext - bias."""
    q = _check_q(tree, q)
    v = _check_v(tree, v)
    tt, scr = _tables_for(tree)
    bias = np.zeros(tree.nv)
    K._fk(tt, q, scr)
    K._rnea_bias(tt, q, v, gravity, scr, bias)
    return bias


def energy(tree: KinematicTree, q, v, gravity: float = GRAVITY) -> float:
    """Kinetic + gravitational potential energy (z = 0 datum), computed from
    per-body world kinematics, independent of the CRBA/ABA code paths."""
    q = _check_q(tree, q)
    v = _check_v(tree, v)
    tt, scr = _tables_for(tree)
    K._fk(tt, q, scr)
    K._world_vels(tt, q, v, scr)
    ke, pe = K._energy(tt, scr, gravity)
    return float(ke + pe)


def momentum(tree: KinematicTree, q, v) -> np.ndarray:
    """World-origin spatial momentum (angular(3), linear(3))."""
    q = _check_q(tree, q)
    v = _check_v(tree, v)
    tt, scr = _tables_for(tree)
    K._fk(tt, q, scr)
    K._world_vels(tt, q, v, scr)
    h = np.zeros(6)
    K._momentum(tt, scr, h)
    return h


# ---------------------------------------------------------------------------
# Contacts


def _snapshot_contacts(world: World, state: SimState) -> list:
    t = world.tables
    K._fk(t.robot, state.q_robot, world.rs)
    K._world_vels(t.robot, state.q_robot, state.v_robot, world.rs)
    K._fk(t.board, state.q_board, world.bs)
    K._world_vels(t.board, state.q_board, state.v_board, world.bs)
    nc = K._contacts(t, world.rs, world.bs, world.con, 0,
                     world.rs.w6b, world.bs.w6b, world.foot_fn, 0.002)
    out = []
    c = world.con
    for i in range(nc):
        out.append(ActiveContact(
            pair=_PAIR_NAMES[int(c.pair[i])],
            point=c.point[i].copy(),
            normal=c.normal[i].copy(),
            penetration=float(c.pen[i]),
            rel_velocity=c.relv[i].copy(),
            friction_frame=(c.t1[i].copy(), c.t2[i].copy()),
            mu=(float(c.mu[i, 0]), float(c.mu[i, 1])),
            normal_force=float(c.fn[i])))
    return out


def contact_detect(state: SimState, trees=None, params: ModelParams | None = None,
                   mat: ContactMaterial | None = None) -> list:
    """All penetrating contact pairs at `state`. `trees` is accepted for
    signature compatibility; geometry always comes from `params`."""
    state.check()
    params = params or ModelParams()
    mat = mat or ContactMaterial()
    return _snapshot_contacts(_get_world(params, mat), state)


def contact_force(c: ActiveContact, mat: ContactMaterial) -> np.ndarray:
    """World force applied at c.point (a point force carries no couple):
    spring-damper normal force plus regularized Coulomb friction."""
    v_n = float(np.dot(c.rel_velocity, c.normal))
    f_n = max(0.0, mat.k_c * c.penetration - mat.b_c * v_n)
    t1, t2 = c.friction_frame
    f_t1 = -c.mu[0] * f_n * math.tanh(float(np.dot(c.rel_velocity, t1)) / mat.v_eps)
    f_t2 = -c.mu[1] * f_n * math.tanh(float(np.dot(c.rel_velocity, t2)) / mat.v_eps)
    return f_n * np.asarray(c.normal) + f_t1 * np.asarray(t1) + f_t2 * np.asarray(t2)


# ---------------------------------------------------------------------------
# Stepping


def step(state: SimState, tau_actuated, dt: float,
         mat: ContactMaterial | None = None,
         params: ModelParams | None = None,
         world: World | None = None,
         deck_wrench=None) -> SimState:
    """One physics step of both trees under actuated torques and contacts.

    Semi-implicit velocity update, midpoint position update, and an exact
    base-momentum correction from the integrated external impulse. Raises
    DivergenceError (carrying the last valid snapshot) on a non-finite
    result.
    """
    if not (0.0 < dt <= 0.01):
        raise ValueError("dt must be in (0, 0.01]")
    tau = np.asarray(tau_actuated, dtype=float)
    if tau.shape != (12,):
        raise ValueError("tau_actuated must have shape (12,)")
    if not np.all(np.isfinite(tau)):
        raise ValueError("tau_actuated contains non-finite values")
    state.check()
    if world is None:
        world = _get_world(params or ModelParams(), mat or ContactMaterial())
    if deck_wrench is None:
        deck_wrench = np.zeros(6)
    else:
        deck_wrench = np.asarray(deck_wrench, dtype=float)

    nxt = state.copy()
    ok = K._substep(world.tables, nxt.q_robot, nxt.v_robot, nxt.q_board,
                    nxt.v_board, tau, deck_wrench, dt, world.rs, world.bs,
                    world.con, 1, world.foot_fn)
    if not ok:
        raise DivergenceError(state.snapshot())
    nxt.t = state.t + dt
    nxt.contact_cache = _snapshot_contacts(world, nxt)
    return nxt
