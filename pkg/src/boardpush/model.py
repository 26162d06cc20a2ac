"""Kinematic tree construction for the reduced humanoid and the skateboard.

Two independent floating-base trees: a pelvis-rooted biped whose upper body
is lumped into the pelvis (12 actuated leg joints, nv=18) and a deck-rooted
skateboard with two raked spring-loaded truck joints (nv=8, fully passive).
All quantities are SI; body frames are z-up, x-forward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

MODEL_SCHEMA = 1

# Leg joint order, left leg then right leg. Fixed: indexes actions, torques
# and the joint-limit table everywhere downstream.
LEG_JOINT_NAMES = [
    "l_hip_yaw", "l_hip_roll", "l_hip_pitch", "l_knee", "l_ankle_pitch", "l_ankle_roll",
    "r_hip_yaw", "r_hip_roll", "r_hip_pitch", "r_knee", "r_ankle_pitch", "r_ankle_roll",
]

_LEG_AXES = {
    "hip_yaw": (0.0, 0.0, 1.0),
    "hip_roll": (1.0, 0.0, 0.0),
    "hip_pitch": (0.0, 1.0, 0.0),
    "knee": (0.0, 1.0, 0.0),
    "ankle_pitch": (0.0, 1.0, 0.0),
    "ankle_roll": (1.0, 0.0, 0.0),
}


class InvalidParameterError(ValueError):
    """A physical parameter violates its invariant; carries the field name."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class Geom:
    """Collision primitive attached to a body.

    kind: "sphere" (size=(r,)), "box" (size=(hx,hy,hz) half extents) or
    "capsule" (size=(r, half_len)). `role` tags task-specific surfaces:
    foot_sole_left / foot_sole_right / wheel_front / wheel_rear / deck.
    """

    kind: str
    size: tuple
    pos: tuple = (0.0, 0.0, 0.0)
    role: str = ""


@dataclass(frozen=True, eq=False)
class BodySpec:
    name: str
    mass: float
    inertia: np.ndarray          # 3x3 about the CoM, body frame
    com_offset: np.ndarray       # CoM position in the body frame
    geometry: tuple = ()


@dataclass(frozen=True, eq=False)
class JointSpec:
    """Joint connecting `parent` to `child`; `origin` is the child frame
    position in the parent frame. free6 joints root a tree (parent="world")."""

    name: str
    kind: str                    # "free6" | "revolute"
    parent: str
    child: str
    origin: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    limits: tuple | None = None  # (lo, hi) rad, revolute only
    stiffness: float = 0.0       # N·m/rad
    damping: float = 0.0         # N·m·s/rad
    actuated: bool = False


@dataclass(frozen=True, eq=False)
class KinematicTree:
    bodies: tuple
    joints: tuple
    nq: int
    nv: int

    @property
    def total_mass(self) -> float:
        return float(sum(b.mass for b in self.bodies))

    def body_index(self, name: str) -> int:
        for i, b in enumerate(self.bodies):
            if b.name == name:
                return i
        raise KeyError(name)


def make_tree(bodies, joints) -> KinematicTree:
    n_rev = sum(1 for j in joints if j.kind == "revolute")
    return KinematicTree(bodies=tuple(bodies), joints=tuple(joints),
                         nq=7 + n_rev, nv=6 + n_rev)


# ---------------------------------------------------------------------------
# Parameters


@dataclass
class RobotParams:
    thigh_len: float = 0.38
    shank_len: float = 0.38
    ankle_height: float = 0.07       # ankle joint to sole
    hip_spacing: float = 0.09        # pelvis center to hip, lateral
    foot_len: float = 0.24
    foot_width: float = 0.10
    foot_forward: float = 0.04       # foot box center ahead of ankle
    pelvis_mass: float = 47.4        # pelvis + lumped torso/arms/head
    torso_com_height: float = 0.20   # lumped upper-body CoM above pelvis
    hip_yaw_mass: float = 1.0
    hip_roll_mass: float = 1.2
    thigh_mass: float = 7.5
    shank_mass: float = 4.0
    ankle_mass: float = 0.8
    foot_mass: float = 1.8
    # (lo, hi) rad per leg joint; mirrored for both legs.
    joint_limits: dict = field(default_factory=lambda: {
        "hip_yaw": (-0.7, 0.7),
        "hip_roll": (-0.5, 0.5),
        "hip_pitch": (-1.8, 0.8),
        "knee": (0.0, 2.2),
        "ankle_pitch": (-1.3, 0.8),
        "ankle_roll": (-0.5, 0.5),
    })


@dataclass
class SkateboardParams:
    deck_mass: float = 2.0
    deck_len: float = 0.70
    deck_width: float = 0.20
    deck_thickness: float = 0.024
    truck_mass: float = 0.85         # hanger + axle + both wheels, each end
    truck_rake: float = math.pi / 4  # pivot-axis rake angle λ
    truck_stiffness: float = 20.0    # N·m/rad
    truck_damping: float = 0.5       # N·m·s/rad
    wheelbase: float = 0.40          # truck pivot to truck pivot
    truck_drop: float = 0.03         # deck underside to pivot
    hanger_drop: float = 0.025       # pivot to axle
    wheel_radius: float = 0.03
    wheel_spacing: float = 0.07      # axle center to wheel, lateral


@dataclass
class FrictionParams:
    mu_ground_foot: float = 0.8
    mu_deck_foot: float = 1.2        # grip tape: must exceed mu_ground_foot
    mu_wheel_lat: float = 0.9
    # Coulomb decel in the rolling direction is mu*g; free rolling over a
    # couple of seconds needs this tiny.
    mu_wheel_roll: float = 0.001


@dataclass
class ModelParams:
    robot: RobotParams = field(default_factory=RobotParams)
    skateboard: SkateboardParams = field(default_factory=SkateboardParams)
    friction: FrictionParams = field(default_factory=FrictionParams)

    def validate(self) -> list:
        """All parameter diagnostics, one string per violation."""
        out = []
        r, s, f = self.robot, self.skateboard, self.friction
        positive = [
            ("robot.thigh_len", r.thigh_len), ("robot.shank_len", r.shank_len),
            ("robot.ankle_height", r.ankle_height), ("robot.hip_spacing", r.hip_spacing),
            ("robot.foot_len", r.foot_len), ("robot.foot_width", r.foot_width),
            ("robot.pelvis_mass", r.pelvis_mass), ("robot.hip_yaw_mass", r.hip_yaw_mass),
            ("robot.hip_roll_mass", r.hip_roll_mass), ("robot.thigh_mass", r.thigh_mass),
            ("robot.shank_mass", r.shank_mass), ("robot.ankle_mass", r.ankle_mass),
            ("robot.foot_mass", r.foot_mass),
            ("skateboard.deck_mass", s.deck_mass), ("skateboard.deck_len", s.deck_len),
            ("skateboard.deck_width", s.deck_width),
            ("skateboard.deck_thickness", s.deck_thickness),
            ("skateboard.truck_mass", s.truck_mass),
            ("skateboard.truck_stiffness", s.truck_stiffness),
            ("skateboard.wheelbase", s.wheelbase),
            ("skateboard.wheel_radius", s.wheel_radius),
            ("skateboard.wheel_spacing", s.wheel_spacing),
            ("skateboard.truck_drop", s.truck_drop),
            ("skateboard.hanger_drop", s.hanger_drop),
        ]
        for name, val in positive:
            if not (val > 0.0 and math.isfinite(val)):
                out.append(f"{name}: must be > 0, got {val}")
        if s.truck_damping < 0.0:
            out.append(f"skateboard.truck_damping: must be >= 0, got {s.truck_damping}")
        if not (0.0 < s.truck_rake < math.pi / 2):
            out.append(f"skateboard.truck_rake: must be in (0, pi/2), got {s.truck_rake}")
        if not (f.mu_deck_foot > f.mu_ground_foot):
            out.append(
                "friction.mu_deck_foot: grip tape must exceed ground friction "
                f"({f.mu_deck_foot} <= {f.mu_ground_foot})")
        for mu_name in ("mu_ground_foot", "mu_deck_foot", "mu_wheel_lat", "mu_wheel_roll"):
            if getattr(f, mu_name) < 0.0:
                out.append(f"friction.{mu_name}: must be >= 0")
        for jn, lims in r.joint_limits.items():
            if jn not in _LEG_AXES:
                out.append(f"robot.joint_limits.{jn}: unknown joint")
            elif not lims[0] < lims[1]:
                out.append(f"robot.joint_limits.{jn}: lo must be < hi, got {lims}")
        return out

    def check(self):
        """Raise InvalidParameterError on the first violated invariant."""
        diags = self.validate()
        if diags:
            name, _, msg = diags[0].partition(": ")
            raise InvalidParameterError(name, msg)

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "robot": {**{k: v for k, v in self.robot.__dict__.items() if k != "joint_limits"},
                      "joint_limits": {k: list(v) for k, v in self.robot.joint_limits.items()}},
            "skateboard": dict(self.skateboard.__dict__),
            "friction": dict(self.friction.__dict__),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        if d.get("schema") != MODEL_SCHEMA:
            raise InvalidParameterError("schema", f"expected {MODEL_SCHEMA}, got {d.get('schema')!r}")
        robot = RobotParams()
        for k, v in d.get("robot", {}).items():
            if k == "joint_limits":
                robot.joint_limits = {jk: tuple(jv) for jk, jv in v.items()}
            elif hasattr(robot, k):
                setattr(robot, k, float(v))
            else:
                raise InvalidParameterError(f"robot.{k}", "unknown field")
        skate = SkateboardParams()
        for k, v in d.get("skateboard", {}).items():
            if not hasattr(skate, k):
                raise InvalidParameterError(f"skateboard.{k}", "unknown field")
            setattr(skate, k, float(v))
        fric = FrictionParams()
        for k, v in d.get("friction", {}).items():
            if not hasattr(fric, k):
                raise InvalidParameterError(f"friction.{k}", "unknown field")
            setattr(fric, k, float(v))
        return cls(robot=robot, skateboard=skate, friction=fric)

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load_json(cls, path) -> "ModelParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Tree builders


def _box_inertia(mass, hx, hy, hz):
    return np.diag([
        mass * (hy * hy + hz * hz) / 3.0,
        mass * (hx * hx + hz * hz) / 3.0,
        mass * (hx * hx + hy * hy) / 3.0,
    ])


def _rod_inertia_z(mass, length, radius):
    # solid cylinder along -z
    ixx = mass * (3 * radius * radius + length * length) / 12.0
    izz = mass * radius * radius / 2.0
    return np.diag([ixx, ixx, izz])


def build_robot_tree(params: ModelParams) -> KinematicTree:
    """Pelvis-rooted biped: free6 base, 6 revolute joints per leg, all 12
    actuated. The upper body is a lumped mass offset above the pelvis."""
    params.check()
    r = params.robot

    pelvis_inertia = np.diag([1.5, 1.3, 0.5]) + np.diag([0.05, 0.08, 0.09])
    bodies = [BodySpec(
        name="pelvis", mass=r.pelvis_mass, inertia=pelvis_inertia,
        com_offset=np.array([0.0, 0.0, r.torso_com_height]))]
    joints = [JointSpec(name="base", kind="free6", parent="world", child="pelvis")]

    half_thick = r.ankle_height / 2.0
    for side, sgn in (("l", 1.0), ("r", -1.0)):
        chain = [
            # (joint suffix, child body, origin in parent, mass, com, inertia)
            ("hip_yaw", f"{side}_hip_yaw_link", (0.0, sgn * r.hip_spacing, 0.0),
             r.hip_yaw_mass, (0.0, 0.0, -0.02), np.diag([0.01, 0.01, 0.01])),
            ("hip_roll", f"{side}_hip_roll_link", (0.0, 0.0, 0.0),
             r.hip_roll_mass, (0.0, 0.0, -0.02), np.diag([0.01, 0.01, 0.01])),
            ("hip_pitch", f"{side}_thigh", (0.0, 0.0, 0.0),
             r.thigh_mass, (0.0, 0.0, -r.thigh_len / 2),
             _rod_inertia_z(r.thigh_mass, r.thigh_len, 0.06)),
            ("knee", f"{side}_shank", (0.0, 0.0, -r.thigh_len),
             r.shank_mass, (0.0, 0.0, -r.shank_len / 2),
             _rod_inertia_z(r.shank_mass, r.shank_len, 0.045)),
            ("ankle_pitch", f"{side}_ankle_link", (0.0, 0.0, -r.shank_len),
             r.ankle_mass, (0.0, 0.0, 0.0), np.diag([0.003, 0.003, 0.003])),
            ("ankle_roll", f"{side}_foot", (0.0, 0.0, 0.0),
             r.foot_mass, (r.foot_forward, 0.0, -r.ankle_height + half_thick),
             _box_inertia(r.foot_mass, r.foot_len / 2, r.foot_width / 2, half_thick)),
        ]
        parent = "pelvis"
        for suffix, child, origin, mass, com, inertia in chain:
            geom = ()
            if suffix == "ankle_roll":
                geom = (Geom(
                    kind="box",
                    size=(r.foot_len / 2, r.foot_width / 2, half_thick),
                    pos=(r.foot_forward, 0.0, -r.ankle_height + half_thick),
                    role=f"foot_sole_{'left' if side == 'l' else 'right'}"),)
            bodies.append(BodySpec(
                name=child, mass=mass, inertia=inertia,
                com_offset=np.asarray(com, dtype=float), geometry=geom))
            joints.append(JointSpec(
                name=f"{side}_{suffix}", kind="revolute", parent=parent, child=child,
                origin=origin, axis=_LEG_AXES[suffix],
                limits=tuple(r.joint_limits[suffix]), actuated=True))
            parent = child

    return make_tree(bodies, joints)


def build_skateboard_tree(params: ModelParams) -> KinematicTree:
    """Deck-rooted board: free6 deck, two raked passive truck joints with
    spring/damper, each hanger carrying two wheel contact spheres."""
    params.check()
    s = params.skateboard

    hx, hy, hz = s.deck_len / 2, s.deck_width / 2, s.deck_thickness / 2
    deck = BodySpec(
        name="deck", mass=s.deck_mass, inertia=_box_inertia(s.deck_mass, hx, hy, hz),
        com_offset=np.zeros(3),
        geometry=(Geom(kind="box", size=(hx, hy, hz), role="deck"),))
    bodies = [deck]
    joints = [JointSpec(name="deck_base", kind="free6", parent="world", child="deck")]

    lam = s.truck_rake
    for tag, sgn in (("front", 1.0), ("rear", -1.0)):
        axis = (sgn * math.cos(lam), 0.0, math.sin(lam))
        # hanger as two wheel-point masses plus an axle core
        m_w = 0.3 * s.truck_mass
        m_core = s.truck_mass - 2 * m_w
        d2 = s.wheel_spacing ** 2 + s.hanger_drop ** 2
        hanger_inertia = np.diag([
            2 * m_w * d2 + m_core * 1e-4,
            2 * m_w * s.hanger_drop ** 2 + m_core * 1e-4 + 5e-4,
            2 * m_w * s.wheel_spacing ** 2 + m_core * 1e-4 + 5e-4,
        ])
        wheels = tuple(
            Geom(kind="sphere", size=(s.wheel_radius,),
                 pos=(0.0, wy, -s.hanger_drop), role=f"wheel_{tag}")
            for wy in (s.wheel_spacing, -s.wheel_spacing))
        bodies.append(BodySpec(
            name=f"{tag}_hanger", mass=s.truck_mass, inertia=hanger_inertia,
            com_offset=np.array([0.0, 0.0, -s.hanger_drop / 2]), geometry=wheels))
        joints.append(JointSpec(
            name=f"{tag}_truck", kind="revolute", parent="deck", child=f"{tag}_hanger",
            origin=(sgn * s.wheelbase / 2, 0.0, -hz - s.truck_drop),
            axis=axis, stiffness=s.truck_stiffness, damping=s.truck_damping))

    return make_tree(bodies, joints)


# ---------------------------------------------------------------------------
# Validation


def validate_tree(tree: KinematicTree) -> list:
    """Structural and physical diagnostics; empty list means the tree is valid."""
    diags = []
    body_names = [b.name for b in tree.bodies]
    if len(set(body_names)) != len(body_names):
        diags.append("duplicate body names")

    for b in tree.bodies:
        if not (b.mass > 0.0 and math.isfinite(b.mass)):
            diags.append(f"body {b.name}: mass must be > 0")
        inert = np.asarray(b.inertia, dtype=float)
        if inert.shape != (3, 3):
            diags.append(f"body {b.name}: inertia must be 3x3")
            continue
        if not np.allclose(inert, inert.T, atol=1e-12):
            diags.append(f"body {b.name}: inertia not symmetric")
        elif np.linalg.eigvalsh(inert).min() <= 0.0:
            diags.append(f"body {b.name}: inertia not positive-definite")
        for g in b.geometry:
            if g.kind not in ("sphere", "box", "capsule"):
                diags.append(f"body {b.name}: unknown geom kind {g.kind!r}")
            elif any(sz <= 0 for sz in g.size):
                diags.append(f"body {b.name}: geom sizes must be > 0")

    roots = [j for j in tree.joints if j.kind == "free6"]
    if len(roots) != 1:
        diags.append(f"expected exactly 1 free6 root joint, found {len(roots)}")
    for j in roots:
        if j.stiffness != 0.0:
            diags.append(f"joint {j.name}: free6 joints must have zero stiffness")
        if j.actuated:
            diags.append(f"joint {j.name}: free6 joints cannot be actuated")

    # Tree structure: each body has exactly one incoming joint; parents must
    # be reachable from the root without revisiting (cycle check).
    children = {}
    for j in tree.joints:
        if j.child in children:
            diags.append(f"cycle at joint {j.name}")
        children[j.child] = j
    for name in body_names:
        if name not in children:
            diags.append(f"body {name} has no incoming joint")
    seen = set()
    for name in body_names:
        trail = []
        cur = name
        while cur != "world":
            if cur in trail:
                diags.append(f"cycle at joint {children[cur].name}")
                break
            trail.append(cur)
            j = children.get(cur)
            if j is None:
                break
            if j.parent != "world" and j.parent not in body_names:
                diags.append(f"joint {j.name}: unknown parent {j.parent}")
                break
            cur = j.parent
        seen.add(name)

    n_rev = 0
    for j in tree.joints:
        if j.kind == "revolute":
            n_rev += 1
            ax = np.asarray(j.axis, dtype=float)
            if abs(np.linalg.norm(ax) - 1.0) > 1e-9:
                diags.append(f"joint {j.name}: axis not unit-norm")
            if j.limits is not None and not j.limits[0] < j.limits[1]:
                diags.append(f"joint {j.name}: limits lo must be < hi")
        elif j.kind != "free6":
            diags.append(f"joint {j.name}: unknown kind {j.kind!r}")

    if tree.nv != 6 + n_rev:
        diags.append(f"nv must be 6 + #revolute = {6 + n_rev}, got {tree.nv}")
    if tree.nq != 7 + n_rev:
        diags.append(f"nq must be 7 + #revolute = {7 + n_rev}, got {tree.nq}")
    return diags
