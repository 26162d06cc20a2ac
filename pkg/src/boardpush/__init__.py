"""boardpush: a desk-scale humanoid-skateboarding simulator and PPO trainer.

A reduced 12-DoF humanoid balances on a passive spring-trucked skateboard
and learns a periodic push gait (left foot pushes on the ground, right foot
stays on the deck) from a phase-clocked reward structure.
"""

__version__ = "0.1.0"

from boardpush.model import (
    BodySpec,
    Geom,
    InvalidParameterError,
    JointSpec,
    KinematicTree,
    ModelParams,
    build_robot_tree,
    build_skateboard_tree,
    validate_tree,
)

__all__ = [
    "BodySpec",
    "Geom",
    "InvalidParameterError",
    "JointSpec",
    "KinematicTree",
    "ModelParams",
    "build_robot_tree",
    "build_skateboard_tree",
    "validate_tree",
    "__version__",
]
