"""Scalar closed forms shared by the Python API and the numba kernels."""

import math


def steer_angle(deck_roll: float, rake: float) -> float:
    """Wheel steer produced by deck roll through a truck raked by `rake`.

    Positive roll leans the deck toward its right edge; positive steer turns
    the rolling direction toward that same side (front truck gets +steer,
    rear truck -steer, measured clockwise from above).
    """
    return math.atan(math.sin(rake) * math.tan(deck_roll))


def truck_torque(angle: float, rate: float, k_t: float, b_t: float) -> float:
    """Restoring spring/damper torque of a truck joint."""
    return -k_t * angle - b_t * rate
