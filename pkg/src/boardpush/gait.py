"""Cyclic gait-phase clock and per-foot expected-contact indicators.

One cycle = 0.75 s double support (left foot on the ground, right on the
deck) followed by 1.0 s single support (left foot swings, right stays on
the deck). The right-foot indicator is therefore identically 1; the
left-foot indicator is a ramped square wave.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GaitSchedule:
    t_double: float = 0.75
    t_single: float = 1.0
    smooth_width: float = 0.05  # ramp half-width, s

    def __post_init__(self):
        if not (self.t_double > 0 and self.t_single > 0):
            raise ValueError("phase durations must be > 0")
        if not (0 <= self.smooth_width < min(self.t_double, self.t_single) / 2):
            raise ValueError("smooth_width must be in [0, min(phase)/2)")

    @property
    def cycle(self) -> float:
        return self.t_double + self.t_single


def left_indicator(phase, t_double: float, cycle: float, w: float):
    """Expected left-foot contact over phase time(s); array friendly.

    1 on the double-support window, 0 on single support, linear ramps of
    full width 2w centered on the transition at t_double and on the wrap.
    """
    phase = np.asarray(phase, dtype=float) % cycle
    if w == 0.0:
        val = np.where(phase < t_double, 1.0, 0.0)
        return val if val.ndim else float(val)
    down = np.clip((t_double + w - phase) / (2.0 * w), 0.0, 1.0)
    val = np.where(phase < cycle - w, down, (phase - (cycle - w)) / (2.0 * w))
    val = np.where(phase < w, 0.5 + phase / (2.0 * w), val)
    return val if val.ndim else float(val)


def expected_contact_value(phase, foot: str, t_double: float, cycle: float,
                           w: float):
    if foot == "right":
        arr = np.ones_like(np.asarray(phase, dtype=float))
        return arr if arr.ndim else 1.0
    if foot == "left":
        return left_indicator(phase, t_double, cycle, w)
    raise ValueError(f"unknown foot {foot!r}")


@dataclass
class GaitClock:
    schedule: GaitSchedule = field(default_factory=GaitSchedule)
    phase_time: float = 0.0

    def __post_init__(self):
        if not (0 <= self.phase_time < self.schedule.cycle):
            raise ValueError("phase_time must be in [0, cycle)")


def advance(clock: GaitClock, dt: float) -> GaitClock:
    if dt < 0:
        raise ValueError("dt must be >= 0")
    return GaitClock(schedule=clock.schedule,
                     phase_time=(clock.phase_time + dt) % clock.schedule.cycle)


def expected_contact(clock: GaitClock, foot: str) -> float:
    s = clock.schedule
    return float(expected_contact_value(clock.phase_time, foot, s.t_double,
                                        s.cycle, s.smooth_width))


def clock_features(clock: GaitClock) -> tuple:
    """Unit-circle phase encoding, injective over one cycle."""
    a = 2.0 * math.pi * clock.phase_time / clock.schedule.cycle
    return (math.sin(a), math.cos(a))
