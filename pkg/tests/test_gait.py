import numpy as np
import pytest

from boardpush.gait import (GaitClock, GaitSchedule, advance, clock_features,
                            expected_contact)


@pytest.fixture
def clock():
    return GaitClock()


def test_cycle_length(clock):
    assert clock.schedule.cycle == pytest.approx(1.75)


def test_advance_basic(clock):
    assert advance(clock, 0.3).phase_time == pytest.approx(0.3)


def test_advance_wraps():
    c = GaitClock(phase_time=1.70)
    assert advance(c, 0.10).phase_time == pytest.approx(0.05)


def test_advance_zero_is_identity(clock):
    assert advance(clock, 0.0).phase_time == clock.phase_time


def test_advance_composes(clock):
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.uniform(0, 3, 2)
        one = advance(advance(clock, a), b).phase_time
        two = advance(clock, a + b).phase_time
        cyc = clock.schedule.cycle
        assert min(abs(one - two), cyc - abs(one - two)) < 1e-12


def test_left_indicator_plateaus():
    c = GaitClock(phase_time=0.3)
    assert expected_contact(c, "left") == 1.0
    c = GaitClock(phase_time=1.2)
    assert expected_contact(c, "left") == 0.0
    assert expected_contact(c, "right") == 1.0


def test_left_indicator_ramp_midpoint():
    c = GaitClock(phase_time=0.75)
    assert expected_contact(c, "left") == pytest.approx(0.5)


def test_right_indicator_always_one():
    for phase in np.linspace(0, 1.7499, 200):
        assert expected_contact(GaitClock(phase_time=phase), "right") == 1.0


def test_indicator_periodic():
    s = GaitSchedule()
    for phase in np.linspace(0, s.cycle, 37, endpoint=False):
        a = expected_contact(GaitClock(phase_time=phase), "left")
        b = expected_contact(advance(GaitClock(phase_time=phase), s.cycle), "left")
        assert a == pytest.approx(b, abs=1e-12)


def test_left_indicator_integral():
    s = GaitSchedule()
    phases = np.linspace(0, s.cycle, 200001, endpoint=False)
    vals = [expected_contact(GaitClock(phase_time=p), "left") for p in phases]
    integral = np.mean(vals) * s.cycle
    assert abs(integral - s.t_double) <= 2 * s.smooth_width


def test_clock_features_basic():
    assert clock_features(GaitClock(phase_time=0.0)) == pytest.approx((0.0, 1.0))
    c = GaitClock(phase_time=1.75 / 4)
    assert clock_features(c) == pytest.approx((1.0, 0.0), abs=1e-12)


def test_clock_features_unit_circle():
    rng = np.random.default_rng(1)
    for phase in rng.uniform(0, 1.75, 100):
        s, c = clock_features(GaitClock(phase_time=phase))
        assert s * s + c * c == pytest.approx(1.0, abs=1e-12)


def test_schedule_validation():
    with pytest.raises(ValueError):
        GaitSchedule(t_double=0.0)
    with pytest.raises(ValueError):
        GaitSchedule(smooth_width=0.5)
    with pytest.raises(ValueError):
        GaitClock(phase_time=2.0)
