import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skyfence.core import AngularOffset, ValidationError
from skyfence.platform import (
    PAN_MAX,
    PAN_MIN,
    TILT_MAX,
    TILT_MIN,
    ControllerParams,
    ControlSource,
    PatternState,
    PlatformPose,
    SearchPattern,
    arbitrate,
    pattern_next,
    pose_to_pulse,
    step_toward,
)

P = ControllerParams()


def test_arbitrate_priority_ir_over_fcam():
    last = {ControlSource.IRCAM: 800, ControlSource.FCAM: 950}
    assert arbitrate(last, 1000, P) is ControlSource.IRCAM


def test_arbitrate_fcam_alone():
    assert arbitrate({ControlSource.FCAM: 900}, 1000, P) is ControlSource.FCAM


def test_arbitrate_pattern_after_idle():
    last = {ControlSource.IRCAM: 0, ControlSource.VCAM: 0, ControlSource.FCAM: 0}
    assert arbitrate(last, 6000, P) is ControlSource.PATTERN


def test_arbitrate_holds_most_recent_before_idle():
    last = {ControlSource.VCAM: 1000}
    # stale for steering (> hold_ms) but not yet idle: hold on vcam
    assert arbitrate(last, 3000, P) is ControlSource.VCAM


def test_arbitrate_no_reports_means_pattern():
    assert arbitrate({}, 0, P) is ControlSource.PATTERN


def test_arbitrate_manual_overrides():
    last = {ControlSource.IRCAM: 990}
    assert arbitrate(last, 1000, P, manual=True) is ControlSource.MANUAL


def test_arbitrate_total_and_deterministic():
    import itertools

    stamps = [None, 0, 500, 950]
    for combo in itertools.product(stamps, repeat=3):
        last = {
            src: t
            for src, t in zip((ControlSource.IRCAM, ControlSource.VCAM, ControlSource.FCAM), combo)
            if t is not None
        }
        first = arbitrate(last, 1000, P)
        assert first is arbitrate(last, 1000, P)
        assert isinstance(first, ControlSource)


def test_step_toward_zero_offset():
    pose = PlatformPose(10.0, 20.0)
    assert step_toward(pose, AngularOffset(0, 0), 0.1, P) == pose


def test_step_toward_proportional():
    pose = step_toward(PlatformPose(0, 0), AngularOffset(4.0, 0.0), 10.0, P)
    assert pose.pan_deg == pytest.approx(2.0)  # gain 0.5, rate not binding


def test_step_toward_clamps_at_limit():
    pose = step_toward(PlatformPose(90.0, 0.0), AngularOffset(10.0, 0.0), 10.0, P)
    assert pose.pan_deg == 90.0


def test_step_toward_rate_limit():
    pose = step_toward(PlatformPose(0, 0), AngularOffset(80.0, -80.0), 0.1, P)
    assert pose.pan_deg == pytest.approx(6.0)  # 60 deg/s * 0.1 s
    assert pose.tilt_deg == 0.0  # clamped at tilt floor


def test_step_toward_rejects_bad_dt():
    with pytest.raises(ValidationError):
        step_toward(PlatformPose(0, 0), AngularOffset(0, 0), 0.0, P)


def test_closed_loop_geometric_convergence():
    # static target at a fixed angle; perfect observations each tick
    target_pan = 20.0
    pose = PlatformPose(0.0, 0.0)
    offset = target_pan - pose.pan_deg
    ticks = 0
    while abs(offset) >= 0.1:
        pose = step_toward(pose, AngularOffset(offset, 0.0), 0.1, P)
        new_offset = target_pan - pose.pan_deg
        if abs(offset) * P.gain <= P.max_rate_dps * 0.1:
            assert abs(new_offset) == pytest.approx(abs(offset) * (1 - P.gain), abs=1e-9)
        offset = new_offset
        ticks += 1
        assert ticks < 100
    assert ticks <= 10  # sub-second at 10 Hz


def test_raster_turns_and_steps_tilt_at_limit():
    pose = PlatformPose(PAN_MAX, 0.0)
    state = PatternState(direction=1, tilt_target=0.0)
    new_pose, new_state = pattern_next(SearchPattern.RASTER, pose, 0.1, P, state)
    assert new_state.direction == -1
    assert new_state.tilt_target == 15.0
    assert new_pose.pan_deg == PAN_MAX


def test_raster_wraps_tilt_to_horizon():
    pose = PlatformPose(PAN_MAX, 90.0)
    state = PatternState(direction=1, tilt_target=90.0)
    _, new_state = pattern_next(SearchPattern.RASTER, pose, 0.1, P, state)
    assert new_state.tilt_target == TILT_MIN


def test_sweep_keeps_tilt_constant():
    pose = PlatformPose(0.0, 20.0)
    state = PatternState()
    for _ in range(1000):
        pose, state = pattern_next(SearchPattern.SWEEP, pose, 0.1, P, state)
        assert pose.tilt_deg == 20.0
        assert PAN_MIN <= pose.pan_deg <= PAN_MAX


def test_pattern_rate_bound():
    pose = PlatformPose(0.0, 40.0)
    state = PatternState()
    step = P.max_rate_dps * 0.1
    for _ in range(500):
        new_pose, state = pattern_next(SearchPattern.RASTER, pose, 0.1, P, state)
        assert abs(new_pose.pan_deg - pose.pan_deg) <= step + 1e-9
        assert abs(new_pose.tilt_deg - pose.tilt_deg) <= step + 1e-9
        pose = new_pose


def test_pattern_covers_tilt_lines():
    pose = PlatformPose(0.0, 0.0)
    state = PatternState()
    seen = set()
    for _ in range(4000):
        pose, state = pattern_next(SearchPattern.RASTER, pose, 0.1, P, state)
        seen.add(state.tilt_target)
    assert {0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0} <= seen


def test_pose_to_pulse_endpoints_and_center():
    assert pose_to_pulse(PlatformPose(0.0, 45.0)) == (1500.0, 1500.0)
    assert pose_to_pulse(PlatformPose(-90.0, 0.0)) == (1000.0, 1000.0)
    assert pose_to_pulse(PlatformPose(90.0, 90.0)) == (2000.0, 2000.0)


def test_pose_validation():
    with pytest.raises(ValidationError):
        PlatformPose(91.0, 0.0)
    with pytest.raises(ValidationError):
        PlatformPose(0.0, -1.0)


@given(
    st.lists(
        st.tuples(st.floats(-200, 200), st.floats(-200, 200), st.booleans()),
        min_size=1,
        max_size=60,
    )
)
@settings(max_examples=60)
def test_pose_always_within_limits(commands):
    pose = PlatformPose(0.0, 45.0)
    state = PatternState()
    for az, el, use_pattern in commands:
        if use_pattern:
            pose, state = pattern_next(SearchPattern.RASTER, pose, 0.1, P, state)
        else:
            pose = step_toward(pose, AngularOffset(az, el), 0.1, P)
        assert PAN_MIN <= pose.pan_deg <= PAN_MAX
        assert TILT_MIN <= pose.tilt_deg <= TILT_MAX


@given(
    st.floats(-100, 100), st.floats(-100, 100),
    st.floats(-80, 80), st.floats(10, 80),
    st.floats(0.01, 0.5),
)
@settings(max_examples=100)
def test_slew_rate_bound_all_inputs(az, el, pan0, tilt0, dt):
    pose = PlatformPose(pan0, tilt0)
    new = step_toward(pose, AngularOffset(az, el), dt, P)
    bound = P.max_rate_dps * dt + 1e-9
    assert abs(new.pan_deg - pose.pan_deg) <= bound
    assert abs(new.tilt_deg - pose.tilt_deg) <= bound
