"""Pan/tilt platform control: source arbitration, slewing, search patterns.

All operations are pure functions of (pose, inputs); the main loop owns
the pose. Motion limits are pan +/-90 and tilt 0..90 degrees, matching
the fish-eye coverage the platform has to service. Servo output is the
conventional 1000-2000 us hobby pulse range.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

from .core import AngularOffset, Timestamp, ValidationError

PAN_MIN, PAN_MAX = -90.0, 90.0
TILT_MIN, TILT_MAX = 0.0, 90.0

RASTER_TILT_STEP = 15.0
SWEEP_TILT = 20.0


class ControlSource(str, enum.Enum):
    IRCAM = "ircam"
    VCAM = "vcam"
    FCAM = "fcam"
    PATTERN = "pattern"
    MANUAL = "manual"


class SearchPattern(str, enum.Enum):
    RASTER = "raster"  # pan sweeps at tilt steps of 15 degrees
    SWEEP = "sweep"  # full pan sweep at fixed tilt 20 degrees


@dataclass(frozen=True)
class PlatformPose:
    pan_deg: float
    tilt_deg: float

    def __post_init__(self):
        if not PAN_MIN <= self.pan_deg <= PAN_MAX:
            raise ValidationError(f"pan out of limits: {self.pan_deg}")
        if not TILT_MIN <= self.tilt_deg <= TILT_MAX:
            raise ValidationError(f"tilt out of limits: {self.tilt_deg}")


@dataclass(frozen=True)
class ControllerParams:
    gain: float = 0.5
    max_rate_dps: float = 60.0
    hold_ms: int = 1000
    idle_to_search_ms: int = 5000

    def __post_init__(self):
        if not 0 < self.gain <= 1:
            raise ValidationError(f"gain out of (0,1]: {self.gain}")
        if self.max_rate_dps <= 0:
            raise ValidationError(f"max_rate must be > 0: {self.max_rate_dps}")
        if self.hold_ms <= 0 or self.idle_to_search_ms <= 0:
            raise ValidationError("hold/idle times must be > 0")


@dataclass(frozen=True)
class PatternState:
    """Progress through a search pattern: sweep direction and tilt goal.

    tilt_target is None until the first step seeds it from the pose, so a
    pattern can take over smoothly from wherever tracking left the platform.
    """

    direction: int = 1  # +1 toward PAN_MAX
    tilt_target: float | None = None

    def __post_init__(self):
        if self.direction not in (-1, 1):
            raise ValidationError(f"direction must be +/-1: {self.direction}")


# Classifying sensors outrank the motion-only fish-eye cue; IR leads since
# it works day and night.
_STEERING_PRIORITY = (ControlSource.IRCAM, ControlSource.VCAM, ControlSource.FCAM)


def arbitrate(
    last_seen: Mapping[ControlSource, Timestamp],
    now: Timestamp,
    params: ControllerParams,
    manual: bool = False,
) -> ControlSource:
    """Pick the single source controlling the servos this tick.

    Manual overrides everything. Otherwise the highest-priority steering
    source with a report inside hold_ms wins. With no fresh source the
    platform holds on the most recent reporter until idle_to_search_ms of
    silence, after which the search pattern takes over.
    """
    if manual:
        return ControlSource.MANUAL
    for source in _STEERING_PRIORITY:
        t = last_seen.get(source)
        if t is not None and 0 <= now - t <= params.hold_ms:
            return source
    recent = [
        (t, source)
        for source in _STEERING_PRIORITY
        if (t := last_seen.get(source)) is not None and now - t < params.idle_to_search_ms
    ]
    if recent:
        newest_t = max(t for t, _ in recent)
        for source in _STEERING_PRIORITY:  # tie on timestamp -> priority order
            if (newest_t, source) in recent:
                return source
    return ControlSource.PATTERN


def _clamp(value: float, lo: float, hi: float) -> float:
    return min(max(value, lo), hi)


def step_toward(
    pose: PlatformPose, offset: AngularOffset, dt_s: float, params: ControllerParams
) -> PlatformPose:
    """Proportional slew toward an angular offset, rate-limited per axis."""
    if dt_s <= 0:
        raise ValidationError(f"dt must be > 0: {dt_s}")
    max_step = params.max_rate_dps * dt_s
    dpan = _clamp(params.gain * offset.azimuth_deg, -max_step, max_step)
    dtilt = _clamp(params.gain * offset.elevation_deg, -max_step, max_step)
    return PlatformPose(
        _clamp(pose.pan_deg + dpan, PAN_MIN, PAN_MAX),
        _clamp(pose.tilt_deg + dtilt, TILT_MIN, TILT_MAX),
    )


def pattern_next(
    pattern: SearchPattern,
    pose: PlatformPose,
    dt_s: float,
    params: ControllerParams,
    state: PatternState = PatternState(),
) -> tuple[PlatformPose, PatternState]:
    """Advance one step along the search pattern at max slew rate.

    Raster: pan oscillates between the limits; hitting an end selects the
    next 15-degree tilt line (wrapping back to the horizon past the top).
    Sweep: the same pan oscillation at a fixed 20-degree tilt. Tilt moves
    toward its line rate-limited like every other motion, so pattern
    handover never teleports the platform.
    """
    if dt_s <= 0:
        raise ValidationError(f"dt must be > 0: {dt_s}")
    step = params.max_rate_dps * dt_s
    direction = state.direction
    if pattern is SearchPattern.SWEEP:
        tilt_target = SWEEP_TILT
    elif state.tilt_target is None:
        # seed the raster on the nearest line at or below the current tilt
        tilt_target = RASTER_TILT_STEP * int(pose.tilt_deg // RASTER_TILT_STEP)
    else:
        tilt_target = state.tilt_target

    pan = pose.pan_deg + direction * step
    if direction > 0 and pan >= PAN_MAX:
        pan = PAN_MAX
        direction = -1
        if pattern is SearchPattern.RASTER:
            tilt_target += RASTER_TILT_STEP
    elif direction < 0 and pan <= PAN_MIN:
        pan = PAN_MIN
        direction = 1
        if pattern is SearchPattern.RASTER:
            tilt_target += RASTER_TILT_STEP
    if tilt_target > TILT_MAX:
        tilt_target = TILT_MIN  # restart the raster from the horizon

    tilt = pose.tilt_deg + _clamp(tilt_target - pose.tilt_deg, -step, step)
    return (
        PlatformPose(pan, _clamp(tilt, TILT_MIN, TILT_MAX)),
        PatternState(direction, tilt_target),
    )


def pose_to_pulse(pose: PlatformPose) -> tuple[float, float]:
    """Linear servo pulse map: pan -90..+90 and tilt 0..90 onto 1000..2000 us."""
    pan_us = 1000.0 + (pose.pan_deg - PAN_MIN) / (PAN_MAX - PAN_MIN) * 1000.0
    tilt_us = 1000.0 + (pose.tilt_deg - TILT_MIN) / (TILT_MAX - TILT_MIN) * 1000.0
    return pan_us, tilt_us
