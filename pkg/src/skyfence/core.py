"""Shared domain vocabulary: target classes, sensors, geometry and time.

Everything here is an immutable value type, safe to copy across threads
and queues. Timestamps are engine-monotonic integer milliseconds, never
wall-clock, so simulated runs replay deterministically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class TargetClass(str, enum.Enum):
    AIRPLANE = "airplane"
    BIRD = "bird"
    DRONE = "drone"
    HELICOPTER = "helicopter"
    BACKGROUND = "background"
    NO_DATA = "no_data"


class SensorId(str, enum.Enum):
    IRCAM = "ircam"
    VCAM = "vcam"
    FCAM = "fcam"
    AUDIO = "audio"
    ADSB = "adsb"


# Classes a target can actually be; background/no_data are sensor-level
# "nothing to report" statements, never a fused system output.
FUSABLE_CLASSES = (
    TargetClass.AIRPLANE,
    TargetClass.BIRD,
    TargetClass.DRONE,
    TargetClass.HELICOPTER,
)

# Which sensor may emit which class. The fish-eye camera cues motion but
# never classifies, so it has no row entries at all.
_ALLOWED: dict[SensorId, frozenset[TargetClass]] = {
    SensorId.IRCAM: frozenset(FUSABLE_CLASSES),
    SensorId.VCAM: frozenset(FUSABLE_CLASSES),
    SensorId.FCAM: frozenset(),
    SensorId.AUDIO: frozenset(
        {TargetClass.DRONE, TargetClass.HELICOPTER, TargetClass.BACKGROUND}
    ),
    SensorId.ADSB: frozenset(
        {
            TargetClass.AIRPLANE,
            TargetClass.DRONE,
            TargetClass.HELICOPTER,
            TargetClass.NO_DATA,
        }
    ),
}

Timestamp = int  # monotonic milliseconds since engine start


def class_allowed(sensor: SensorId, label: TargetClass) -> bool:
    """True iff this sensor is permitted to emit this class label."""
    return label in _ALLOWED[sensor]


class ValidationError(ValueError):
    """A value violates a domain invariant (bad field range, label, ...)."""


@dataclass(frozen=True)
class CameraModel:
    """Image geometry of one camera: resolution plus angular coverage."""

    width_px: int
    height_px: int
    hfov_deg: float
    vfov_deg: float

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1:
            raise ValidationError(f"camera resolution must be >= 1, got "
                                  f"{self.width_px}x{self.height_px}")
        if not 0 < self.hfov_deg <= 360:
            raise ValidationError(f"hfov_deg out of (0, 360]: {self.hfov_deg}")
        if not 0 < self.vfov_deg <= 180:
            raise ValidationError(f"vfov_deg out of (0, 180]: {self.vfov_deg}")


# The physical suite: FLIR Boson-class IR imager, camcorder set to match the
# IR field of view, and the wide fish-eye cueing camera.
IRCAM_MODEL = CameraModel(320, 256, 24.0, 19.0)
VCAM_MODEL = CameraModel(1280, 720, 24.0, 19.0)
FISHEYE_MODEL = CameraModel(1024, 768, 180.0, 90.0)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box, x/y top-left."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValidationError(f"box extent must be >= 0, got w={self.w} h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2

    @property
    def cy(self) -> float:
        return self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def clamped(self, cam: CameraModel) -> "BoundingBox":
        """Clip to the camera's image extent."""
        x0 = min(max(self.x, 0.0), cam.width_px)
        y0 = min(max(self.y, 0.0), cam.height_px)
        x1 = min(max(self.x + self.w, 0.0), cam.width_px)
        y1 = min(max(self.y + self.h, 0.0), cam.height_px)
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class AngularOffset:
    """Signed degrees from a camera boresight; elevation positive upward."""

    azimuth_deg: float
    elevation_deg: float


@dataclass(frozen=True)
class GeoPosition:
    lat_deg: float
    lon_deg: float
    alt_m: float

    def __post_init__(self):
        if not -90 <= self.lat_deg <= 90:
            raise ValidationError(f"latitude out of range: {self.lat_deg}")
        if not -180 < self.lon_deg <= 180:
            raise ValidationError(f"longitude out of range: {self.lon_deg}")


@dataclass(frozen=True)
class DetectionReport:
    """One sensor's classified observation, as delivered over a queue."""

    sensor: SensorId
    t: Timestamp
    label: TargetClass
    confidence: float
    offset: AngularOffset | None = None
    bbox: BoundingBox | None = None
    worker_fps: float = 0.0

    def __post_init__(self):
        if not class_allowed(self.sensor, self.label):
            raise ValidationError(
                f"sensor {self.sensor.value} may not emit {self.label.value}"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence out of [0,1]: {self.confidence}")
        if self.worker_fps < 0:
            raise ValidationError(f"worker_fps must be >= 0: {self.worker_fps}")


def pixel_to_offset(cam: CameraModel, x_px: float, y_px: float) -> AngularOffset:
    """Map an image pixel to angles off boresight.

    Linear (equirectangular) mapping for all cameras including the
    fish-eye; y grows downward so elevation flips sign.
    """
    if not 0 <= x_px <= cam.width_px or not 0 <= y_px <= cam.height_px:
        raise ValidationError(
            f"pixel ({x_px},{y_px}) outside {cam.width_px}x{cam.height_px} image"
        )
    az = (x_px / cam.width_px - 0.5) * cam.hfov_deg
    el = (0.5 - y_px / cam.height_px) * cam.vfov_deg
    return AngularOffset(az, el)


def offset_to_pixel(cam: CameraModel, offset: AngularOffset) -> tuple[float, float]:
    """Inverse of pixel_to_offset; rejects angles outside the camera FoV."""
    if abs(offset.azimuth_deg) > cam.hfov_deg / 2 or abs(offset.elevation_deg) > cam.vfov_deg / 2:
        raise ValidationError(f"offset {offset} outside camera field of view")
    x = (offset.azimuth_deg / cam.hfov_deg + 0.5) * cam.width_px
    y = (0.5 - offset.elevation_deg / cam.vfov_deg) * cam.height_px
    return x, y
