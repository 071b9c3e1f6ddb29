"""Deterministic scenario simulator.

World model: platform at the origin of an east/north/up frame in meters;
targets follow piecewise-linear waypoint paths. Cameras see a target when
its direction falls inside their field of view; the steered pair looks
along the platform pose while the fish-eye stares at azimuth 0, elevation
45, covering the platform's whole field of motion.

Detector behaviour is statistical: per (sensor, class, distance-bin) cell
a profile holds precision and recall. Each visible target yields a true
report with probability R per frame, and false reports of that cell's
class arrive as a Poisson stream with rate n*R*(1-P)/P so the realized
precision converges to P. Distance bins follow the detect/recognize/
identify pixel-width borders (15 px and 5 px in the thermal image).

Everything stochastic flows from one scenario seed through per-stream
generators, so runs are bitwise reproducible.
"""

from __future__ import annotations

import enum
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    FISHEYE_MODEL,
    IRCAM_MODEL,
    VCAM_MODEL,
    AngularOffset,
    BoundingBox,
    CameraModel,
    DetectionReport,
    GeoPosition,
    SensorId,
    TargetClass,
    Timestamp,
    ValidationError,
    class_allowed,
    offset_to_pixel,
)
from .fgtracker import GrayFrame

SCENARIO_VERSION = 1

# Fish-eye stare direction: centered on the platform's field of motion.
FISHEYE_BORESIGHT = AngularOffset(0.0, 45.0)

# Default geographic anchor for ENU-to-geodetic conversion (southwest Sweden).
DEFAULT_ORIGIN = GeoPosition(56.6911, 12.8201, 25.0)

MAX_DRONE_RANGE_M = 200.0

DRONE_WIDTH_PRESETS_M = (0.1, 0.3, 0.4)

BIN_CLOSE, BIN_MEDIUM, BIN_DISTANT = "close", "medium", "distant"


def wrap_degrees(angle: float) -> float:
    """Wrap to (-180, 180]."""
    wrapped = (angle + 180.0) % 360.0 - 180.0
    return 180.0 if wrapped == -180.0 else wrapped


@dataclass(frozen=True)
class Transponder:
    """ADS-B identity for a cooperative target."""

    icao: int
    callsign: str
    typecode: int  # identification message typecode
    category: int

    def __post_init__(self):
        if not 0 < self.icao < 1 << 24:
            raise ValidationError(f"icao must be 24-bit: {self.icao}")
        if not 1 <= self.typecode <= 4:
            raise ValidationError(f"identification typecode out of [1,4]: {self.typecode}")


@dataclass(frozen=True)
class SimTarget:
    """One moving object: class, physical width, waypoint path."""

    target_class: TargetClass
    width_m: float
    waypoints: tuple[tuple[float, float, float, float], ...]  # (t_s, x, y, z)
    transponder: Transponder | None = None

    def __post_init__(self):
        if self.width_m <= 0:
            raise ValidationError(f"width_m must be > 0: {self.width_m}")
        times = [w[0] for w in self.waypoints]
        if len(times) < 1 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("waypoint times must be strictly increasing")

    def position(self, t_s: float) -> np.ndarray:
        """Piecewise-linear position; clamped to the endpoint segments."""
        pts = self.waypoints
        if t_s <= pts[0][0]:
            return np.array(pts[0][1:], dtype=np.float64)
        if t_s >= pts[-1][0]:
            return np.array(pts[-1][1:], dtype=np.float64)
        for (t0, *p0), (t1, *p1) in zip(pts, pts[1:]):
            if t0 <= t_s <= t1:
                u = (t_s - t0) / (t1 - t0)
                return (1 - u) * np.array(p0) + u * np.array(p1)
        raise AssertionError("unreachable")


class ClutterKind(str, enum.Enum):
    INSECT = "insect"
    CLOUD_EDGE = "cloud_edge"


# Duration envelopes per clutter kind, milliseconds.
_CLUTTER_DURATION_MS = {
    ClutterKind.INSECT: (1, 200),  # a handful of frames at worst
    ClutterKind.CLOUD_EDGE: (1000, 10_000),
}


@dataclass(frozen=True)
class ClutterEvent:
    """A single-sensor false-detection burst (insect or lit cloud edge)."""

    kind: ClutterKind
    sensor: SensorId
    start_ms: int
    duration_ms: int
    label: TargetClass
    confidence: float

    def __post_init__(self):
        lo, hi = _CLUTTER_DURATION_MS[self.kind]
        if not lo <= self.duration_ms <= hi:
            raise ValidationError(
                f"{self.kind.value} duration {self.duration_ms} ms outside [{lo},{hi}]"
            )
        if not 0 <= self.confidence <= 1:
            raise ValidationError(f"confidence out of [0,1]: {self.confidence}")
        if not class_allowed(self.sensor, self.label):
            raise ValidationError(
                f"clutter on {self.sensor.value} cannot carry label {self.label.value}"
            )

    def active(self, t_ms: Timestamp) -> bool:
        return self.start_ms <= t_ms < self.start_ms + self.duration_ms


@dataclass(frozen=True)
class SensorSuite:
    """Camera geometry and worker cadences for one deployment."""

    ircam: CameraModel = IRCAM_MODEL
    vcam: CameraModel = VCAM_MODEL
    fisheye: CameraModel = FISHEYE_MODEL
    ir_fps: float = 60.0
    v_fps: float = 50.0
    f_fps: float = 30.0
    audio_hz: float = 20.0
    loop_hz: float = 10.0

    def camera(self, sensor: SensorId) -> CameraModel:
        if sensor is SensorId.IRCAM:
            return self.ircam
        if sensor is SensorId.VCAM:
            return self.vcam
        if sensor is SensorId.FCAM:
            return self.fisheye
        raise ValidationError(f"{sensor.value} has no camera model")


@dataclass
class Scenario:
    duration_s: float
    seed: int
    targets: list[SimTarget] = field(default_factory=list)
    clutter: list[ClutterEvent] = field(default_factory=list)
    suite: SensorSuite = SensorSuite()
    origin: GeoPosition = DEFAULT_ORIGIN

    def rng(self, stream: str, index: int = 0) -> np.random.Generator:
        """Independent deterministic generator for one stream and step."""
        key = zlib.crc32(stream.encode())  # stable across processes
        return np.random.default_rng([self.seed, key, index])


# --- geometry ---------------------------------------------------------------


def direction_of(position: np.ndarray) -> tuple[float, float, float]:
    """(azimuth_deg from north/clockwise-as-east, elevation_deg, range_m)."""
    x, y, z = float(position[0]), float(position[1]), float(position[2])
    rng_m = math.sqrt(x * x + y * y + z * z)
    if rng_m == 0:
        raise ValidationError("target at zero range")
    az = math.degrees(math.atan2(x, y))
    el = math.degrees(math.atan2(z, math.hypot(x, y)))
    return az, el, rng_m


def project(
    position: np.ndarray,
    boresight: AngularOffset,
    cam: CameraModel,
    width_m: float,
) -> BoundingBox | None:
    """Bounding box of a target in a camera image, or None when out of view."""
    az, el, rng_m = direction_of(position)
    d_az = wrap_degrees(az - boresight.azimuth_deg)
    d_el = el - boresight.elevation_deg
    if abs(d_az) > cam.hfov_deg / 2 or abs(d_el) > cam.vfov_deg / 2:
        return None
    cx, cy = offset_to_pixel(cam, AngularOffset(d_az, d_el))
    w_px = width_m / (rng_m * math.tan(math.radians(cam.hfov_deg / cam.width_px)))
    h_px = width_m / (rng_m * math.tan(math.radians(cam.vfov_deg / cam.height_px)))
    return BoundingBox(cx - w_px / 2, cy - h_px / 2, w_px, h_px).clamped(cam)


def ir_reference_width_px(width_m: float, range_m: float) -> float:
    """Pixel width in the thermal image; the yardstick for distance bins."""
    if range_m <= 0:
        raise ValidationError(f"range must be > 0: {range_m}")
    deg_per_px = IRCAM_MODEL.hfov_deg / IRCAM_MODEL.width_px
    return width_m / (range_m * math.tan(math.radians(deg_per_px)))


def bin_of_width(width_px: float) -> str:
    """Distance bin from thermal pixel width: >=15 close, >=5 medium."""
    if width_px < 0:
        raise ValidationError(f"width must be >= 0: {width_px}")
    if width_px >= 15.0:
        return BIN_CLOSE
    if width_px >= 5.0:
        return BIN_MEDIUM
    return BIN_DISTANT


# --- detector profiles ------------------------------------------------------


@dataclass(frozen=True)
class ProfileCell:
    """Operating point of one detector on one class in one distance bin."""

    precision: float
    recall: float
    conf_a: float = 8.0  # Beta shape parameters for confidence draws
    conf_b: float = 2.0
    # Odds that a false report is painted over a visible target of another
    # class rather than empty sky; labels and rates are unaffected.
    confusion: tuple[tuple[TargetClass, float], ...] = ()

    def __post_init__(self):
        if not 0 < self.precision <= 1 or not 0 < self.recall <= 1:
            raise ValidationError("precision and recall must lie in (0,1]")


@dataclass
class DetectorProfile:
    """Cells keyed by (sensor, class, bin) for the two primary cameras."""

    cells: dict[tuple[SensorId, TargetClass, str], ProfileCell]

    def cell(self, sensor: SensorId, cls: TargetClass, bin_name: str) -> ProfileCell:
        try:
            return self.cells[(sensor, cls, bin_name)]
        except KeyError:
            raise ValidationError(
                f"no profile cell for ({sensor.value}, {cls.value}, {bin_name})"
            ) from None


# Reference operating points measured for the thermal and visible detectors,
# per class and distance bin: (precision, recall).
THERMAL_OPERATING_POINTS = {
    BIN_CLOSE: {
        TargetClass.AIRPLANE: (0.9197, 0.87367),
        TargetClass.BIRD: (0.7591, 0.85087),
        TargetClass.DRONE: (0.9159, 0.87907),
        TargetClass.HELICOPTER: (0.9993, 0.87927),
    },
    BIN_MEDIUM: {
        TargetClass.AIRPLANE: (0.82817, 0.70397),
        TargetClass.BIRD: (0.50637, 0.70337),
        TargetClass.DRONE: (0.89517, 0.80347),
        TargetClass.HELICOPTER: (0.95547, 0.83557),
    },
    BIN_DISTANT: {
        TargetClass.AIRPLANE: (0.78227, 0.40437),
        TargetClass.BIRD: (0.61617, 0.74317),
        TargetClass.DRONE: (0.82787, 0.48367),
        TargetClass.HELICOPTER: (0.79827, 0.45647),
    },
}

VISIBLE_OPERATING_POINTS = {
    BIN_CLOSE: {
        TargetClass.AIRPLANE: (0.8989, 0.7355),
        TargetClass.BIRD: (0.8284, 0.7949),
        TargetClass.DRONE: (0.8283, 0.9536),
        TargetClass.HELICOPTER: (0.9225, 0.9832),
    },
    BIN_MEDIUM: {
        TargetClass.AIRPLANE: (0.8391, 0.7306),
        TargetClass.BIRD: (0.7186, 0.7830),
        TargetClass.DRONE: (0.7710, 0.7987),
        TargetClass.HELICOPTER: (0.9680, 0.7526),
    },
    BIN_DISTANT: {
        TargetClass.AIRPLANE: (0.7726, 0.7785),
        TargetClass.BIRD: (0.6479, 0.7841),
        TargetClass.DRONE: (0.8378, 0.5519),
        TargetClass.HELICOPTER: (0.6631, 0.5171),
    },
}


def default_profile() -> DetectorProfile:
    """Both cameras calibrated to their reference operating points."""
    cells = {}
    for sensor, table in (
        (SensorId.IRCAM, THERMAL_OPERATING_POINTS),
        (SensorId.VCAM, VISIBLE_OPERATING_POINTS),
    ):
        for bin_name, by_class in table.items():
            for cls, (p, r) in by_class.items():
                cells[(sensor, cls, bin_name)] = ProfileCell(p, r)
    return DetectorProfile(cells)


# --- per-frame detection sampling -------------------------------------------


@dataclass(frozen=True)
class VisibleTarget:
    """A target inside one camera's field of view on one frame."""

    target_class: TargetClass
    bin: str
    bbox: BoundingBox
    offset: AngularOffset


def visible_targets(
    scenario: Scenario, sensor: SensorId, pose_az_el: AngularOffset, t_ms: Timestamp
) -> list[VisibleTarget]:
    """All scenario targets visible to a camera at time t.

    The steered cameras look along the supplied pose; the fish-eye ignores
    it and stares at its fixed mount direction.
    """
    cam = scenario.suite.camera(sensor)
    boresight = FISHEYE_BORESIGHT if sensor is SensorId.FCAM else pose_az_el
    out = []
    for target in scenario.targets:
        pos = target.position(t_ms / 1000.0)
        bbox = project(pos, boresight, cam, target.width_m)
        if bbox is None or bbox.area == 0:
            continue
        az, el, rng_m = direction_of(pos)
        out.append(
            VisibleTarget(
                target_class=target.target_class,
                bin=bin_of_width(ir_reference_width_px(target.width_m, rng_m)),
                bbox=bbox,
                offset=AngularOffset(
                    wrap_degrees(az - boresight.azimuth_deg), el - boresight.elevation_deg
                ),
            )
        )
    return out


def _draw_confidence(rng: np.random.Generator, cell: ProfileCell) -> float:
    """Beta(8,2) rescaled onto [0.5, 1]: always above the report threshold."""
    return 0.5 + 0.5 * float(rng.beta(cell.conf_a, cell.conf_b))


_FP_SIZE_RANGES = {BIN_CLOSE: (15.0, 40.0), BIN_MEDIUM: (5.0, 15.0), BIN_DISTANT: (2.0, 5.0)}


def _false_bbox(
    rng: np.random.Generator,
    cam: CameraModel,
    bin_name: str,
    avoid: list[BoundingBox],
) -> BoundingBox:
    """Random plausible box that stays clear of the real targets."""
    lo, hi = _FP_SIZE_RANGES[bin_name]
    for _ in range(10):
        w = float(rng.uniform(lo, hi))
        x = float(rng.uniform(0, max(cam.width_px - w, 1)))
        y = float(rng.uniform(0, max(cam.height_px - w, 1)))
        box = BoundingBox(x, y, w, w)
        if all(_iou(box, other) < 0.2 for other in avoid):
            return box
    return box


def _iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def sample_detections(
    profile: DetectorProfile,
    sensor: SensorId,
    visible: list[VisibleTarget],
    rng: np.random.Generator,
    t_ms: Timestamp,
    cam: CameraModel,
    worker_fps: float = 0.0,
) -> list[DetectionReport]:
    """Statistical detector output for one frame.

    True reports fire per target with the cell's recall; false reports of
    each (class, bin) present arrive as a Poisson stream tuned so realized
    precision converges to the cell's value.
    """
    reports: list[DetectionReport] = []
    groups: dict[tuple[TargetClass, str], int] = {}
    for v in visible:
        groups[(v.target_class, v.bin)] = groups.get((v.target_class, v.bin), 0) + 1

    for v in visible:
        cell = profile.cell(sensor, v.target_class, v.bin)
        if rng.random() >= cell.recall:
            continue
        # Mild localization jitter; boxes stay well above the IoU gate.
        w = v.bbox.w * float(rng.normal(1.0, 0.03))
        h = v.bbox.h * float(rng.normal(1.0, 0.03))
        cx = v.bbox.cx + float(rng.normal(0.0, 0.03 * v.bbox.w))
        cy = v.bbox.cy + float(rng.normal(0.0, 0.03 * v.bbox.h))
        bbox = BoundingBox(cx - w / 2, cy - h / 2, max(w, 0.5), max(h, 0.5)).clamped(cam)
        reports.append(
            DetectionReport(
                sensor=sensor,
                t=t_ms,
                label=v.target_class,
                confidence=_draw_confidence(rng, cell),
                offset=v.offset,
                bbox=bbox,
                worker_fps=worker_fps,
            )
        )

    true_boxes = [v.bbox for v in visible]
    for (cls, bin_name), count in sorted(groups.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        cell = profile.cell(sensor, cls, bin_name)
        rate = count * cell.recall * (1.0 - cell.precision) / cell.precision
        for _ in range(int(rng.poisson(rate))):
            reports.append(
                DetectionReport(
                    sensor=sensor,
                    t=t_ms,
                    label=cls,
                    confidence=_draw_confidence(rng, cell),
                    offset=None,
                    bbox=_false_bbox(rng, cam, bin_name, true_boxes),
                    worker_fps=worker_fps,
                )
            )
    return reports


def clutter_reports(
    scenario: Scenario, sensor: SensorId, t_ms: Timestamp, worker_fps: float = 0.0
) -> list[DetectionReport]:
    """Reports produced by active clutter events on this sensor only."""
    out = []
    for event in scenario.clutter:
        if event.sensor is sensor and event.active(t_ms):
            out.append(
                DetectionReport(
                    sensor=sensor,
                    t=t_ms,
                    label=event.label,
                    confidence=event.confidence,
                    worker_fps=worker_fps,
                )
            )
    return out


# --- synthetic sensor data ---------------------------------------------------


def synth_fisheye_frame(
    scenario: Scenario, t_ms: Timestamp, rng: np.random.Generator
) -> GrayFrame:
    """Fish-eye view: noisy flat background plus bright target discs."""
    cam = scenario.suite.fisheye
    img = rng.normal(64.0, 2.0, size=(cam.height_px, cam.width_px))
    for target in scenario.targets:
        pos = target.position(t_ms / 1000.0)
        bbox = project(pos, FISHEYE_BORESIGHT, cam, target.width_m)
        if bbox is None or bbox.area == 0:
            continue
        radius = max(bbox.w, 2.0) / 2.0
        yy, xx = np.ogrid[: cam.height_px, : cam.width_px]
        disc = (xx - bbox.cx) ** 2 + (yy - bbox.cy) ** 2 <= radius**2
        img[disc] = 200.0
    return GrayFrame(cam.width_px, cam.height_px, np.clip(img, 0, 255).astype(np.uint8))


def synth_audio(cls: TargetClass, seconds: float, rng: np.random.Generator) -> np.ndarray:
    """Synthetic sound for one audio class, peak-normalized to 0.5.

    Drone: a jittered harmonic stack on a 150-250 Hz fundamental.
    Helicopter: a 12-20 Hz pulse train through low-passed noise.
    Background: pink noise.
    """
    n = int(round(seconds * 44100))
    t = np.arange(n) / 44100.0
    if cls is TargetClass.DRONE:
        f0 = float(rng.uniform(150.0, 250.0))
        # slowly-varying fractional frequency jitter
        drift = np.interp(
            np.arange(n), np.linspace(0, n, 32), rng.normal(0.0, 0.01, size=32)
        )
        phase = 2 * np.pi * np.cumsum(f0 * (1.0 + drift)) / 44100.0
        sig = sum(np.sin(k * phase) / k for k in range(1, 7))
    elif cls is TargetClass.HELICOPTER:
        rate = float(rng.uniform(12.0, 20.0))
        period = int(44100 / rate)
        pulses = np.zeros(n)
        pulses[::period] = 1.0
        noise = rng.normal(0.0, 1.0, size=n)
        kernel = np.hanning(256)
        smooth = np.convolve(noise, kernel / kernel.sum(), mode="same")
        body = np.convolve(pulses, np.hanning(512), mode="same")
        sig = body * (1.0 + 0.5 * smooth)
    elif cls is TargetClass.BACKGROUND:
        spectrum = np.fft.rfft(rng.normal(0.0, 1.0, size=n))
        freqs = np.fft.rfftfreq(n, d=1 / 44100.0)
        shaping = np.where(freqs > 0, 1.0 / np.sqrt(np.maximum(freqs, 1.0)), 0.0)
        sig = np.fft.irfft(spectrum * shaping, n=n)
    else:
        raise ValidationError(f"no audio signature for class {cls.value}")
    peak = np.max(np.abs(sig))
    return 0.5 * sig / peak if peak > 0 else sig


def audible_class(scenario: Scenario, t_ms: Timestamp) -> TargetClass:
    """What the microphone hears: drones beat helicopters beat silence."""
    present = set()
    for target in scenario.targets:
        if target.waypoints[0][0] * 1000 <= t_ms <= target.waypoints[-1][0] * 1000:
            present.add(target.target_class)
    if TargetClass.DRONE in present:
        return TargetClass.DRONE
    if TargetClass.HELICOPTER in present:
        return TargetClass.HELICOPTER
    return TargetClass.BACKGROUND


# --- scenario (de)serialization ----------------------------------------------


def _camera_to_json(cam: CameraModel) -> dict:
    return {
        "width_px": cam.width_px,
        "height_px": cam.height_px,
        "hfov_deg": cam.hfov_deg,
        "vfov_deg": cam.vfov_deg,
    }


def _camera_from_json(raw: dict) -> CameraModel:
    return CameraModel(
        int(raw["width_px"]), int(raw["height_px"]),
        float(raw["hfov_deg"]), float(raw["vfov_deg"]),
    )


def scenario_to_json(scenario: Scenario) -> str:
    doc = {
        "scenario_version": SCENARIO_VERSION,
        "duration_s": scenario.duration_s,
        "seed": scenario.seed,
        "origin": {
            "lat_deg": scenario.origin.lat_deg,
            "lon_deg": scenario.origin.lon_deg,
            "alt_m": scenario.origin.alt_m,
        },
        "suite": {
            "ircam": _camera_to_json(scenario.suite.ircam),
            "vcam": _camera_to_json(scenario.suite.vcam),
            "fisheye": _camera_to_json(scenario.suite.fisheye),
            "ir_fps": scenario.suite.ir_fps,
            "v_fps": scenario.suite.v_fps,
            "f_fps": scenario.suite.f_fps,
            "audio_hz": scenario.suite.audio_hz,
            "loop_hz": scenario.suite.loop_hz,
        },
        "targets": [
            {
                "class": tgt.target_class.value,
                "width_m": tgt.width_m,
                "waypoints": [list(w) for w in tgt.waypoints],
                "transponder": (
                    None
                    if tgt.transponder is None
                    else {
                        "icao": tgt.transponder.icao,
                        "callsign": tgt.transponder.callsign,
                        "typecode": tgt.transponder.typecode,
                        "category": tgt.transponder.category,
                    }
                ),
            }
            for tgt in scenario.targets
        ],
        "clutter": [
            {
                "kind": ev.kind.value,
                "sensor": ev.sensor.value,
                "start_ms": ev.start_ms,
                "duration_ms": ev.duration_ms,
                "label": ev.label.value,
                "confidence": ev.confidence,
            }
            for ev in scenario.clutter
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    version = doc.get("scenario_version")
    if version != SCENARIO_VERSION:
        raise ValidationError(f"unsupported scenario_version: {version}")
    suite_raw = doc.get("suite", {})
    suite = SensorSuite(
        ircam=_camera_from_json(suite_raw["ircam"]) if "ircam" in suite_raw else IRCAM_MODEL,
        vcam=_camera_from_json(suite_raw["vcam"]) if "vcam" in suite_raw else VCAM_MODEL,
        fisheye=(
            _camera_from_json(suite_raw["fisheye"]) if "fisheye" in suite_raw else FISHEYE_MODEL
        ),
        ir_fps=float(suite_raw.get("ir_fps", 60.0)),
        v_fps=float(suite_raw.get("v_fps", 50.0)),
        f_fps=float(suite_raw.get("f_fps", 30.0)),
        audio_hz=float(suite_raw.get("audio_hz", 20.0)),
        loop_hz=float(suite_raw.get("loop_hz", 10.0)),
    )
    origin_raw = doc.get("origin")
    origin = (
        GeoPosition(origin_raw["lat_deg"], origin_raw["lon_deg"], origin_raw["alt_m"])
        if origin_raw
        else DEFAULT_ORIGIN
    )
    targets = []
    for raw in doc.get("targets", []):
        trans = raw.get("transponder")
        targets.append(
            SimTarget(
                target_class=TargetClass(raw["class"]),
                width_m=float(raw["width_m"]),
                waypoints=tuple(tuple(float(v) for v in w) for w in raw["waypoints"]),
                transponder=(
                    None
                    if trans is None
                    else Transponder(
                        int(trans["icao"]),
                        trans["callsign"],
                        int(trans["typecode"]),
                        int(trans["category"]),
                    )
                ),
            )
        )
    clutter = [
        ClutterEvent(
            kind=ClutterKind(raw["kind"]),
            sensor=SensorId(raw["sensor"]),
            start_ms=int(raw["start_ms"]),
            duration_ms=int(raw["duration_ms"]),
            label=TargetClass(raw["label"]),
            confidence=float(raw["confidence"]),
        )
        for raw in doc.get("clutter", [])
    ]
    return Scenario(
        duration_s=float(doc["duration_s"]),
        seed=int(doc["seed"]),
        targets=targets,
        clutter=clutter,
        suite=suite,
        origin=origin,
    )


def load_scenario(path: Path) -> Scenario:
    return scenario_from_json(Path(path).read_text())


def save_scenario(scenario: Scenario, path: Path) -> None:
    Path(path).write_text(scenario_to_json(scenario))


def enu_to_geo(origin: GeoPosition, position: np.ndarray) -> GeoPosition:
    """Flat-earth east/north/up meters to geodetic degrees around the origin."""
    x, y, z = float(position[0]), float(position[1]), float(position[2])
    lat = origin.lat_deg + y / 111_320.0
    lon = origin.lon_deg + x / (111_320.0 * math.cos(math.radians(origin.lat_deg)))
    return GeoPosition(lat, lon, origin.alt_m + z)
