"""System orchestration: workers, queues, the 10 Hz main loop, log, replay.

The engine mirrors a main-script-plus-workers architecture: each sensor
worker runs at its own cadence and pushes value messages into a bounded
drop-oldest queue; the main loop drains every queue at 10 Hz, runs fusion
and platform arbitration, and emits exactly one snapshot per tick.

Two execution modes share the same engine and workers. The virtual
scheduler interleaves worker steps and main ticks on one thread in strict
(time, priority) order, making runs bit-reproducible from (scenario,
seed, command script). The live runner puts each worker on a real thread
against the wall clock for soak tests and the telemetry server.

The event log is JSON-lines, append-only and replayable: every inbound
message and applied command is recorded with the tick that consumed it,
so a replay re-drives the main loop into a byte-identical snapshot
stream.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field, replace
from heapq import heappop, heappush
from typing import Callable, Iterable

import numpy as np

from . import airdata
from .acoustics import (
    AUDIO_CLASSES,
    BUFFER_SAMPLES,
    AudioRingBuffer,
    CentroidModel,
    MfccConfig,
    classify_buffer,
    featurize,
    mfcc,
)
from .airdata import AdsbDecoder, AircraftState, HistorySample, nmea_parse
from .core import (
    AngularOffset,
    DetectionReport,
    GeoPosition,
    SensorId,
    TargetClass,
    Timestamp,
    ValidationError,
    pixel_to_offset,
)
from .fgtracker import (
    GmmBackgroundModel,
    GmmParams,
    KalmanTracker,
    TrackerParams,
    best_track,
    extract_blobs,
    track_direction,
)
from .fusion import CLASSIFYING_SENSORS, FusedDecision, FusionConfig, FusionState, decide, ingest
from .platform import (
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
from .simkit import (
    FISHEYE_BORESIGHT,
    DetectorProfile,
    Scenario,
    clutter_reports,
    default_profile,
    enu_to_geo,
    sample_detections,
    synth_audio,
    synth_fisheye_frame,
    visible_targets,
)

QUEUE_CAPACITY = 1024
KT_PER_MPS = 1.0 / 0.514444


class ReplayError(ValueError):
    """Event log is malformed or out of order."""


class BoundedQueue:
    """Thread-safe drop-oldest queue; droppage is counted, never silent."""

    def __init__(self, capacity: int = QUEUE_CAPACITY):
        self.capacity = capacity
        self._items: list = []
        self._lock = threading.Lock()
        self.dropped = 0

    def put(self, item) -> None:
        with self._lock:
            self._items.append(item)
            if len(self._items) > self.capacity:
                overflow = len(self._items) - self.capacity
                del self._items[:overflow]
                self.dropped += overflow

    def drain(self) -> list:
        with self._lock:
            items, self._items = self._items, []
            return items

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


# --- worker messages ----------------------------------------------------------


@dataclass(frozen=True)
class CueMessage:
    """Fish-eye tracker output: where the best-tracked object is."""

    t: Timestamp
    offset: AngularOffset  # relative to the fish-eye boresight
    track_id: int
    worker_fps: float


@dataclass(frozen=True)
class AdsbCurrent:
    t: Timestamp
    tracks: tuple[AircraftState, ...]


@dataclass(frozen=True)
class AdsbHistory:
    t: Timestamp
    icao: int
    sample: HistorySample


@dataclass(frozen=True)
class WorkerCommand:
    worker: SensorId
    action: str  # run | idle | configure
    payload: dict | None = None

    def __post_init__(self):
        if self.action not in ("run", "idle", "configure"):
            raise ValidationError(f"unknown worker action: {self.action}")


@dataclass(frozen=True)
class WorkerAck:
    worker: SensorId
    action: str
    worker_fps: float
    t: Timestamp


# --- workers -------------------------------------------------------------------


class Worker:
    """Base: command handling, run/idle state, nominal fps reporting."""

    def __init__(self, sensor: SensorId, rate_hz: float):
        self.sensor = sensor
        self.rate_hz = rate_hz
        self.out: BoundedQueue = BoundedQueue()
        self.commands: BoundedQueue = BoundedQueue()
        self.acks: BoundedQueue | None = None  # wired by the engine
        self.running = True
        self._step_count = 0

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.rate_hz

    @property
    def fps(self) -> float:
        return self.rate_hz if self.running else 0.0

    def submit(self, command: WorkerCommand) -> None:
        self.commands.put(command)

    def step(self, now: Timestamp) -> None:
        for command in self.commands.drain():
            if command.action == "run":
                self.running = True
            elif command.action == "idle":
                self.running = False
            elif command.action == "configure":
                self.configure(command.payload or {})
            if self.acks is not None:
                self.acks.put(WorkerAck(self.sensor, command.action, self.fps, now))
        if self.running:
            self.produce(now)
        self._step_count += 1

    def configure(self, payload: dict) -> None:
        pass

    def produce(self, now: Timestamp) -> None:
        raise NotImplementedError


class CameraWorker(Worker):
    """Statistical detector for the thermal or visible camera."""

    def __init__(
        self,
        sensor: SensorId,
        scenario: Scenario,
        profile: DetectorProfile,
        pose_provider: Callable[[], AngularOffset],
    ):
        rate = scenario.suite.ir_fps if sensor is SensorId.IRCAM else scenario.suite.v_fps
        super().__init__(sensor, rate)
        self.scenario = scenario
        self.profile = profile
        self.pose_provider = pose_provider
        self._frame = 0

    def produce(self, now: Timestamp) -> None:
        pose = self.pose_provider()
        visible = visible_targets(self.scenario, self.sensor, pose, now)
        rng = self.scenario.rng(self.sensor.value, self._frame)
        cam = self.scenario.suite.camera(self.sensor)
        reports = sample_detections(
            self.profile, self.sensor, visible, rng, now, cam, worker_fps=self.fps
        )
        reports += clutter_reports(self.scenario, self.sensor, now, worker_fps=self.fps)
        for report in reports:
            self.out.put(report)
        self._frame += 1


class FcamWorker(Worker):
    """Fish-eye pipeline: synthetic frames, background model, tracker."""

    def __init__(self, scenario: Scenario, min_blob_area: int = 4):
        super().__init__(SensorId.FCAM, scenario.suite.f_fps)
        self.scenario = scenario
        cam = scenario.suite.fisheye
        self.cam = cam
        self.model = GmmBackgroundModel(cam.width_px, cam.height_px, GmmParams())
        self.tracker = KalmanTracker(TrackerParams())
        self.min_blob_area = min_blob_area
        self._frame = 0

    def produce(self, now: Timestamp) -> None:
        frame = synth_fisheye_frame(self.scenario, now, self.scenario.rng("fcam", self._frame))
        self._frame += 1
        mask = self.model.update(frame)
        blobs = extract_blobs(mask, self.min_blob_area)
        tracks = self.tracker.step(blobs)
        best = best_track(tracks)
        if best is None:
            return
        track = next(tr for tr in tracks if tr.id == best)
        x, y = track.position
        if not (0 <= x <= self.cam.width_px and 0 <= y <= self.cam.height_px):
            return
        self.out.put(
            CueMessage(
                t=now,
                offset=track_direction(track, self.cam),
                track_id=best,
                worker_fps=self.fps,
            )
        )


class AudioWorker(Worker):
    """Rolling-buffer classifier over the scenario's synthesized soundscape."""

    TRAIN_CLIPS_PER_CLASS = 8

    def __init__(self, scenario: Scenario):
        super().__init__(SensorId.AUDIO, scenario.suite.audio_hz)
        self.scenario = scenario
        self.ring = AudioRingBuffer()
        self.cfg = MfccConfig()
        self.model = self._train()
        self._streams = {
            cls: synth_audio(cls, scenario.duration_s + 2.0, scenario.rng("audio-" + cls.value))
            for cls in AUDIO_CLASSES
        }
        self._cursor = 0

    def _train(self) -> CentroidModel:
        samples: dict[TargetClass, list[np.ndarray]] = {}
        for i, cls in enumerate(AUDIO_CLASSES):
            feats = []
            for k in range(self.TRAIN_CLIPS_PER_CLASS):
                rng = self.scenario.rng(f"audio-train-{cls.value}", k)
                feats.append(featurize(mfcc(synth_audio(cls, 1.0, rng), self.cfg)))
            samples[cls] = feats
        return CentroidModel().fit(samples)

    def produce(self, now: Timestamp) -> None:
        from .simkit import audible_class

        cls = audible_class(self.scenario, now)
        chunk = int(round(self.period_ms * 44.1))  # samples per tick
        stream = self._streams[cls]
        start = self._cursor % max(stream.size - chunk, 1)
        self.ring.push(stream[start : start + chunk])
        self._cursor += chunk
        if not self.ring.full:
            return
        label, confidence = classify_buffer(self.model, self.ring.snapshot(), self.cfg)
        self.out.put(
            DetectionReport(
                sensor=SensorId.AUDIO,
                t=now,
                label=label,
                confidence=confidence,
                worker_fps=self.fps,
            )
        )


class AdsbWorker(Worker):
    """Generates wire frames for transponder targets and decodes them back.

    Cooperative targets emit position/velocity messages twice a second and
    an identification burst every five; everything runs through the real
    frame codec, so the decode path is exercised end to end. Current
    tracks and fresh history samples leave on separate queues, and a
    fusable categorized aircraft also votes as a detection with
    confidence 1.0.
    """

    POSITION_PERIOD_MS = 500
    IDENT_PERIOD_MS = 5000

    def __init__(self, scenario: Scenario):
        super().__init__(SensorId.ADSB, 10.0)  # polling cadence
        self.scenario = scenario
        self.decoder = AdsbDecoder()
        self.current_out: BoundedQueue = BoundedQueue()
        self.history_out: BoundedQueue = BoundedQueue()
        self._last_position: dict[int, int] = {}
        self._last_ident: dict[int, int] = {}
        self._odd_flip: dict[int, bool] = {}
        self._history_len: dict[int, int] = {}

    def produce(self, now: Timestamp) -> None:
        changed = False
        for target in self.scenario.targets:
            trans = target.transponder
            if trans is None:
                continue
            changed |= self._emit_aircraft(target, trans, now)
        if changed:
            self.current_out.put(
                AdsbCurrent(now, tuple(self.decoder.store.current.values()))
            )
            for icao, ring in self.decoder.store.history.items():
                known = self._history_len.get(icao, 0)
                for sample in ring[known:]:
                    self.history_out.put(AdsbHistory(now, icao, sample))
                self._history_len[icao] = len(ring)
            self._report_fusable(now)

    def _emit_aircraft(self, target, trans, now: Timestamp) -> bool:
        frames: list[str] = []
        if now - self._last_ident.get(trans.icao, -10**9) >= self.IDENT_PERIOD_MS:
            self._last_ident[trans.icao] = now
            me = airdata.encode_ident_me(trans.typecode, trans.category, trans.callsign)
            frames.append(airdata.encode_frame(trans.icao, me))
        if now - self._last_position.get(trans.icao, -10**9) >= self.POSITION_PERIOD_MS:
            self._last_position[trans.icao] = now
            pos = target.position(now / 1000.0)
            geo = enu_to_geo(self.scenario.origin, pos)
            odd = self._odd_flip.get(trans.icao, False)
            self._odd_flip[trans.icao] = not odd
            alt_ft = geo.alt_m / 0.3048
            me = airdata.encode_position_me(geo.lat_deg, geo.lon_deg, alt_ft, odd)
            frames.append(airdata.encode_frame(trans.icao, me))
            # velocity from the waypoint derivative
            ahead = target.position(now / 1000.0 + 0.5)
            vx = (ahead[0] - pos[0]) / 0.5 * KT_PER_MPS
            vy = (ahead[1] - pos[1]) / 0.5 * KT_PER_MPS
            me = airdata.encode_velocity_field(vx, vy)
            frames.append(airdata.encode_frame(trans.icao, me))
        for frame in frames:
            self.decoder.feed(frame, now)
        return bool(frames)

    def _report_fusable(self, now: Timestamp) -> None:
        for state in self.decoder.store.current.values():
            if state.category_class is TargetClass.NO_DATA:
                continue
            self.out.put(
                DetectionReport(
                    sensor=SensorId.ADSB,
                    t=now,
                    label=state.category_class,
                    confidence=1.0,
                    worker_fps=self.fps,
                )
            )


# --- engine ---------------------------------------------------------------------


@dataclass
class SensorStatus:
    state: str  # ok | warn | fail
    fps: float


@dataclass
class EngineSnapshot:
    """Everything the console needs, emitted once per main tick."""

    t: Timestamp
    pose: PlatformPose
    pulses: tuple[float, float]
    source: ControlSource
    pattern: str
    statuses: dict[SensorId, SensorStatus]
    latest_reports: dict[SensorId, DetectionReport]
    decision: FusedDecision
    adsb_current: tuple[AircraftState, ...]
    adsb_history: dict[int, list[HistorySample]]
    gps: GeoPosition
    fusion: FusionConfig
    cue: CueMessage | None
    dropped_total: int

    def to_dict(self) -> dict:
        return {
            "type": "snapshot",
            "t": self.t,
            "pose": {"pan_deg": self.pose.pan_deg, "tilt_deg": self.pose.tilt_deg},
            "pulses": {"pan_us": self.pulses[0], "tilt_us": self.pulses[1]},
            "source": self.source.value,
            "pattern": self.pattern,
            "statuses": {
                s.value: {"state": st.state, "fps": st.fps} for s, st in self.statuses.items()
            },
            "latest_reports": {
                s.value: _report_to_dict(r) for s, r in self.latest_reports.items()
            },
            "decision": {
                "label": self.decision.label.value if self.decision.label else None,
                "score": self.decision.score,
                "contributing": sorted(s.value for s in self.decision.contributing),
                "t": self.decision.t,
            },
            "adsb": {
                "current": [_aircraft_to_dict(a) for a in self.adsb_current],
                "history": {
                    str(icao): [
                        {
                            "t": h.t,
                            "lat_deg": h.position.lat_deg,
                            "lon_deg": h.position.lon_deg,
                            "alt_ft": h.altitude_ft,
                        }
                        for h in ring
                    ]
                    for icao, ring in sorted(self.adsb_history.items())
                },
            },
            "gps": {
                "lat_deg": self.gps.lat_deg,
                "lon_deg": self.gps.lon_deg,
                "alt_m": self.gps.alt_m,
            },
            "fusion": {
                "weights": {s.value: w for s, w in sorted(self.fusion.weights.items())},
                "min_sensors": self.fusion.min_sensors,
                "threshold": self.fusion.threshold,
                "window_ms": self.fusion.window_ms,
            },
            "cue": (
                None
                if self.cue is None
                else {
                    "t": self.cue.t,
                    "azimuth_deg": self.cue.offset.azimuth_deg,
                    "elevation_deg": self.cue.offset.elevation_deg,
                    "track_id": self.cue.track_id,
                }
            ),
            "dropped_total": self.dropped_total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _report_to_dict(r: DetectionReport) -> dict:
    doc = {
        "sensor": r.sensor.value,
        "t": r.t,
        "label": r.label.value,
        "confidence": r.confidence,
        "worker_fps": r.worker_fps,
    }
    if r.offset is not None:
        doc["offset"] = {
            "azimuth_deg": r.offset.azimuth_deg,
            "elevation_deg": r.offset.elevation_deg,
        }
    if r.bbox is not None:
        doc["bbox"] = {"x": r.bbox.x, "y": r.bbox.y, "w": r.bbox.w, "h": r.bbox.h}
    return doc


def _report_from_dict(doc: dict) -> DetectionReport:
    from .core import BoundingBox

    offset = doc.get("offset")
    bbox = doc.get("bbox")
    return DetectionReport(
        sensor=SensorId(doc["sensor"]),
        t=int(doc["t"]),
        label=TargetClass(doc["label"]),
        confidence=float(doc["confidence"]),
        offset=(
            AngularOffset(offset["azimuth_deg"], offset["elevation_deg"]) if offset else None
        ),
        bbox=BoundingBox(bbox["x"], bbox["y"], bbox["w"], bbox["h"]) if bbox else None,
        worker_fps=float(doc.get("worker_fps", 0.0)),
    )


def _aircraft_to_dict(a: AircraftState) -> dict:
    return {
        "icao": a.icao,
        "callsign": a.callsign,
        "category_class": a.category_class.value,
        "position": (
            None
            if a.position is None
            else {
                "lat_deg": a.position.lat_deg,
                "lon_deg": a.position.lon_deg,
                "alt_m": a.position.alt_m,
            }
        ),
        "altitude_ft": a.altitude_ft,
        "ground_speed_kt": a.ground_speed_kt,
        "track_deg": a.track_deg,
        "last_seen": a.last_seen,
    }


@dataclass(frozen=True)
class EventLogRecord:
    t: Timestamp
    kind: str  # report | decision | pose | command | ack
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.t, "kind": self.kind, "payload": self.payload},
            sort_keys=True,
            separators=(",", ":"),
        )


@dataclass
class EngineConfig:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    controller: ControllerParams = field(default_factory=ControllerParams)
    pattern: SearchPattern | None = SearchPattern.RASTER
    profile: DetectorProfile = field(default_factory=default_profile)

    @classmethod
    def from_dict(cls, doc: dict) -> "EngineConfig":
        cfg = cls()
        fusion_doc = doc.get("fusion", {})
        if fusion_doc:
            weights = {
                SensorId(k): float(v) for k, v in fusion_doc.get("weights", {}).items()
            } or None
            kwargs = {}
            if weights:
                kwargs["weights"] = weights
            for key in ("min_sensors", "window_ms", "threshold"):
                if key in fusion_doc:
                    kwargs[key] = fusion_doc[key]
            cfg.fusion = FusionConfig(**kwargs)
        controller_doc = doc.get("controller", {})
        if controller_doc:
            cfg.controller = ControllerParams(**controller_doc)
        if "pattern" in doc:
            cfg.pattern = None if doc["pattern"] == "off" else SearchPattern(doc["pattern"])
        return cfg


class Engine:
    """Owner of fusion and platform state; one tick per 100 ms."""

    def __init__(self, scenario: Scenario, config: EngineConfig | None = None):
        self.scenario = scenario
        self.config = config or EngineConfig()
        self.fusion_cfg = self.config.fusion
        self.fusion_state = FusionState(window_ms=self.fusion_cfg.window_ms)
        self.pose = PlatformPose(0.0, 45.0)
        self.pattern: SearchPattern | None = self.config.pattern
        self.pattern_state = PatternState()
        self.manual = False
        self.manual_target: PlatformPose | None = None
        self.acks: BoundedQueue = BoundedQueue()
        self.commands: BoundedQueue = BoundedQueue()  # telemetry/script commands
        self.log: list[EventLogRecord] = []
        self.validation_errors = 0

        self.workers: dict[SensorId, Worker] = self._build_workers()
        for worker in self.workers.values():
            worker.acks = self.acks
        # engine-side status mirror: updated only through acks and local
        # validation counters, so a replayed run reproduces it exactly
        self._worker_fps: dict[SensorId, float] = {
            s: w.fps for s, w in self.workers.items()
        }

        self._last_report_t: dict[ControlSource, Timestamp] = {}
        self._last_offset: dict[ControlSource, tuple[Timestamp, AngularOffset]] = {}
        self._latest_reports: dict[SensorId, DetectionReport] = {}
        self._cue: CueMessage | None = None
        self._adsb_current: tuple[AircraftState, ...] = ()
        self._adsb_history: dict[int, list[HistorySample]] = {}
        self._warn_until: dict[SensorId, Timestamp] = {}
        self._gps_fix: GeoPosition = scenario.origin
        self._last_tick: Timestamp | None = None

    def _build_workers(self) -> dict[SensorId, Worker]:
        profile = self.config.profile
        scenario = self.scenario
        return {
            SensorId.IRCAM: CameraWorker(SensorId.IRCAM, scenario, profile, self._pose_offset),
            SensorId.VCAM: CameraWorker(SensorId.VCAM, scenario, profile, self._pose_offset),
            SensorId.FCAM: FcamWorker(scenario),
            SensorId.AUDIO: AudioWorker(scenario),
            SensorId.ADSB: AdsbWorker(scenario),
        }

    # pose as an angular boresight for the camera workers
    def _pose_offset(self) -> AngularOffset:
        return AngularOffset(self.pose.pan_deg, self.pose.tilt_deg)

    def submit_command(self, doc: dict) -> None:
        """Queue a telemetry/script command for the next tick."""
        self.commands.put(doc)

    def _log(self, t: Timestamp, kind: str, payload: dict) -> None:
        self.log.append(EventLogRecord(t, kind, payload))

    def _apply_command(self, doc: dict, now: Timestamp) -> None:
        kind = doc.get("type")
        if kind == "set_fusion":
            weights = doc.get("weights")
            kwargs = {}
            if weights:
                kwargs["weights"] = {SensorId(k): float(v) for k, v in weights.items()}
            else:
                kwargs["weights"] = dict(self.fusion_cfg.weights)
            kwargs["min_sensors"] = int(doc.get("min_sensors", self.fusion_cfg.min_sensors))
            kwargs["window_ms"] = int(doc.get("window_ms", self.fusion_cfg.window_ms))
            kwargs["threshold"] = doc.get("threshold", None)
            if kwargs["threshold"] is not None:
                kwargs["threshold"] = float(kwargs["threshold"])
            self.fusion_cfg = FusionConfig(**kwargs)
            self.fusion_state.window_ms = self.fusion_cfg.window_ms
        elif kind == "slew":
            if doc.get("release"):
                self.manual = False
                self.manual_target = None
            else:
                pan = float(doc["pan"])
                tilt = float(doc["tilt"])
                self.manual_target = PlatformPose(pan, tilt)
                self.manual = True
        elif kind == "set_pattern":
            name = doc.get("pattern")
            self.pattern = None if name == "off" else SearchPattern(name)
            self.pattern_state = PatternState()
        elif kind == "worker":
            sensor = SensorId(doc["id"])
            action = doc.get("action", "run")
            self.workers[sensor].submit(WorkerCommand(sensor, action, doc.get("payload")))
        else:
            raise ValidationError(f"unknown command type: {kind}")
        self._log(now, "command", doc)

    def tick(self, now: Timestamp) -> EngineSnapshot:
        """Drain queues, fuse, arbitrate, steer, snapshot, log."""
        if self._last_tick is not None and now <= self._last_tick:
            raise ValidationError(f"tick time went backwards: {now} after {self._last_tick}")
        dt_s = ((now - self._last_tick) if self._last_tick is not None else 100) / 1000.0
        self._last_tick = now

        for doc in self.commands.drain():
            try:
                self._apply_command(doc, now)
            except (ValueError, KeyError, TypeError) as exc:
                self.validation_errors += 1
                self._log(now, "command", {"type": "invalid", "error": str(exc)})

        for ack in self.acks.drain():
            self._worker_fps[ack.worker] = ack.worker_fps
            self._log(
                now,
                "ack",
                {
                    "worker": ack.worker.value,
                    "action": ack.action,
                    "worker_fps": ack.worker_fps,
                    "ack_t": ack.t,
                },
            )

        for sensor, worker in self.workers.items():
            for message in worker.out.drain():
                self._consume(sensor, message, now)
            if hasattr(worker, "current_out"):
                for message in worker.current_out.drain():
                    self._adsb_current = message.tracks
                    self._log(
                        now,
                        "report",
                        {
                            "channel": "adsb_current",
                            "t": message.t,
                            "tracks": [_aircraft_to_dict(a) for a in message.tracks],
                        },
                    )
                for message in worker.history_out.drain():
                    ring = self._adsb_history.setdefault(message.icao, [])
                    ring.append(message.sample)
                    if len(ring) > airdata.HISTORY_CAPACITY:
                        del ring[: len(ring) - airdata.HISTORY_CAPACITY]
                    self._log(
                        now,
                        "report",
                        {
                            "channel": "adsb_history",
                            "t": message.t,
                            "icao": message.icao,
                            "sample": {
                                "t": message.sample.t,
                                "lat_deg": message.sample.position.lat_deg,
                                "lon_deg": message.sample.position.lon_deg,
                                "alt_m": message.sample.position.alt_m,
                                "alt_ft": message.sample.altitude_ft,
                            },
                        },
                    )

        decision = decide(self.fusion_state, self.fusion_cfg, now)
        source = arbitrate(
            self._last_report_t, now, self.config.controller, manual=self.manual
        )
        self._steer(source, now, dt_s)

        if now % 1000 < 100:  # refresh the GPS fix once a second
            self._gps_fix = self._read_gps()

        snapshot = self._snapshot(now, source, decision)
        self._log(
            now,
            "decision",
            {
                "label": decision.label.value if decision.label else None,
                "score": decision.score,
                "contributing": sorted(s.value for s in decision.contributing),
            },
        )
        self._log(
            now,
            "pose",
            {
                "pan_deg": self.pose.pan_deg,
                "tilt_deg": self.pose.tilt_deg,
                "source": source.value,
            },
        )
        return snapshot

    def _consume(self, sensor: SensorId, message, now: Timestamp) -> None:
        if isinstance(message, DetectionReport):
            try:
                self.fusion_state = ingest(self.fusion_state, message)
            except ValidationError:
                self.validation_errors += 1
                self._warn_until[sensor] = now + 2000
                return
            self._latest_reports[sensor] = message
            self._log(now, "report", {"channel": "detection", **_report_to_dict(message)})
            if sensor in (SensorId.IRCAM, SensorId.VCAM) and message.offset is not None:
                src = ControlSource(sensor.value)
                self._last_report_t[src] = message.t
                self._last_offset[src] = (message.t, message.offset)
        elif isinstance(message, CueMessage):
            self._cue = message
            self._last_report_t[ControlSource.FCAM] = message.t
            self._last_offset[ControlSource.FCAM] = (message.t, message.offset)
            self._log(
                now,
                "report",
                {
                    "channel": "cue",
                    "t": message.t,
                    "azimuth_deg": message.offset.azimuth_deg,
                    "elevation_deg": message.offset.elevation_deg,
                    "track_id": message.track_id,
                    "worker_fps": message.worker_fps,
                },
            )

    def _steer(self, source: ControlSource, now: Timestamp, dt_s: float) -> None:
        params = self.config.controller
        if source is ControlSource.MANUAL and self.manual_target is not None:
            delta = AngularOffset(
                self.manual_target.pan_deg - self.pose.pan_deg,
                self.manual_target.tilt_deg - self.pose.tilt_deg,
            )
            # full-gain move toward the commanded pose, rate-limited
            self.pose = step_toward(self.pose, delta, dt_s, replace(params, gain=1.0))
        elif source in (ControlSource.IRCAM, ControlSource.VCAM, ControlSource.FCAM):
            stamped = self._last_offset.get(source)
            if stamped is None or now - stamped[0] > params.hold_ms:
                return  # stale cue: hold position
            _, offset = stamped
            if source is ControlSource.FCAM:
                # cue is relative to the fixed fish-eye stare direction
                offset = AngularOffset(
                    FISHEYE_BORESIGHT.azimuth_deg + offset.azimuth_deg - self.pose.pan_deg,
                    FISHEYE_BORESIGHT.elevation_deg
                    + offset.elevation_deg
                    - self.pose.tilt_deg,
                )
            self.pose = step_toward(self.pose, offset, dt_s, params)
        elif source is ControlSource.PATTERN and self.pattern is not None:
            self.pose, self.pattern_state = pattern_next(
                self.pattern, self.pose, dt_s, params, self.pattern_state
            )

    def _read_gps(self) -> GeoPosition:
        """Round-trip the platform position through a generated sentence."""
        o = self.scenario.origin
        lat_mins = abs(o.lat_deg) * 60
        lon_mins = abs(o.lon_deg) * 60
        body = (
            f"GPGGA,120000,{int(abs(o.lat_deg)):02d}{lat_mins % 60:07.4f},"
            f"{'N' if o.lat_deg >= 0 else 'S'},"
            f"{int(abs(o.lon_deg)):03d}{lon_mins % 60:07.4f},"
            f"{'E' if o.lon_deg >= 0 else 'W'},1,08,0.9,{o.alt_m:.1f},M,0.0,M,,"
        )
        checksum = 0
        for ch in body:
            checksum ^= ord(ch)
        fix = nmea_parse(f"${body}*{checksum:02X}")
        return GeoPosition(fix.lat_deg, fix.lon_deg, fix.alt_m or 0.0)

    def _snapshot(
        self, now: Timestamp, source: ControlSource, decision: FusedDecision
    ) -> EngineSnapshot:
        statuses = {}
        for sensor, worker in self.workers.items():
            fps = self._worker_fps[sensor]
            if fps == 0.0:
                state = "warn"  # idle, or a dead worker acking nothing
            elif now < self._warn_until.get(sensor, -1) or worker.out.dropped:
                state = "warn"
            else:
                state = "ok"
            statuses[sensor] = SensorStatus(state, fps)
        return EngineSnapshot(
            t=now,
            pose=self.pose,
            pulses=pose_to_pulse(self.pose),
            source=source,
            pattern=self.pattern.value if self.pattern else "off",
            statuses=statuses,
            latest_reports=dict(self._latest_reports),
            decision=decision,
            adsb_current=self._adsb_current,
            adsb_history={k: list(v) for k, v in self._adsb_history.items()},
            gps=self._gps_fix,
            fusion=self.fusion_cfg,
            cue=self._cue,
            dropped_total=sum(w.out.dropped for w in self.workers.values()),
        )


# --- schedulers -----------------------------------------------------------------


_WORKER_ORDER = (SensorId.IRCAM, SensorId.VCAM, SensorId.FCAM, SensorId.AUDIO, SensorId.ADSB)


@dataclass
class RunResult:
    snapshots: list[EngineSnapshot]
    log: list[EventLogRecord]

    def snapshot_lines(self) -> list[str]:
        return [s.to_json() for s in self.snapshots]

    def log_lines(self) -> list[str]:
        return [r.to_json() for r in self.log]


def run_virtual(
    scenario: Scenario,
    config: EngineConfig | None = None,
    command_script: Iterable[tuple[int, dict]] = (),
) -> RunResult:
    """Single-threaded, virtual-clock run: bit-reproducible.

    Workers and the main loop interleave in strict (due time, priority)
    order; at equal times every worker precedes the main tick, mirroring
    queue traversal in the threaded engine.
    """
    engine = Engine(scenario, config)
    duration_ms = int(scenario.duration_s * 1000)
    tick_ms = 1000.0 / scenario.suite.loop_hz

    script = sorted(command_script, key=lambda item: item[0])
    script_idx = 0

    heap: list[tuple[float, int, int]] = []  # (due, priority, worker index | -1)
    for i, sensor in enumerate(_WORKER_ORDER):
        worker = engine.workers[sensor]
        heappush(heap, (worker.period_ms, i, i))
    heappush(heap, (tick_ms, len(_WORKER_ORDER), -1))

    snapshots = []
    while heap:
        due, priority, which = heappop(heap)
        if due > duration_ms + 1e-9:
            break
        now = int(round(due))
        if which >= 0:
            worker = engine.workers[_WORKER_ORDER[which]]
            worker.step(now)
            heappush(heap, (due + worker.period_ms, priority, which))
        else:
            while script_idx < len(script) and script[script_idx][0] <= now:
                engine.submit_command(script[script_idx][1])
                script_idx += 1
            snapshots.append(engine.tick(now))
            heappush(heap, (due + tick_ms, priority, -1))
    return RunResult(snapshots, engine.log)


def run_live(
    scenario: Scenario,
    config: EngineConfig | None = None,
    duration_s: float | None = None,
    on_snapshot: Callable[[EngineSnapshot], None] | None = None,
    stop_event: threading.Event | None = None,
    engine_hook: Callable[[Engine], None] | None = None,
) -> tuple[RunResult, list[float]]:
    """Wall-clock run with one thread per worker.

    Returns the run result plus per-tick processing latencies in seconds
    (time from the tick's scheduled instant to snapshot completion).
    engine_hook receives the engine before the loop starts, so callers
    can feed commands into its thread-safe queue while it runs.
    """
    engine = Engine(scenario, config)
    if engine_hook is not None:
        engine_hook(engine)
    seconds = duration_s if duration_s is not None else scenario.duration_s
    stop = stop_event or threading.Event()
    start = time.monotonic()

    def now_ms() -> int:
        return int((time.monotonic() - start) * 1000)

    def worker_loop(worker: Worker) -> None:
        period_s = worker.period_ms / 1000.0
        next_due = time.monotonic() + period_s
        while not stop.is_set():
            delay = next_due - time.monotonic()
            if delay > 0:
                time.sleep(min(delay, 0.05))
                continue
            worker.step(now_ms())
            next_due += period_s

    threads = [
        threading.Thread(target=worker_loop, args=(engine.workers[s],), daemon=True)
        for s in _WORKER_ORDER
    ]
    for thread in threads:
        thread.start()

    tick_s = 1.0 / scenario.suite.loop_hz
    latencies: list[float] = []
    snapshots: list[EngineSnapshot] = []
    tick_index = 1
    try:
        while not stop.is_set():
            scheduled = start + tick_index * tick_s
            delay = scheduled - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            t = int(round(tick_index * tick_s * 1000))
            snapshot = engine.tick(t)
            latencies.append(time.monotonic() - scheduled)
            snapshots.append(snapshot)
            if on_snapshot is not None:
                on_snapshot(snapshot)
            tick_index += 1
            if seconds is not None and tick_index * tick_s > seconds:
                break
    finally:
        stop.set()
        for thread in threads:
            thread.join(timeout=1.0)
    return RunResult(snapshots, engine.log), latencies


# --- replay ---------------------------------------------------------------------


def parse_log_lines(lines: Iterable[str]) -> list[EventLogRecord]:
    records = []
    last_t = None
    for i, line in enumerate(lines):
        text = line.strip()
        if not text:
            continue
        try:
            doc = json.loads(text)
            record = EventLogRecord(int(doc["t"]), doc["kind"], doc["payload"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ReplayError(f"malformed log line {i + 1}: {exc}") from exc
        if record.kind not in ("report", "decision", "pose", "command", "ack"):
            raise ReplayError(f"unknown record kind on line {i + 1}: {record.kind}")
        if last_t is not None and record.t < last_t:
            raise ReplayError(
                f"log disordered at line {i + 1}: t={record.t} after t={last_t}"
            )
        last_t = record.t
        records.append(record)
    return records


class _ShellWorker(Worker):
    """Queue holder for replay: carries messages, produces nothing."""

    def produce(self, now: Timestamp) -> None:
        pass


class _ReplayEngine(Engine):
    """Engine whose inputs come from the log instead of live workers."""

    def _build_workers(self) -> dict[SensorId, Worker]:
        suite = self.scenario.suite
        rates = {
            SensorId.IRCAM: suite.ir_fps,
            SensorId.VCAM: suite.v_fps,
            SensorId.FCAM: suite.f_fps,
            SensorId.AUDIO: suite.audio_hz,
            SensorId.ADSB: 10.0,
        }
        workers: dict[SensorId, Worker] = {
            sensor: _ShellWorker(sensor, rate) for sensor, rate in rates.items()
        }
        workers[SensorId.ADSB].current_out = BoundedQueue()
        workers[SensorId.ADSB].history_out = BoundedQueue()
        return workers

    def inject(self, record: EventLogRecord) -> None:
        payload = record.payload
        channel = payload.get("channel")
        if channel == "detection":
            doc = {k: v for k, v in payload.items() if k != "channel"}
            report = _report_from_dict(doc)
            self.workers[report.sensor].out.put(report)
        elif channel == "cue":
            self.workers[SensorId.FCAM].out.put(
                CueMessage(
                    t=int(payload["t"]),
                    offset=AngularOffset(payload["azimuth_deg"], payload["elevation_deg"]),
                    track_id=int(payload["track_id"]),
                    worker_fps=float(payload["worker_fps"]),
                )
            )
        elif channel == "adsb_current":
            tracks = tuple(_aircraft_from_dict(a) for a in payload["tracks"])
            self.workers[SensorId.ADSB].current_out.put(
                AdsbCurrent(int(payload["t"]), tracks)
            )
        elif channel == "adsb_history":
            sample = payload["sample"]
            self.workers[SensorId.ADSB].history_out.put(
                AdsbHistory(
                    int(payload["t"]),
                    int(payload["icao"]),
                    HistorySample(
                        int(sample["t"]),
                        GeoPosition(sample["lat_deg"], sample["lon_deg"], sample["alt_m"]),
                        sample["alt_ft"],
                    ),
                )
            )
        else:
            raise ReplayError(f"unknown report channel: {channel}")


def _aircraft_from_dict(doc: dict) -> AircraftState:
    pos = doc.get("position")
    return AircraftState(
        icao=int(doc["icao"]),
        last_seen=int(doc["last_seen"]),
        callsign=doc.get("callsign", ""),
        category_class=TargetClass(doc["category_class"]),
        position=(
            GeoPosition(pos["lat_deg"], pos["lon_deg"], pos["alt_m"]) if pos else None
        ),
        altitude_ft=doc.get("altitude_ft"),
        ground_speed_kt=doc.get("ground_speed_kt"),
        track_deg=doc.get("track_deg"),
    )


def replay(
    scenario: Scenario,
    log_lines: Iterable[str],
    config: EngineConfig | None = None,
) -> RunResult:
    """Re-drive the main loop from a recorded event log.

    Only inbound records (reports, commands) matter; the engine's own
    decision/pose records are regenerated and must come out identical for
    a faithful log.
    """
    records = parse_log_lines(log_lines)
    engine = _ReplayEngine(scenario, config)
    tick_ms = 1000.0 / scenario.suite.loop_hz

    snapshots = []
    idx = 0
    tick_index = 1
    # replay ticks until the log is exhausted
    max_t = records[-1].t if records else 0
    while True:
        now = int(round(tick_index * tick_ms))
        if now > max_t:
            break
        while idx < len(records) and records[idx].t <= now:
            record = records[idx]
            if record.kind == "report":
                engine.inject(record)
            elif record.kind == "command":
                if record.payload.get("type") != "invalid":
                    engine.submit_command(record.payload)
            elif record.kind == "ack":
                engine.acks.put(
                    WorkerAck(
                        SensorId(record.payload["worker"]),
                        record.payload["action"],
                        float(record.payload["worker_fps"]),
                        int(record.payload["ack_t"]),
                    )
                )
            idx += 1
        snapshots.append(engine.tick(now))
        tick_index += 1
    return RunResult(snapshots, engine.log)
