"""Track-level sensor fusion: weighted voting with temporal smoothing.

Combines time-stamped detection reports from the classifying sensors into
one system-level decision. Per class, the latest in-window report of each
sensor is a vote weighted by sensor weight times confidence; a class wins
if enough distinct sensors back it (min_sensors) and the summed score
clears the threshold. Keeping only the latest report per sensor stops a
60 FPS camera from outvoting a 20 Hz audio channel inside the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .core import (
    DetectionReport,
    SensorId,
    TargetClass,
    Timestamp,
    ValidationError,
    class_allowed,
)

# Residual tie-break when scores are equal: the system hunts drones first.
_CLASS_PRIORITY = (
    TargetClass.DRONE,
    TargetClass.HELICOPTER,
    TargetClass.AIRPLANE,
    TargetClass.BIRD,
)

# Sensors that can contribute a class vote (everything but the fish-eye cue).
CLASSIFYING_SENSORS = (SensorId.IRCAM, SensorId.VCAM, SensorId.AUDIO, SensorId.ADSB)


def _default_weights() -> dict[SensorId, float]:
    return {s: 1.0 for s in CLASSIFYING_SENSORS}


@dataclass
class FusionConfig:
    """Fusion knobs; hot-reloadable over the telemetry command channel."""

    weights: dict[SensorId, float] = field(default_factory=_default_weights)
    min_sensors: int = 2
    window_ms: int = 1000
    threshold: float | None = None  # defaults to 0.5 * min_sensors

    def __post_init__(self):
        for sensor, w in self.weights.items():
            if w < 0:
                raise ValidationError(f"weight for {sensor.value} must be >= 0")
        if not any(w > 0 for w in self.weights.values()):
            raise ValidationError("at least one sensor weight must be > 0")
        if not 1 <= self.min_sensors <= len(CLASSIFYING_SENSORS):
            raise ValidationError(f"min_sensors out of [1,4]: {self.min_sensors}")
        if self.window_ms <= 0:
            raise ValidationError(f"window_ms must be > 0: {self.window_ms}")
        if self.threshold is None:
            self.threshold = 0.5 * self.min_sensors
        if self.threshold < 0:
            raise ValidationError(f"threshold must be >= 0: {self.threshold}")

    def weight(self, sensor: SensorId) -> float:
        return self.weights.get(sensor, 1.0)


@dataclass(frozen=True)
class FusedDecision:
    """System-level output of one decide() call."""

    label: TargetClass | None
    score: float
    contributing: frozenset[SensorId]
    t: Timestamp

    def __post_init__(self):
        if self.label is None and self.contributing:
            raise ValidationError("no-label decision cannot have contributors")
        if self.label is not None and not self.contributing:
            raise ValidationError("labelled decision needs contributors")


@dataclass
class FusionState:
    """Report buffer owned by the main loop; pure-value transitions only."""

    window_ms: int = 1000
    reports: list[DetectionReport] = field(default_factory=list)


def ingest(state: FusionState, report: DetectionReport) -> FusionState:
    """Store a report, evicting anything older than the window.

    Eviction is relative to the newest timestamp seen so far, so a burst
    of stale traffic cannot resurrect the distant past.
    """
    if not class_allowed(report.sensor, report.label):
        raise ValidationError(
            f"sensor {report.sensor.value} may not emit {report.label.value}"
        )
    if report.t < 0:
        raise ValidationError(f"negative timestamp: {report.t}")
    kept = state.reports + [report]
    newest = max(r.t for r in kept)
    kept = [r for r in kept if newest - r.t <= state.window_ms]
    return FusionState(window_ms=state.window_ms, reports=kept)


def decide(state: FusionState, cfg: FusionConfig, now: Timestamp) -> FusedDecision:
    """Fuse the in-window reports into at most one class decision.

    A sensor votes with its latest in-window report only; background and
    no_data reports are that sensor saying "no target", which suppresses
    any earlier class vote it made inside the window.
    """
    latest: dict[SensorId, DetectionReport] = {}
    for r in state.reports:
        if now - r.t > cfg.window_ms or r.t > now:
            continue
        cur = latest.get(r.sensor)
        if cur is None or r.t >= cur.t:
            latest[r.sensor] = r

    best: tuple[float, int, TargetClass, frozenset[SensorId]] | None = None
    for rank, cls in enumerate(_CLASS_PRIORITY):
        voters = {s: r for s, r in latest.items() if r.label is cls}
        if len(voters) < cfg.min_sensors:
            continue
        score = sum(cfg.weight(s) * r.confidence for s, r in voters.items())
        if score < cfg.threshold:
            continue
        # Higher score wins; at equal score the earlier priority rank sticks.
        if best is None or score > best[0]:
            best = (score, rank, cls, frozenset(voters))

    if best is None:
        return FusedDecision(None, 0.0, frozenset(), now)
    score, _, cls, contributing = best
    return FusedDecision(cls, score, contributing, now)


def reconfigure(cfg: FusionConfig, **changes) -> FusionConfig:
    """New config with selected fields replaced (telemetry hot-reload)."""
    merged = replace(cfg, **changes)
    return merged
