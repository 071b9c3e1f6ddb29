"""Detection evaluation harness: IoU matching and per-bin P/R/F1 rollups.

Protocol: predictions below the confidence threshold are discarded, the
rest are greedily matched (descending confidence) to unmatched same-class
annotations at IoU >= threshold. Per distance bin, precision and recall
are unweighted class means and the bin F1 is the harmonic mean of those;
the headline number is the mean of the three bin F1 scores.

Annotation files are per-clip CSVs of "frame,class,x,y,w,h" with a JSON
sidecar describing the clip (sensor, resolution, declared bin, class).
Detection files add a confidence column: "frame,class,confidence,x,y,w,h".
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import FUSABLE_CLASSES, BoundingBox, SensorId, TargetClass, ValidationError

BINS = ("close", "medium", "distant")


@dataclass(frozen=True)
class Annotation:
    frame: int
    label: TargetClass
    bbox: BoundingBox

    def __post_init__(self):
        if self.label not in FUSABLE_CLASSES:
            raise ValidationError(f"annotation class must be flyable: {self.label}")


@dataclass(frozen=True)
class Prediction:
    frame: int
    label: TargetClass
    confidence: float
    bbox: BoundingBox


@dataclass(frozen=True)
class ClipMeta:
    sensor: SensorId
    width_px: int
    height_px: int
    hfov_deg: float
    bin: str
    clip_class: TargetClass

    def __post_init__(self):
        if self.sensor not in (SensorId.IRCAM, SensorId.VCAM):
            raise ValidationError(f"clips come from primary cameras, not {self.sensor}")
        if self.bin not in BINS:
            raise ValidationError(f"unknown distance bin: {self.bin}")


@dataclass(frozen=True)
class EvalParams:
    iou_threshold: float = 0.5
    confidence_threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1 or not 0 < self.confidence_threshold <= 1:
            raise ValidationError("thresholds must lie in (0,1]")


@dataclass
class MatchCounts:
    """Per-class TP/FP/FN tallies; addable across frames and clips."""

    tp: dict[TargetClass, int] = field(default_factory=dict)
    fp: dict[TargetClass, int] = field(default_factory=dict)
    fn: dict[TargetClass, int] = field(default_factory=dict)

    def add(self, other: "MatchCounts") -> None:
        for src, dst in ((other.tp, self.tp), (other.fp, self.fp), (other.fn, self.fn)):
            for cls, n in src.items():
                dst[cls] = dst.get(cls, 0) + n

    def precision(self, cls: TargetClass) -> float:
        tp, fp = self.tp.get(cls, 0), self.fp.get(cls, 0)
        return tp / (tp + fp) if tp + fp else 0.0

    def recall(self, cls: TargetClass) -> float:
        tp, fn = self.tp.get(cls, 0), self.fn.get(cls, 0)
        return tp / (tp + fn) if tp + fn else 0.0


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 when the union is degenerate."""
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def select_strongest(predictions: list[Prediction], annot: Annotation) -> Prediction:
    """Pick the single box to keep for one object: highest IoU against the
    annotation, confidence breaking ties."""
    if not predictions:
        raise ValidationError("select_strongest needs at least one prediction")
    return max(predictions, key=lambda p: (iou(p.bbox, annot.bbox), p.confidence))


def match_frame(
    preds: list[Prediction],
    annots: list[Annotation],
    params: EvalParams = EvalParams(),
) -> MatchCounts:
    """Greedy class-respecting matching for a single frame."""
    counts = MatchCounts()
    kept = [p for p in preds if p.confidence >= params.confidence_threshold]

    for cls in FUSABLE_CLASSES:
        cls_preds = sorted(
            (p for p in kept if p.label is cls),
            key=lambda p: -p.confidence,
        )
        cls_annots = [a for a in annots if a.label is cls]
        unmatched = set(range(len(cls_annots)))
        tp = 0
        for p in cls_preds:
            best_j, best_iou = None, params.iou_threshold
            for j in unmatched:
                v = iou(p.bbox, cls_annots[j].bbox)
                if v >= best_iou:
                    best_j, best_iou = j, v
            if best_j is None:
                counts.fp[cls] = counts.fp.get(cls, 0) + 1
            else:
                unmatched.discard(best_j)
                tp += 1
        if tp:
            counts.tp[cls] = tp
        if unmatched:
            counts.fn[cls] = len(unmatched)
    return counts


def f1(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0 when both vanish."""
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class MetricsReport:
    """Per-class, per-bin and overall scores, all in [0,1]."""

    per_class: dict[str, dict[str, dict[str, float]]]  # bin -> class -> {precision, recall}
    per_bin: dict[str, dict[str, float]]  # bin -> {precision, recall, f1}
    overall_f1: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_class": self.per_class,
                "per_bin": self.per_bin,
                "overall_f1": self.overall_f1,
            },
            indent=2,
            sort_keys=True,
        )


def summarize(counts_by_bin: dict[str, MatchCounts]) -> MetricsReport:
    """Macro-average each bin over classes, then average the bin F1s."""
    per_class: dict[str, dict[str, dict[str, float]]] = {}
    per_bin: dict[str, dict[str, float]] = {}
    bin_f1s = []
    for b in BINS:
        counts = counts_by_bin.get(b, MatchCounts())
        per_class[b] = {}
        ps, rs = [], []
        for cls in FUSABLE_CLASSES:
            p, r = counts.precision(cls), counts.recall(cls)
            per_class[b][cls.value] = {"precision": p, "recall": r}
            ps.append(p)
            rs.append(r)
        macro_p = sum(ps) / len(ps)
        macro_r = sum(rs) / len(rs)
        per_bin[b] = {"precision": macro_p, "recall": macro_r, "f1": f1(macro_p, macro_r)}
        bin_f1s.append(per_bin[b]["f1"])
    return MetricsReport(per_class, per_bin, sum(bin_f1s) / len(bin_f1s))


def summarize_from_table(
    table: dict[str, tuple[list[float], list[float]]]
) -> tuple[dict[str, float], float]:
    """Bin F1s and their mean straight from per-class P/R value lists.

    Used to roll up externally published per-class precision/recall
    numbers without raw counts.
    """
    bin_f1: dict[str, float] = {}
    for b, (ps, rs) in table.items():
        bin_f1[b] = f1(sum(ps) / len(ps), sum(rs) / len(rs))
    return bin_f1, sum(bin_f1.values()) / len(bin_f1)


def persistence(
    reports_by_source: dict[str, set[int]],
    fused_frames: set[int],
    opportunity_frames: set[int],
) -> dict[str, float]:
    """Fraction of opportunity frames carrying a drone label, per source.

    An opportunity frame is one where ground truth places a drone inside
    at least one primary camera's field of view; callers provide the set.
    The fused stream is reported under the key "fused".
    """
    if not opportunity_frames:
        return {src: 0.0 for src in list(reports_by_source) + ["fused"]}
    n = len(opportunity_frames)
    out = {
        src: len(frames & opportunity_frames) / n
        for src, frames in reports_by_source.items()
    }
    out["fused"] = len(fused_frames & opportunity_frames) / n
    return out


# --- file ingestion -------------------------------------------------------

def load_annotations(path: Path) -> list[Annotation]:
    """Read a per-clip annotation CSV: frame,class,x,y,w,h."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            frame, cls, x, y, w, h = row
            out.append(
                Annotation(
                    int(frame),
                    TargetClass(cls),
                    BoundingBox(float(x), float(y), float(w), float(h)),
                )
            )
    return out


def load_predictions(path: Path) -> list[Prediction]:
    """Read a per-clip detection CSV: frame,class,confidence,x,y,w,h."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            frame, cls, conf, x, y, w, h = row
            out.append(
                Prediction(
                    int(frame),
                    TargetClass(cls),
                    float(conf),
                    BoundingBox(float(x), float(y), float(w), float(h)),
                )
            )
    return out


def load_clip_meta(path: Path) -> ClipMeta:
    raw = json.loads(Path(path).read_text())
    return ClipMeta(
        sensor=SensorId(raw["sensor"]),
        width_px=int(raw["width_px"]),
        height_px=int(raw["height_px"]),
        hfov_deg=float(raw["hfov_deg"]),
        bin=raw["bin"],
        clip_class=TargetClass(raw["clip_class"]),
    )


def evaluate_directories(
    annotations_dir: Path, detections_dir: Path, params: EvalParams = EvalParams()
) -> MetricsReport:
    """Match every clip in the annotation tree against its detections.

    A clip is a CSV file NAME.csv with sidecar NAME.json in the
    annotations directory and a NAME.csv in the detections directory.
    Frames are matched independently; counts accumulate per declared bin.
    """
    counts_by_bin = {b: MatchCounts() for b in BINS}
    clips = sorted(annotations_dir.glob("*.csv"))
    if not clips:
        raise ValidationError(f"no annotation clips found in {annotations_dir}")
    for clip in clips:
        meta = load_clip_meta(clip.with_suffix(".json"))
        annots = load_annotations(clip)
        det_path = detections_dir / clip.name
        preds = load_predictions(det_path) if det_path.exists() else []
        by_frame_a: dict[int, list[Annotation]] = {}
        by_frame_p: dict[int, list[Prediction]] = {}
        for a in annots:
            by_frame_a.setdefault(a.frame, []).append(a)
        for p in preds:
            by_frame_p.setdefault(p.frame, []).append(p)
        for frame in sorted(set(by_frame_a) | set(by_frame_p)):
            counts_by_bin[meta.bin].add(
                match_frame(by_frame_p.get(frame, []), by_frame_a.get(frame, []), params)
            )
    return summarize(counts_by_bin)
