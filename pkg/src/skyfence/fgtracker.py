"""Fish-eye cueing channel: motion masks, blobs, and multi-object tracking.

A per-pixel Gaussian mixture background model flags moving pixels, blobs
are cut out of the mask by connected-component analysis, and a bank of
constant-velocity Kalman filters tracks the blobs across frames. The
longest-lived confirmed track is the cue handed to the platform.

The mixture update is the classic adaptive scheme: the nearest component
within match_sigma standard deviations absorbs the sample at learning
rate alpha; when nothing matches, the weakest component is reinitialized
on the sample. Components are background while the running weight-sorted
cumulative sum stays at or below the background ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import AngularOffset, BoundingBox, CameraModel, ValidationError, pixel_to_offset

# Variances never collapse below this, else a long-static scene would
# match nothing once sigma underflows.
VAR_FLOOR = 4.0

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class GrayFrame:
    """8-bit grayscale frame, row-major."""

    width: int
    height: int
    pixels: np.ndarray  # uint8, shape (height, width)

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise ValidationError(
                f"pixel array {self.pixels.shape} does not match "
                f"{self.height}x{self.width}"
            )

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "GrayFrame":
        arr = np.asarray(pixels, dtype=np.uint8)
        return cls(arr.shape[1], arr.shape[0], arr)


def read_pgm(path: Path) -> GrayFrame:
    """Read a binary 8-bit PGM (P5) file."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise ValidationError(f"not a binary PGM file: magic {fields[0]!r}")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValidationError(f"only 8-bit PGM supported, maxval {maxval}")
    pos += 1  # single whitespace after maxval
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return GrayFrame(width, height, raster.reshape(height, width).copy())


def write_pgm(frame: GrayFrame, path: Path) -> None:
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode()
    Path(path).write_bytes(header + frame.pixels.tobytes())


@dataclass(frozen=True)
class GmmParams:
    mixtures: int = 3
    alpha: float = 0.01
    match_sigma: float = 2.5
    bg_ratio: float = 0.7
    init_sigma: float = 15.0
    min_weight: float = 0.01

    def __post_init__(self):
        if self.mixtures < 1:
            raise ValidationError(f"need at least one mixture: {self.mixtures}")
        if not 0 <= self.alpha < 1:
            raise ValidationError(f"alpha out of [0,1): {self.alpha}")
        if not 0 < self.bg_ratio <= 1:
            raise ValidationError(f"bg_ratio out of (0,1]: {self.bg_ratio}")


class GmmBackgroundModel:
    """Per-pixel mixture-of-Gaussians background model (vectorized)."""

    def __init__(self, width: int, height: int, params: GmmParams = GmmParams()):
        self.width = width
        self.height = height
        self.params = params
        k = params.mixtures
        self.weight = np.zeros((k, height, width), dtype=np.float64)
        self.mean = np.zeros((k, height, width), dtype=np.float64)
        self.var = np.full((k, height, width), params.init_sigma**2, dtype=np.float64)
        self._seen_first = False

    def update(self, frame: GrayFrame) -> np.ndarray:
        """Fold one frame into the model; returns the boolean foreground mask."""
        if (frame.height, frame.width) != (self.height, self.width):
            raise ValidationError(
                f"frame {frame.width}x{frame.height} does not match model "
                f"{self.width}x{self.height}"
            )
        p = self.params
        x = frame.pixels.astype(np.float64)

        if not self._seen_first:
            # First frame seeds the dominant component: everything background.
            self.mean[0] = x
            self.weight[0] = 1.0
            self._seen_first = True
            return np.zeros((self.height, self.width), dtype=bool)

        diff = x[None, :, :] - self.mean
        dist = np.abs(diff)
        within = dist < p.match_sigma * np.sqrt(self.var)
        gated = np.where(within, dist, np.inf)
        nearest = np.argmin(gated, axis=0)
        matched = np.take_along_axis(within, nearest[None], axis=0)[0]

        is_match = np.zeros_like(within)
        np.put_along_axis(is_match, nearest[None], matched[None], axis=0)

        # Matched component absorbs the sample at rate alpha; weights of all
        # components relax toward the match indicator.
        self.weight = (1 - p.alpha) * self.weight + p.alpha * is_match
        rho = p.alpha
        self.mean = np.where(is_match, self.mean + rho * diff, self.mean)
        self.var = np.where(is_match, (1 - rho) * self.var + rho * diff**2, self.var)

        # No match anywhere: the weakest component restarts on the sample.
        unmatched = ~matched
        if unmatched.any():
            weakest = np.argmin(self.weight, axis=0)
            reinit = np.zeros_like(is_match)
            np.put_along_axis(reinit, weakest[None], unmatched[None], axis=0)
            self.mean = np.where(reinit, x[None], self.mean)
            self.var = np.where(reinit, p.init_sigma**2, self.var)
            self.weight = np.where(reinit, p.min_weight, self.weight)

        np.maximum(self.var, VAR_FLOOR, out=self.var)
        np.maximum(self.weight, p.min_weight, out=self.weight)
        self.weight /= self.weight.sum(axis=0, keepdims=True)

        # Background = the strongest components whose cumulative weight has
        # not yet passed bg_ratio when this component is reached.
        order = np.argsort(-self.weight, axis=0, kind="stable")
        sorted_w = np.take_along_axis(self.weight, order, axis=0)
        cum_before = np.cumsum(sorted_w, axis=0) - sorted_w
        bg_sorted = cum_before <= p.bg_ratio
        is_background = np.zeros_like(bg_sorted)
        np.put_along_axis(is_background, order, bg_sorted, axis=0)

        matched_is_bg = np.take_along_axis(is_background, nearest[None], axis=0)[0]
        return unmatched | (matched & ~matched_is_bg)


def gmm_update(model: GmmBackgroundModel, frame: GrayFrame, params: GmmParams | None = None) -> np.ndarray:
    """Functional wrapper over GmmBackgroundModel.update."""
    if params is not None and params != model.params:
        model.params = params
    return model.update(frame)


@dataclass(frozen=True)
class Blob:
    centroid: tuple[float, float]  # (x, y) pixels
    bbox: BoundingBox
    area_px: int


def extract_blobs(mask: np.ndarray, min_area: int = 4) -> list[Blob]:
    """8-connected components of the mask with at least min_area pixels."""
    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    blobs = []
    index = np.arange(1, count + 1)
    areas = ndimage.sum_labels(mask, labels, index)
    slices = ndimage.find_objects(labels)
    centroids = ndimage.center_of_mass(mask, labels, index)
    for area, (rows, cols), (cy, cx) in zip(areas, slices, centroids):
        if area < min_area:
            continue
        bbox = BoundingBox(
            float(cols.start),
            float(rows.start),
            float(cols.stop - cols.start),
            float(rows.stop - rows.start),
        )
        blobs.append(Blob((float(cx), float(cy)), bbox, int(area)))
    return blobs


@dataclass(frozen=True)
class TrackerParams:
    gate_px: float = 40.0
    confirm_hits: int = 3
    delete_misses: int = 10
    process_noise: float = 1.0
    measurement_noise: float = 4.0
    dt: float = 1.0

    def __post_init__(self):
        for name in ("gate_px", "confirm_hits", "delete_misses",
                     "process_noise", "measurement_noise", "dt"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")


@dataclass
class Track:
    """One constant-velocity Kalman track in image coordinates."""

    id: int
    state: np.ndarray  # [x, y, vx, vy]
    covariance: np.ndarray  # 4x4
    age: int = 0
    hits: int = 1
    misses: int = 0
    confirmed: bool = False

    @property
    def position(self) -> tuple[float, float]:
        return float(self.state[0]), float(self.state[1])


def _motion_matrices(p: TrackerParams) -> tuple[np.ndarray, np.ndarray]:
    dt = p.dt
    f = np.array(
        [[1, 0, dt, 0], [0, 1, 0, dt], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=np.float64
    )
    q = p.process_noise * np.array(
        [
            [dt**4 / 4, 0, dt**3 / 2, 0],
            [0, dt**4 / 4, 0, dt**3 / 2],
            [dt**3 / 2, 0, dt**2, 0],
            [0, dt**3 / 2, 0, dt**2],
        ],
        dtype=np.float64,
    )
    return f, q


_MEASURE = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=np.float64)
_INIT_VELOCITY_VAR = 1000.0


class KalmanTracker:
    """Greedy nearest-neighbour multi-object tracker over blob centroids."""

    def __init__(self, params: TrackerParams = TrackerParams()):
        self.params = params
        self.tracks: list[Track] = []
        self._next_id = 1

    def step(self, blobs: list[Blob]) -> list[Track]:
        """One predict/associate/update cycle; returns the live track list."""
        p = self.params
        f, q = _motion_matrices(p)
        r = p.measurement_noise * np.eye(2)

        for tr in self.tracks:
            tr.state = f @ tr.state
            tr.covariance = f @ tr.covariance @ f.T + q

        # Greedy global-nearest association inside the gate.
        candidates = []
        for ti, tr in enumerate(self.tracks):
            px, py = tr.position
            for bi, blob in enumerate(blobs):
                d = float(np.hypot(px - blob.centroid[0], py - blob.centroid[1]))
                if d <= p.gate_px:
                    candidates.append((d, ti, bi))
        candidates.sort()
        used_tracks: set[int] = set()
        used_blobs: set[int] = set()
        for d, ti, bi in candidates:
            if ti in used_tracks or bi in used_blobs:
                continue
            used_tracks.add(ti)
            used_blobs.add(bi)
            self._update_track(self.tracks[ti], blobs[bi], r)

        for ti, tr in enumerate(self.tracks):
            if ti not in used_tracks:
                tr.misses += 1

        for bi, blob in enumerate(blobs):
            if bi not in used_blobs:
                self.tracks.append(self._spawn(blob))

        survivors = []
        for tr in self.tracks:
            tr.age += 1
            if tr.hits >= p.confirm_hits:
                tr.confirmed = True
            if tr.misses <= p.delete_misses:
                survivors.append(tr)
        self.tracks = survivors
        return self.tracks

    def _spawn(self, blob: Blob) -> Track:
        state = np.array([blob.centroid[0], blob.centroid[1], 0.0, 0.0])
        cov = np.diag(
            [
                self.params.measurement_noise,
                self.params.measurement_noise,
                _INIT_VELOCITY_VAR,
                _INIT_VELOCITY_VAR,
            ]
        )
        track = Track(id=self._next_id, state=state, covariance=cov)
        self._next_id += 1
        return track

    def _update_track(self, tr: Track, blob: Blob, r: np.ndarray) -> None:
        h = _MEASURE
        z = np.array(blob.centroid)
        innovation = z - h @ tr.state
        s = h @ tr.covariance @ h.T + r
        gain = tr.covariance @ h.T @ np.linalg.inv(s)
        tr.state = tr.state + gain @ innovation
        # Joseph form keeps the covariance symmetric positive semi-definite.
        ikh = np.eye(4) - gain @ h
        tr.covariance = ikh @ tr.covariance @ ikh.T + gain @ r @ gain.T
        tr.hits += 1
        tr.misses = 0


def tracker_step(
    tracker: KalmanTracker, blobs: list[Blob], params: TrackerParams | None = None
) -> list[Track]:
    """Functional wrapper over KalmanTracker.step."""
    if params is not None:
        tracker.params = params
    return tracker.step(blobs)


def best_track(tracks: list[Track]) -> int | None:
    """Longest-lived confirmed track; ties go to the lowest id."""
    confirmed = [tr for tr in tracks if tr.confirmed]
    if not confirmed:
        return None
    return min(confirmed, key=lambda tr: (-tr.age, tr.id)).id


def track_direction(track: Track, cam: CameraModel) -> AngularOffset:
    """Angles off boresight for a track's current position."""
    x, y = track.position
    return pixel_to_offset(cam, x, y)
