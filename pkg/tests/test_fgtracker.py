import numpy as np
import pytest

from skyfence.core import FISHEYE_MODEL, ValidationError
from skyfence.fgtracker import (
    Blob,
    GmmBackgroundModel,
    GmmParams,
    GrayFrame,
    KalmanTracker,
    Track,
    TrackerParams,
    best_track,
    extract_blobs,
    read_pgm,
    track_direction,
    write_pgm,
)


def constant_frame(w, h, value):
    return GrayFrame(w, h, np.full((h, w), value, dtype=np.uint8))


def converged_model(w=64, h=48, value=50, frames=100, params=GmmParams()):
    model = GmmBackgroundModel(w, h, params)
    mask = None
    for _ in range(frames):
        mask = model.update(constant_frame(w, h, value))
    return model, mask


class TestGmm:
    def test_static_scene_goes_background(self):
        _, mask = converged_model()
        assert mask.dtype == bool
        assert mask.shape == (48, 64)
        assert not mask.any()

    def test_injected_blob_is_foreground(self):
        model, _ = converged_model()
        frame = np.full((48, 64), 50, dtype=np.uint8)
        frame[10:30, 20:40] = 150
        mask = model.update(GrayFrame.from_array(frame))
        blob_mask = mask[10:30, 20:40]
        assert blob_mask.mean() >= 0.9
        outside = mask.copy()
        outside[10:30, 20:40] = False
        assert outside.mean() < 0.01

    def test_alpha_zero_never_adapts(self):
        params = GmmParams(alpha=0.0)
        model = GmmBackgroundModel(16, 16, params)
        model.update(constant_frame(16, 16, 50))
        frame = np.full((16, 16), 50, dtype=np.uint8)
        frame[4:8, 4:8] = 200
        for _ in range(200):
            mask = model.update(GrayFrame.from_array(frame))
        assert mask[4:8, 4:8].all()  # still foreground after 200 frames
        assert not mask[0:4, 0:4].any()

    def test_weights_sum_to_one(self):
        model, _ = converged_model(frames=10)
        frame = np.random.default_rng(0).integers(0, 255, size=(48, 64), dtype=np.uint8)
        model.update(GrayFrame.from_array(frame))
        sums = model.weight.sum(axis=0)
        assert np.allclose(sums, 1.0, atol=1e-9)

    def test_dimension_mismatch_rejected(self):
        model = GmmBackgroundModel(32, 32)
        with pytest.raises(ValidationError):
            model.update(constant_frame(16, 16, 0))


class TestBlobs:
    def test_empty_mask(self):
        assert extract_blobs(np.zeros((20, 20), dtype=bool)) == []

    def test_single_square(self):
        mask = np.zeros((20, 20), dtype=bool)
        mask[10:13, 10:13] = True
        blobs = extract_blobs(mask, min_area=1)
        assert len(blobs) == 1
        blob = blobs[0]
        assert blob.centroid == (11.0, 11.0)
        assert blob.area_px == 9
        assert (blob.bbox.x, blob.bbox.y, blob.bbox.w, blob.bbox.h) == (10, 10, 3, 3)

    def test_two_separated_squares(self):
        mask = np.zeros((20, 20), dtype=bool)
        mask[2:5, 2:5] = True
        mask[10:13, 10:13] = True
        assert len(extract_blobs(mask, min_area=1)) == 2

    def test_diagonal_touch_is_one_blob(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[2, 2] = True
        mask[3, 3] = True  # 8-connectivity joins diagonals
        assert len(extract_blobs(mask, min_area=1)) == 1

    def test_min_area_filter(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[0, 0] = True
        mask[5:8, 5:8] = True
        blobs = extract_blobs(mask, min_area=4)
        assert len(blobs) == 1
        assert blobs[0].area_px == 9


def blob_at(x, y):
    from skyfence.core import BoundingBox

    return Blob((x, y), BoundingBox(x - 1, y - 1, 2, 2), 4)


class TestTracker:
    def test_stationary_convergence(self):
        tracker = KalmanTracker()
        for _ in range(50):
            tracks = tracker.step([blob_at(100.0, 80.0)])
        tr = tracks[0]
        assert tr.state[0] == pytest.approx(100.0, abs=1e-6)
        assert tr.state[1] == pytest.approx(80.0, abs=1e-6)
        assert abs(tr.state[2]) < 1e-6
        assert abs(tr.state[3]) < 1e-6

    def test_constant_velocity_convergence(self):
        tracker = KalmanTracker()
        for k in range(200):
            tracks = tracker.step([blob_at(10.0 + k, 50.0)])
        tr = tracks[0]
        assert tr.state[2] == pytest.approx(1.0, abs=1e-3)
        assert tr.state[0] == pytest.approx(10.0 + 199, abs=1e-3)

    def test_track_deleted_after_misses(self):
        params = TrackerParams(delete_misses=10)
        tracker = KalmanTracker(params)
        for _ in range(5):
            tracker.step([blob_at(50.0, 50.0)])
        for _ in range(11):
            tracker.step([])
        assert tracker.tracks == []

    def test_confirmation_after_hits(self):
        tracker = KalmanTracker(TrackerParams(confirm_hits=3))
        tracker.step([blob_at(10, 10)])
        assert not tracker.tracks[0].confirmed
        tracker.step([blob_at(10, 10)])
        tracker.step([blob_at(10, 10)])
        assert tracker.tracks[0].confirmed

    def test_gate_blocks_far_association(self):
        tracker = KalmanTracker(TrackerParams(gate_px=40))
        tracker.step([blob_at(10, 10)])
        tracker.step([blob_at(200, 200)])  # outside gate: new track
        assert len(tracker.tracks) == 2

    def test_covariance_stays_psd(self):
        tracker = KalmanTracker()
        rng = np.random.default_rng(7)
        for k in range(100):
            x = 50 + k + float(rng.normal(0, 2))
            y = 50 + float(rng.normal(0, 2))
            tracker.step([blob_at(x, y)])
            for tr in tracker.tracks:
                assert np.allclose(tr.covariance, tr.covariance.T, atol=1e-9)
                assert np.linalg.eigvalsh(tr.covariance).min() >= -1e-9

    def test_crossing_targets_stay_two_tracks(self):
        # two targets crossing paths; gate smaller than their separation
        tracker = KalmanTracker(TrackerParams(gate_px=20))
        n = 60
        ids_before = None
        for k in range(n):
            a = blob_at(10.0 + 2 * k, 40.0)  # leftward -> rightward mover
            b = blob_at(130.0 - 2 * k, 80.0)
            tracks = tracker.step([a, b])
        confirmed = [t for t in tracks if t.confirmed]
        assert len(confirmed) == 2
        assert len(tracker.tracks) == 2


class TestBestTrack:
    def make(self, id, age, confirmed=True):
        return Track(
            id=id,
            state=np.zeros(4),
            covariance=np.eye(4),
            age=age,
            hits=5,
            confirmed=confirmed,
        )

    def test_longest_history_wins_ties_to_lowest_id(self):
        tracks = [self.make(3, 5), self.make(1, 9), self.make(2, 9)]
        assert best_track(tracks) == 1

    def test_no_confirmed_tracks(self):
        assert best_track([]) is None
        assert best_track([self.make(1, 5, confirmed=False)]) is None

    def test_single_confirmed(self):
        assert best_track([self.make(4, 2)]) == 4

    def test_permutation_invariant(self):
        import itertools

        tracks = [self.make(3, 5), self.make(1, 9), self.make(2, 9), self.make(7, 1)]
        results = {best_track(list(perm)) for perm in itertools.permutations(tracks)}
        assert results == {1}


def test_track_direction_center_and_edges():
    def track_at(x, y):
        return Track(id=1, state=np.array([x, y, 0, 0]), covariance=np.eye(4))

    off = track_direction(track_at(512, 384), FISHEYE_MODEL)
    assert (off.azimuth_deg, off.elevation_deg) == (0.0, 0.0)
    off = track_direction(track_at(1024, 384), FISHEYE_MODEL)
    assert off.azimuth_deg == pytest.approx(90.0)
    off = track_direction(track_at(512, 0), FISHEYE_MODEL)
    assert off.elevation_deg == pytest.approx(45.0)
    with pytest.raises(ValidationError):
        track_direction(track_at(-5, 0), FISHEYE_MODEL)


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    frame = GrayFrame.from_array(rng.integers(0, 255, size=(24, 32), dtype=np.uint8))
    path = tmp_path / "frame.pgm"
    write_pgm(frame, path)
    loaded = read_pgm(path)
    assert loaded.width == 32 and loaded.height == 24
    assert np.array_equal(loaded.pixels, frame.pixels)


def test_pgm_rejects_ascii_format(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
    with pytest.raises(ValidationError):
        read_pgm(path)
