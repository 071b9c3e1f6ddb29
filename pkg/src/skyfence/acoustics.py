"""Audio channel: rolling one-second buffer, MFCC features, classifier.

The buffer holds exactly one second at 44100 Hz and is reclassified on a
50 ms tick. Features are standard MFCCs: Hann-windowed 1024-sample frames
hopped by 441 samples (98 frames per buffer), power spectrum, a 26-band
triangular mel filterbank, log energies, orthonormal DCT-II, first 13
coefficients kept. Clip-level features pool per-coefficient mean and
standard deviation across frames.

Classification is nearest-centroid Gaussian scoring over the pooled
features (drone / helicopter / background). It sits behind a small
interface so a learned model can replace it without touching the worker.
"""

from __future__ import annotations

import functools
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fftpack import dct

from .core import TargetClass, ValidationError

SAMPLE_RATE = 44100
BUFFER_SAMPLES = 44100  # exactly one second

AUDIO_CLASSES = (TargetClass.DRONE, TargetClass.HELICOPTER, TargetClass.BACKGROUND)

_MEL_SCALE = 2595.0
_MEL_BREAK_HZ = 700.0


def mel(f_hz: float) -> float:
    """Hz to mel."""
    if f_hz < 0:
        raise ValidationError(f"frequency must be >= 0: {f_hz}")
    return _MEL_SCALE * np.log10(1.0 + f_hz / _MEL_BREAK_HZ)


def mel_to_hz(m: float) -> float:
    return _MEL_BREAK_HZ * (10.0 ** (m / _MEL_SCALE) - 1.0)


@dataclass(frozen=True)
class MfccConfig:
    window_len: int = 1024
    hop: int = 441
    n_mels: int = 26
    fmin_hz: float = 20.0
    fmax_hz: float = SAMPLE_RATE / 2
    n_coeffs: int = 13
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.fmax_hz > SAMPLE_RATE / 2:
            raise ValidationError(f"fmax above Nyquist: {self.fmax_hz}")
        if self.n_coeffs > self.n_mels:
            raise ValidationError("cannot keep more coefficients than mel bands")

    @property
    def frames_per_buffer(self) -> int:
        return (BUFFER_SAMPLES - self.window_len) // self.hop + 1


class AudioRingBuffer:
    """Rolling mono buffer of the most recent second of audio."""

    def __init__(self):
        self._buf = np.zeros(BUFFER_SAMPLES, dtype=np.float64)
        self._written = 0

    def push(self, samples: np.ndarray) -> None:
        s = np.asarray(samples, dtype=np.float64)
        if s.size >= BUFFER_SAMPLES:
            self._buf = s[-BUFFER_SAMPLES:].copy()
        else:
            self._buf = np.concatenate([self._buf[s.size:], s])
        self._written += s.size

    @property
    def full(self) -> bool:
        return self._written >= BUFFER_SAMPLES

    def snapshot(self) -> np.ndarray:
        return self._buf.copy()


@functools.lru_cache(maxsize=4)
def _filterbank(cfg: MfccConfig) -> np.ndarray:
    """Triangular mel filters, 50% overlapping on the mel scale."""
    n_bins = cfg.window_len // 2 + 1
    edges_mel = np.linspace(mel(cfg.fmin_hz), mel(cfg.fmax_hz), cfg.n_mels + 2)
    edges_hz = np.array([mel_to_hz(m) for m in edges_mel])
    bin_hz = np.arange(n_bins) * SAMPLE_RATE / cfg.window_len
    bank = np.zeros((cfg.n_mels, n_bins))
    for k in range(cfg.n_mels):
        lo, mid, hi = edges_hz[k], edges_hz[k + 1], edges_hz[k + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        bank[k] = np.maximum(0.0, np.minimum(up, down))
    return bank


def mfcc(buffer: np.ndarray, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """MFCC matrix (frames x n_coeffs) over a full one-second buffer."""
    buf = np.asarray(buffer, dtype=np.float64)
    if buf.shape != (BUFFER_SAMPLES,):
        raise ValidationError(
            f"buffer must hold exactly {BUFFER_SAMPLES} samples, got {buf.shape}"
        )
    n = cfg.frames_per_buffer
    window = np.hanning(cfg.window_len)
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(n)[:, None]
    frames = buf[idx] * window
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    energies = power @ _filterbank(cfg).T
    log_energies = np.log(np.maximum(energies, cfg.log_floor))
    coeffs = dct(log_energies, type=2, axis=1, norm="ortho")
    return coeffs[:, : cfg.n_coeffs]


def mel_band_energies(buffer: np.ndarray, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Pre-DCT filterbank energies (frames x n_mels); for diagnostics."""
    buf = np.asarray(buffer, dtype=np.float64)
    n = cfg.frames_per_buffer
    window = np.hanning(cfg.window_len)
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(n)[:, None]
    frames = buf[idx] * window
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    return power @ _filterbank(cfg).T


def featurize(coeffs: np.ndarray) -> np.ndarray:
    """Pool a coefficient matrix to per-coefficient mean and std (26 dims)."""
    m = np.asarray(coeffs, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ValidationError("featurize needs at least two frames")
    return np.concatenate([m.mean(axis=0), m.std(axis=0)])


_VAR_FLOOR = 1e-8


class CentroidModel:
    """Per-class Gaussian (diagonal) over pooled MFCC features."""

    def __init__(self):
        self.means: dict[TargetClass, np.ndarray] = {}
        self.variances: dict[TargetClass, np.ndarray] = {}

    def fit(self, samples: dict[TargetClass, list[np.ndarray]]) -> "CentroidModel":
        for cls, vecs in samples.items():
            if cls not in AUDIO_CLASSES:
                raise ValidationError(f"not an audio class: {cls}")
            if not vecs:
                raise ValidationError(f"no training samples for {cls.value}")
            mat = np.stack(vecs)
            self.means[cls] = mat.mean(axis=0)
            self.variances[cls] = np.maximum(mat.var(axis=0), _VAR_FLOOR)
        return self

    @property
    def trained(self) -> bool:
        return all(cls in self.means for cls in AUDIO_CLASSES)

    def classify(self, features: np.ndarray) -> tuple[TargetClass, float]:
        """Label plus softmax confidence over negative Mahalanobis scores."""
        if not self.trained:
            raise ValidationError("classifier has no model for every audio class")
        v = np.asarray(features, dtype=np.float64)
        classes = list(AUDIO_CLASSES)
        scores = np.array(
            [
                -float(np.sum((v - self.means[c]) ** 2 / self.variances[c]))
                for c in classes
            ]
        )
        shifted = np.exp(scores - scores.max())
        probs = shifted / shifted.sum()
        best = int(np.argmax(probs))
        return classes[best], float(probs[best])

    def confidences(self, features: np.ndarray) -> dict[TargetClass, float]:
        v = np.asarray(features, dtype=np.float64)
        classes = list(AUDIO_CLASSES)
        scores = np.array(
            [
                -float(np.sum((v - self.means[c]) ** 2 / self.variances[c]))
                for c in classes
            ]
        )
        shifted = np.exp(scores - scores.max())
        probs = shifted / shifted.sum()
        return {c: float(p) for c, p in zip(classes, probs)}


def classify(model: CentroidModel, features: np.ndarray) -> tuple[TargetClass, float]:
    """Functional wrapper over CentroidModel.classify."""
    return model.classify(features)


def classify_buffer(
    model: CentroidModel, buffer: np.ndarray, cfg: MfccConfig = MfccConfig()
) -> tuple[TargetClass, float]:
    """Full pipeline on one buffer: MFCC, pooling, centroid scoring."""
    return model.classify(featurize(mfcc(buffer, cfg)))


def read_wav(path: Path) -> np.ndarray:
    """Load a mono 16-bit 44100 Hz PCM WAV as floats in [-1, 1]."""
    with wave.open(str(path), "rb") as wav:
        if wav.getnchannels() != 1:
            raise ValidationError(
                f"{path}: expected mono audio, got {wav.getnchannels()} channels"
            )
        if wav.getsampwidth() != 2:
            raise ValidationError(
                f"{path}: expected 16-bit PCM, got {8 * wav.getsampwidth()}-bit"
            )
        if wav.getframerate() != SAMPLE_RATE:
            raise ValidationError(
                f"{path}: expected {SAMPLE_RATE} Hz, got {wav.getframerate()}"
            )
        raw = wav.readframes(wav.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(samples: np.ndarray, path: Path) -> None:
    """Write floats in [-1, 1] as mono 16-bit 44100 Hz PCM."""
    clipped = np.clip(np.asarray(samples), -1.0, 1.0)
    pcm = (clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(SAMPLE_RATE)
        wav.writeframes(pcm.tobytes())
