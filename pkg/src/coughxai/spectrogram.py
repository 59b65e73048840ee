"""Short-time power spectra on 89-sample Hann frames.

An 8900-sample chunk at 8820 Hz becomes a 45x100 one-sided PSD grid whose
frequency axis is ``f[k] = k * fs / (2K + 1)`` for ``k = 0..K``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import get_window

K_MAX = 44
N_FRAMES = 100
FRAME_LEN = 2 * K_MAX + 1
CHUNK_LEN = FRAME_LEN * N_FRAMES
SAMPLE_RATE_HZ = 8820
LOG_EPS = 1e-12


class Scale(str, enum.Enum):
    LINEAR = "linear"
    LOG_NORMALIZED = "lognorm"


@dataclass(frozen=True)
class SpectrogramMatrix:
    """(K+1) x N grid; row k is frequency bin k, column n is frame n."""

    values: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ
    scale: Scale = Scale.LINEAR

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"spectrogram must be a non-empty 2-D grid, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrogram contains non-finite values")
        if np.any(values < 0):
            raise ValueError("spectrogram values must be nonnegative")
        scale = Scale(self.scale)
        if scale is Scale.LOG_NORMALIZED and np.any(values > 1):
            raise ValueError("log-normalized spectrogram values must lie in [0, 1]")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "scale", scale)

    @property
    def k_max(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def freqs(self) -> np.ndarray:
        return frequency_axis(self.k_max, self.sample_rate_hz)

    def with_values(self, values, scale: Scale | None = None) -> "SpectrogramMatrix":
        return SpectrogramMatrix(values, self.sample_rate_hz, self.scale if scale is None else scale)


def frequency_axis(k_max: int = K_MAX, sample_rate_hz: float = SAMPLE_RATE_HZ) -> np.ndarray:
    return np.arange(k_max + 1) * (sample_rate_hz / (2 * k_max + 1))


@lru_cache(maxsize=8)
def _hann(length: int) -> np.ndarray:
    # Periodic (DFT-even) Hann, as used by standard periodogram estimators.
    w = get_window("hann", length, fftbins=True)
    w.setflags(write=False)
    return w


def hann_window(length: int = FRAME_LEN) -> np.ndarray:
    return _hann(length)


def frame_psd(frame) -> np.ndarray:
    """One-sided PSD of one 89-sample frame, normalised by window energy.

    Bin 0 is ``|X[0]|^2 / U`` and bins 1..44 are ``2 |X[k]|^2 / U`` with
    ``U = sum(w**2)``. The odd DFT length has no Nyquist bin to leave undoubled.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (FRAME_LEN,):
        raise ValueError(f"frame must hold exactly {FRAME_LEN} samples, got shape {frame.shape}")
    return _frames_psd(frame[None, :])[0]


def _frames_psd(frames: np.ndarray) -> np.ndarray:
    """PSD of each row of ``frames`` (odd row length)."""
    length = frames.shape[1]
    w = hann_window(length)
    u = float(np.sum(w * w))
    spec = np.fft.rfft(frames * w, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    power[:, 1:] *= 2.0
    return power / u


def compute_spectrogram(chunk, sample_rate_hz: float = SAMPLE_RATE_HZ) -> SpectrogramMatrix:
    """Column n is the PSD of samples ``89n .. 89n+88`` (no overlap)."""
    chunk = np.asarray(chunk, dtype=np.float64)
    if chunk.shape != (CHUNK_LEN,):
        raise ValueError(f"chunk must hold exactly {CHUNK_LEN} samples, got shape {chunk.shape}")
    frames = chunk.reshape(N_FRAMES, FRAME_LEN)
    return SpectrogramMatrix(_frames_psd(frames).T, sample_rate_hz, Scale.LINEAR)


def log_normalize(spec: SpectrogramMatrix, eps: float = LOG_EPS) -> SpectrogramMatrix:
    """``10 log10(S + eps)`` rescaled to [0, 1] per spectrogram.

    A flat log image (max == min) maps to all zeros.
    """
    if spec.scale is not Scale.LINEAR:
        raise ValueError("log_normalize expects a linear-power spectrogram")
    db = 10.0 * np.log10(spec.values + eps)
    lo, hi = db.min(), db.max()
    if hi == lo:
        out = np.zeros_like(db)
    else:
        out = np.clip((db - lo) / (hi - lo), 0.0, 1.0)
    return SpectrogramMatrix(out, spec.sample_rate_hz, Scale.LOG_NORMALIZED)
