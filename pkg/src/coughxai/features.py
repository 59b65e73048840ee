"""Frame-averaged spectral descriptors of a (weighted) power spectrogram.

Every per-frame quantity is averaged over frames. Frames with zero total
power have no defined centroid, entropy or roll-off; by default they are
skipped and the average runs over the remaining frames.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from coughxai.errors import DegenerateInputError
from coughxai.spectrogram import SAMPLE_RATE_HZ, SpectrogramMatrix, frequency_axis

FEATURE_NAMES = ("ac", "sp_bw", "sp_cf", "sp_f", "sp_fx", "sp_re", "sp_r")


class ZeroFramePolicy(str, enum.Enum):
    SKIP = "skip"
    ERROR = "error"


@dataclass(frozen=True)
class FeatureConfig:
    renyi_q: float = 4.0
    rolloff_fraction: float = 0.85
    eps: float = 1e-12
    zero_frame_policy: ZeroFramePolicy = ZeroFramePolicy.SKIP
    renyi_literal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "zero_frame_policy", ZeroFramePolicy(self.zero_frame_policy))
        if self.renyi_q <= 0 or self.renyi_q == 1:
            raise ValueError(f"renyi_q must be positive and different from 1, got {self.renyi_q}")
        if not 0.0 < self.rolloff_fraction < 1.0:
            raise ValueError(f"rolloff_fraction must lie in (0, 1), got {self.rolloff_fraction}")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")


DEFAULT_CONFIG = FeatureConfig()


@dataclass(frozen=True)
class SpectralFeatures:
    ac: float
    sp_bw: float
    sp_cf: float
    sp_f: float
    sp_fx: float
    sp_re: float
    sp_r: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _grid(s, freqs=None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(s, SpectrogramMatrix):
        values = s.values
        f = s.freqs if freqs is None else np.asarray(freqs, dtype=np.float64)
    else:
        values = np.asarray(s, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        f = (
            frequency_axis(values.shape[0] - 1, SAMPLE_RATE_HZ)
            if freqs is None
            else np.asarray(freqs, dtype=np.float64)
        )
    if values.ndim != 2:
        raise ValueError("spectrogram must be two-dimensional")
    if f.shape != (values.shape[0],):
        raise ValueError(f"frequency axis has {f.shape} entries for {values.shape[0]} bins")
    if np.any(values < 0):
        raise ValueError("spectrogram values must be nonnegative")
    return values, f


def _valid_frames(values: np.ndarray, cfg: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """Columns with positive total power, and those totals."""
    totals = values.sum(axis=0)
    valid = totals > 0
    if not valid.any():
        raise DegenerateInputError("every frame has zero total power")
    if cfg.zero_frame_policy is ZeroFramePolicy.ERROR and not valid.all():
        bad = np.flatnonzero(~valid)
        raise DegenerateInputError(f"{bad.size} zero-power frame(s), first at n={bad[0]}")
    return values[:, valid], totals[valid]


def relative_ac_power(s, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    """Mean over frames of non-DC power divided by total power."""
    values, _ = _grid(s)
    frames, totals = _valid_frames(values, cfg)
    return float(np.mean(frames[1:].sum(axis=0) / totals))


def spectral_centroid_frame(s, n: int, freqs=None) -> float:
    """Power-weighted mean frequency of frame ``n``."""
    values, f = _grid(s, freqs)
    col = values[:, n]
    total = col.sum()
    if total <= 0:
        raise DegenerateInputError(f"frame {n} has zero total power")
    return float(np.dot(f, col) / total)


def _centroids(frames: np.ndarray, totals: np.ndarray, f: np.ndarray) -> np.ndarray:
    return (f @ frames) / totals


def spectral_bandwidth(s, cfg: FeatureConfig = DEFAULT_CONFIG, freqs=None) -> float:
    """Mean over frames of the power-weighted variance around the centroid (Hz^2)."""
    values, f = _grid(s, freqs)
    frames, totals = _valid_frames(values, cfg)
    centroid = _centroids(frames, totals, f)
    spread = ((f[:, None] - centroid[None, :]) ** 2 * frames).sum(axis=0) / totals
    return float(np.mean(spread))


def spectral_crest(s, cfg: FeatureConfig = DEFAULT_CONFIG, freqs=None) -> float:
    """Mean of ``max_k S / (C * sum_k S)`` with ``C = 1 / (f_max - f_min + 1)``."""
    values, f = _grid(s, freqs)
    frames, totals = _valid_frames(values, cfg)
    c = 1.0 / (f.max() - f.min() + 1.0)
    return float(np.mean(frames.max(axis=0) / (c * totals)))


def spectral_flatness(s, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    """Mean over frames of geometric over arithmetic mean, eps-floored."""
    values, _ = _grid(s)
    frames, _ = _valid_frames(values, cfg)
    shifted = frames + cfg.eps
    geometric = np.exp(np.mean(np.log(shifted), axis=0))
    return float(np.mean(geometric / np.mean(shifted, axis=0)))


def spectral_flux(s) -> float:
    """Average signed change of total power between consecutive frames.

    The sum telescopes to ``(sum_k S[k, N-1] - sum_k S[k, 0]) / (N - 1)``.
    """
    values, _ = _grid(s)
    n = values.shape[1]
    if n < 2:
        raise ValueError("spectral flux needs at least two frames")
    return float(np.sum(values[:, 1:] - values[:, :-1]) / (n - 1))


def renyi_entropy(s, cfg: FeatureConfig = DEFAULT_CONFIG) -> float:
    """Order-q Rényi entropy (nats) of each frame's normalised spectrum, averaged.

    With ``cfg.renyi_literal`` the un-normalised form
    ``log((sum_k S)^q) / (1 - q)`` is averaged instead.
    """
    values, _ = _grid(s)
    frames, totals = _valid_frames(values, cfg)
    q = cfg.renyi_q
    if cfg.renyi_literal:
        per_frame = q * np.log(totals) / (1.0 - q)
    else:
        p = frames / totals
        per_frame = np.log(np.sum(p ** q, axis=0)) / (1.0 - q)
    return float(np.mean(per_frame))


def rolloff_bins(s, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Smallest k per valid frame whose cumulative power reaches the fraction."""
    values, _ = _grid(s)
    frames, _ = _valid_frames(values, cfg)
    cumulative = np.cumsum(frames, axis=0)
    target = cfg.rolloff_fraction * cumulative[-1]
    return np.argmax(cumulative >= target[None, :], axis=0)


def spectral_rolloff(s, cfg: FeatureConfig = DEFAULT_CONFIG, freqs=None) -> float:
    """Mean roll-off frequency (Hz)."""
    _, f = _grid(s, freqs)
    return float(np.mean(f[rolloff_bins(s, cfg)]))


def extract_features(s, cfg: FeatureConfig = DEFAULT_CONFIG, freqs=None) -> SpectralFeatures:
    values, f = _grid(s, freqs)
    _valid_frames(values, cfg)
    return SpectralFeatures(
        ac=relative_ac_power(values, cfg),
        sp_bw=spectral_bandwidth(values, cfg, f),
        sp_cf=spectral_crest(values, cfg, f),
        sp_f=spectral_flatness(values, cfg),
        sp_fx=spectral_flux(values),
        sp_re=renyi_entropy(values, cfg),
        sp_r=spectral_rolloff(values, cfg, f),
    )
