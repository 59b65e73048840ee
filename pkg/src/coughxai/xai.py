"""Occlusion maps, patient-level averaging and threshold-weighted spectrograms."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from coughxai.cnn import Scorer, forward
from coughxai.spectrogram import LOG_EPS, Scale, SpectrogramMatrix


class Baseline(str, enum.Enum):
    ZERO = "zero"
    MAP_MIN = "mapmin"


class WeightMode(str, enum.Enum):
    MAP_VALUE = "mapvalue"
    INDICATOR = "indicator"


class AverageDomain(str, enum.Enum):
    LINEAR = "linear"
    LOG = "log"


@dataclass(frozen=True)
class OcclusionMap:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("occlusion map must be two-dimensional")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValueError("occlusion map values must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class OcclusionConfig:
    """Patch geometry in (frequency rows, time columns).

    Strides default to the patch size, giving a non-overlapping tiling.
    """

    patch_h: int = 5
    patch_w: int = 10
    stride_h: int | None = None
    stride_w: int | None = None
    baseline: Baseline = Baseline.ZERO

    def __post_init__(self):
        if self.stride_h is None:
            object.__setattr__(self, "stride_h", self.patch_h)
        if self.stride_w is None:
            object.__setattr__(self, "stride_w", self.patch_w)
        object.__setattr__(self, "baseline", Baseline(self.baseline))
        if self.patch_h < 1 or self.patch_w < 1:
            raise ValueError("patch dimensions must be at least 1")
        if self.stride_h < 1 or self.stride_w < 1:
            raise ValueError("strides must be at least 1")

    def check(self, shape: tuple[int, int]) -> None:
        if self.patch_h > shape[0] or self.patch_w > shape[1]:
            raise ValueError(
                f"patch {self.patch_h}x{self.patch_w} larger than input {shape[0]}x{shape[1]}"
            )

    def starts(self, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        self.check(shape)
        rows = np.arange(0, shape[0] - self.patch_h + 1, self.stride_h)
        cols = np.arange(0, shape[1] - self.patch_w + 1, self.stride_w)
        return rows, cols


@dataclass(frozen=True)
class PatientProfile:
    patient_id: str
    avg_spectrogram: SpectrogramMatrix
    avg_map: OcclusionMap
    n_windows: int

    def __post_init__(self):
        if self.n_windows < 1:
            raise ValueError("a patient profile needs at least one qualifying window")


def _image(spec) -> np.ndarray:
    if isinstance(spec, SpectrogramMatrix):
        if spec.scale is not Scale.LOG_NORMALIZED:
            raise ValueError("occlusion runs on log-normalized spectrograms")
        return spec.values
    return np.asarray(spec, dtype=np.float64)


def occlusion_grid(scorer: Scorer, spec, cfg: OcclusionConfig = OcclusionConfig(), threads: int = 1):
    """Raw importance ``max(0, p_orig - p_occluded)`` per patch position.

    Returns ``(grid, row_starts, col_starts)``. Every position is scored on
    its own, so the grid does not depend on ``threads``.
    """
    image = _image(spec)
    rows, cols = cfg.starts(image.shape)
    fill = 0.0 if cfg.baseline is Baseline.ZERO else float(image.min())
    p_orig = forward(scorer, image).p_cough
    positions = [(r, c) for r in rows for c in cols]

    def occluded_score(pos):
        r, c = pos
        occluded = image.copy()
        occluded[r:r + cfg.patch_h, c:c + cfg.patch_w] = fill
        return forward(scorer, occluded).p_cough

    if threads > 1 and len(positions) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(occluded_score, positions))
    else:
        scores = [occluded_score(pos) for pos in positions]
    drops = np.maximum(0.0, p_orig - np.asarray(scores, dtype=np.float64))
    return drops.reshape(len(rows), len(cols)), rows, cols


def resize_grid(grid: np.ndarray, row_centers, col_centers, shape: tuple[int, int]) -> np.ndarray:
    """Separable linear interpolation from patch centres to every pixel;
    values beyond the outermost centres are held constant."""
    grid = np.asarray(grid, dtype=np.float64)
    row_centers = np.asarray(row_centers, dtype=np.float64)
    col_centers = np.asarray(col_centers, dtype=np.float64)
    rr = np.arange(shape[0], dtype=np.float64)
    cc = np.arange(shape[1], dtype=np.float64)
    tall = np.column_stack([np.interp(rr, row_centers, grid[:, j]) for j in range(grid.shape[1])])
    return np.vstack([np.interp(cc, col_centers, tall[i]) for i in range(shape[0])])


def occlusion_map(scorer: Scorer, spec, cfg: OcclusionConfig = OcclusionConfig(), threads: int = 1) -> OcclusionMap:
    """Occlusion importance resized to the input grid and min-max scaled.

    A flat importance grid (including a single patch position) yields zeros.
    """
    image = _image(spec)
    grid, rows, cols = occlusion_grid(scorer, image, cfg, threads)
    if grid.min() == grid.max():
        return OcclusionMap(np.zeros(image.shape))
    full = resize_grid(
        grid,
        rows + (cfg.patch_h - 1) / 2.0,
        cols + (cfg.patch_w - 1) / 2.0,
        image.shape,
    )
    lo, hi = full.min(), full.max()
    if hi == lo:
        return OcclusionMap(np.zeros(image.shape))
    return OcclusionMap(np.clip((full - lo) / (hi - lo), 0.0, 1.0))


def _map_values(m) -> np.ndarray:
    return m.values if isinstance(m, OcclusionMap) else np.asarray(m, dtype=np.float64)


def average_maps(maps: Sequence) -> OcclusionMap:
    """Pixel-wise arithmetic mean."""
    maps = list(maps)
    if not maps:
        raise ValueError("average_maps needs at least one map")
    arrays = [_map_values(m) for m in maps]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("all maps must share the same dimensions")
    return OcclusionMap(np.clip(np.mean(np.stack(arrays), axis=0), 0.0, 1.0))


def average_spectrograms(specs: Sequence[SpectrogramMatrix], domain: AverageDomain = AverageDomain.LINEAR) -> SpectrogramMatrix:
    """Pixel-wise mean of linear-power spectrograms.

    ``domain="log"`` averages ``10 log10(S + eps)`` instead and maps the
    mean back to linear power.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("average_spectrograms needs at least one spectrogram")
    first = specs[0]
    for s in specs:
        if s.scale is not Scale.LINEAR:
            raise ValueError("average_spectrograms expects linear-power spectrograms")
        if s.shape != first.shape:
            raise ValueError("all spectrograms must share the same dimensions")
    stack = np.stack([s.values for s in specs])
    if AverageDomain(domain) is AverageDomain.LOG:
        mean_db = np.mean(10.0 * np.log10(stack + LOG_EPS), axis=0)
        values = np.maximum(10.0 ** (mean_db / 10.0) - LOG_EPS, 0.0)
    else:
        values = np.mean(stack, axis=0)
    return SpectrogramMatrix(values, first.sample_rate_hz, Scale.LINEAR)


def weight_spectrogram(
    s0: SpectrogramMatrix,
    m,
    th: float,
    mode: WeightMode = WeightMode.MAP_VALUE,
) -> SpectrogramMatrix:
    """Keep cells whose map value strictly exceeds ``th``.

    ``mapvalue`` multiplies kept cells by the map value; ``indicator`` keeps
    them unchanged. Other cells become 0.
    """
    if not 0.0 <= th <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {th}")
    mv = _map_values(m)
    if mv.shape != s0.shape:
        raise ValueError(f"map shape {mv.shape} does not match spectrogram shape {s0.shape}")
    keep = mv > th
    if WeightMode(mode) is WeightMode.INDICATOR:
        values = np.where(keep, s0.values, 0.0)
    else:
        values = np.where(keep, s0.values * mv, 0.0)
    return SpectrogramMatrix(values, s0.sample_rate_hz, Scale.LINEAR)


def build_profile(
    patient_id: str,
    linear_specs: Sequence[SpectrogramMatrix],
    maps: Sequence[OcclusionMap],
    domain: AverageDomain = AverageDomain.LINEAR,
) -> PatientProfile:
    if len(linear_specs) != len(maps):
        raise ValueError("need one occlusion map per spectrogram")
    return PatientProfile(
        patient_id,
        average_spectrograms(linear_specs, domain),
        average_maps(maps),
        len(maps),
    )
