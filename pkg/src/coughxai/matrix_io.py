"""Plain-text matrix files shared by spectrograms and occlusion maps.

Layout::

    K=44 N=100 fs=8820 scale=linear
    <row k=0: N space-separated values>
    ...
    <row k=K>

``scale`` is one of ``linear``, ``lognorm`` or ``map``. Values are written
with ``repr`` so a write/read cycle is exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from coughxai.errors import FormatError
from coughxai.spectrogram import Scale, SpectrogramMatrix

MAP_SCALE = "map"
SCALES = ("linear", "lognorm", MAP_SCALE)


def _format_number(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def format_matrix(values, sample_rate_hz: float, scale: str) -> str:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("matrix must be two-dimensional")
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}")
    k_max = values.shape[0] - 1
    lines = [f"K={k_max} N={values.shape[1]} fs={_format_number(sample_rate_hz)} scale={scale}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in values)
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, source: str = "<matrix>") -> tuple[np.ndarray, float, str]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{source}: empty matrix file")
    header = {}
    for token in lines[0].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise FormatError(f"{source}: malformed header token {token!r}")
        header[key] = value
    missing = {"K", "N", "fs", "scale"} - header.keys()
    if missing:
        raise FormatError(f"{source}: header missing {sorted(missing)}")
    try:
        k_max = int(header["K"])
        n = int(header["N"])
        fs = float(header["fs"])
    except ValueError as exc:
        raise FormatError(f"{source}: bad header value ({exc})") from None
    scale = header["scale"]
    if scale not in SCALES:
        raise FormatError(f"{source}: unknown scale {scale!r}")
    rows = lines[1:]
    if len(rows) != k_max + 1:
        raise FormatError(f"{source}: expected {k_max + 1} rows, found {len(rows)}")
    try:
        values = np.array([[float(v) for v in row.split()] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{source}: non-numeric value ({exc})") from None
    if values.ndim != 2 or values.shape[1] != n:
        raise FormatError(f"{source}: every row must hold N={n} values")
    return values, fs, scale


def write_matrix(path, values, sample_rate_hz: float, scale: str) -> None:
    Path(path).write_text(format_matrix(values, sample_rate_hz, scale))


def read_matrix(path) -> tuple[np.ndarray, float, str]:
    path = Path(path)
    return parse_matrix(path.read_text(), str(path))


def write_spectrogram(path, spec: SpectrogramMatrix) -> None:
    write_matrix(path, spec.values, spec.sample_rate_hz, spec.scale.value)


def read_spectrogram(path) -> SpectrogramMatrix:
    values, fs, scale = read_matrix(path)
    if scale == MAP_SCALE:
        raise FormatError(f"{path}: expected a spectrogram, found an occlusion map")
    try:
        return SpectrogramMatrix(values, fs, Scale(scale))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
