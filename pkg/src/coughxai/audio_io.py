"""WAV decoding, anti-aliased integer decimation and fixed-length chunking."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import signal

from coughxai.errors import FormatError, UnsupportedFormatError

PCM_SCALE = 32768.0

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

DEFAULT_DECIMATION = 5
DEFAULT_FILTER_TAPS = 64
DEFAULT_CUTOFF_RATIO = 0.8


@dataclass(frozen=True)
class AudioClip:
    """Mono sample buffer.

    ``samples`` is a float64 array; decoded PCM lies in [-1, 1].
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


def _iter_chunks(data: bytes, start: int):
    pos = start
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        yield chunk_id, size, body_start
        pos = body_start + size + (size & 1)


def decode_wav(data: bytes) -> AudioClip:
    """Decode a 16-bit PCM RIFF/WAVE byte string into a mono clip.

    Stereo input is averaged across channels. Samples are scaled by 1/32768.
    """
    data = bytes(data)
    if len(data) < 12:
        raise FormatError(f"WAV too short for a RIFF header ({len(data)} bytes)")
    if data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE container")

    fmt = None
    pcm = None
    for chunk_id, size, body in _iter_chunks(data, 12):
        if chunk_id == b"fmt ":
            if size < 16 or body + size > len(data):
                raise FormatError("fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", data, body)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if size < 40:
                    raise FormatError("WAVE_FORMAT_EXTENSIBLE fmt chunk truncated")
                (sub_format,) = struct.unpack_from("<H", data, body + 24)
                fmt = (sub_format,) + fmt[1:]
        elif chunk_id == b"data":
            if fmt is None:
                raise FormatError("data chunk precedes fmt chunk")
            if body + size > len(data):
                raise FormatError(
                    f"data chunk declares {size} bytes but only {len(data) - body} remain"
                )
            pcm = data[body:body + size]
            break
    if fmt is None:
        raise FormatError("missing fmt chunk")
    if pcm is None:
        raise FormatError("missing data chunk")

    audio_format, channels, rate, _byte_rate, block_align, bits = fmt
    if audio_format != WAVE_FORMAT_PCM:
        raise UnsupportedFormatError(f"unsupported WAV encoding tag 0x{audio_format:04x}")
    if bits != 16:
        raise UnsupportedFormatError(f"unsupported bit depth {bits}; only 16-bit PCM")
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"unsupported channel count {channels}")
    if rate == 0:
        raise FormatError("sample rate is zero")
    if block_align != 2 * channels:
        raise FormatError(f"block align {block_align} inconsistent with {channels} channel(s)")
    if len(pcm) % block_align:
        raise FormatError("data chunk is not a whole number of sample frames")

    frames = np.frombuffer(pcm, dtype="<i2").astype(np.float64) / PCM_SCALE
    frames = frames.reshape(-1, channels)
    mono = frames[:, 0] if channels == 1 else frames.mean(axis=1)
    return AudioClip(mono, rate)


def encode_wav(samples, sample_rate_hz: int, channels: int = 1) -> bytes:
    """Encode float samples in [-1, 1] as 16-bit PCM WAV.

    For ``channels=2`` pass an array of shape (n, 2). Values are scaled by
    32768, rounded and clipped to the int16 range.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if channels == 1 and arr.ndim != 1:
        raise ValueError("mono samples must be one-dimensional")
    if channels == 2 and (arr.ndim != 2 or arr.shape[1] != 2):
        raise ValueError("stereo samples must have shape (n, 2)")
    if channels not in (1, 2):
        raise ValueError("only 1 or 2 channels supported")
    pcm = np.clip(np.rint(arr * PCM_SCALE), -32768, 32767).astype("<i2").tobytes()
    fmt = struct.pack(
        "<HHIIHH", WAVE_FORMAT_PCM, channels, sample_rate_hz,
        sample_rate_hz * 2 * channels, 2 * channels, 16,
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(pcm)) + pcm
    if len(pcm) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def read_wav(path) -> AudioClip:
    with open(path, "rb") as fh:
        return decode_wav(fh.read())


def antialias_filter(
    sample_rate_hz: int,
    factor: int,
    num_taps: int = DEFAULT_FILTER_TAPS,
    cutoff_ratio: float = DEFAULT_CUTOFF_RATIO,
) -> np.ndarray:
    """Hamming-windowed sinc low-pass with unity DC gain.

    The cutoff sits at ``cutoff_ratio`` times the post-decimation Nyquist.
    """
    if not 0.0 < cutoff_ratio <= 1.0:
        raise ValueError(f"cutoff_ratio must be in (0, 1], got {cutoff_ratio}")
    cutoff_hz = cutoff_ratio * (sample_rate_hz / factor) / 2.0
    return signal.firwin(num_taps, cutoff_hz, window="hamming", fs=sample_rate_hz)


def decimate(
    clip: AudioClip,
    factor: int,
    num_taps: int = DEFAULT_FILTER_TAPS,
    cutoff_ratio: float = DEFAULT_CUTOFF_RATIO,
) -> AudioClip:
    """Low-pass filter then keep every ``factor``-th sample.

    Filtering is a zero-padded convolution, re-centred by the filter's group
    delay (rounded down) so the filtered signal keeps the input's length
    before selection.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"decimation factor must be a positive integer, got {factor}")
    factor = int(factor)
    if len(clip) == 0:
        raise ValueError("cannot decimate an empty clip")
    if clip.sample_rate_hz % factor:
        raise ValueError(
            f"sample rate {clip.sample_rate_hz} Hz is not divisible by factor {factor}"
        )
    if factor == 1:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz)
    taps = antialias_filter(clip.sample_rate_hz, factor, num_taps, cutoff_ratio)
    offset = (len(taps) - 1) // 2
    filtered = np.convolve(clip.samples, taps)[offset:offset + len(clip)]
    return AudioClip(filtered[::factor], clip.sample_rate_hz // factor)


def segment_chunks(samples, chunk_len_samples: int) -> list[np.ndarray]:
    """Split into consecutive non-overlapping chunks; the remainder is dropped."""
    if chunk_len_samples <= 0:
        raise ValueError("chunk length must be positive")
    if isinstance(samples, AudioClip):
        samples = samples.samples
    samples = np.asarray(samples, dtype=np.float64)
    n_chunks = samples.shape[0] // chunk_len_samples
    return [
        samples[i * chunk_len_samples:(i + 1) * chunk_len_samples]
        for i in range(n_chunks)
    ]
