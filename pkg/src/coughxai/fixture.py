"""Seeded synthetic corpus: noise-burst "coughs" over a quiet noise floor.

Every patient gets one WAV at 44.1 kHz holding four analysis windows: three
with a band-limited burst at a fixed position and one with noise only. The
burst's centre frequency and length depend on the diagnosis plus a small
per-patient jitter, so the groups of the shipped cohort group file differ in
their spectral features.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
from scipy import signal

from coughxai.audio_io import encode_wav
from coughxai.cnn import dump_model, synthetic_model
from coughxai.spectrogram import CHUNK_LEN, FRAME_LEN, frequency_axis
from coughxai.stats import GroupConfig

RAW_RATE_HZ = 44100
DECIMATION = 5
WINDOW_RAW = CHUNK_LEN * DECIMATION
WINDOW_PATTERN = (True, True, False, True)
BAND_BINS = (8, 44)
NOISE_STD = 2e-3
BURST_RMS = 0.4
BURST_START_FRAME = 15
REFERENCE_GAIN = 40.0

# centre frequency (Hz), relative half-width and burst length (frames)
BURSTS = {
    "copd": (1850.0, 0.55, 62),
    "lung_cancer": (2300.0, 0.30, 70),
    "asthma": (1900.0, 0.40, 66),
    "sarcoidosis": (2000.0, 0.40, 66),
    "bronchiectasis": (1800.0, 0.45, 64),
    "pneumonia": (2200.0, 0.30, 72),
    "ard": (2400.0, 0.28, 74),
}


def cohort_groups_text() -> str:
    return resources.files("coughxai").joinpath("data/cohort_groups.txt").read_text()


def reference_band() -> tuple[float, float]:
    f = frequency_axis()
    return float(f[BAND_BINS[0]]), float(f[BAND_BINS[1]])


def _burst(rng: np.random.Generator, centre_hz: float, width: float, frames: int) -> np.ndarray:
    """Tukey-enveloped noise band-passed around ``centre_hz``."""
    n = frames * FRAME_LEN * DECIMATION
    lo, hi = centre_hz * (1.0 - width), centre_hz * (1.0 + width)
    taps = signal.firwin(255, [lo, hi], pass_zero=False, window="hamming", fs=RAW_RATE_HZ)
    noise = signal.lfilter(taps, 1.0, rng.standard_normal(n + taps.size))[taps.size:]
    noise /= np.sqrt(np.mean(noise ** 2))
    return BURST_RMS * signal.windows.tukey(n, 0.3) * noise


def patient_audio(rng: np.random.Generator, diagnosis: str) -> np.ndarray:
    centre, width, frames = BURSTS[diagnosis]
    centre *= 1.0 + rng.uniform(-0.05, 0.05)
    frames += int(rng.integers(-2, 3))
    start = BURST_START_FRAME * FRAME_LEN * DECIMATION
    audio = rng.normal(0.0, NOISE_STD, size=WINDOW_RAW * len(WINDOW_PATTERN))
    for w, has_cough in enumerate(WINDOW_PATTERN):
        if has_cough:
            burst = _burst(rng, centre, width, frames)
            offset = w * WINDOW_RAW + start
            audio[offset:offset + burst.size] += burst
    return np.clip(audio, -1.0, 1.0)


def config_text(patients: list[str], model: str | None = None) -> str:
    lo, hi = reference_band()
    scorer = f"model = {model}" if model else f"reference_band = {lo!r} {hi!r}\nreference_gain = {REFERENCE_GAIN!r}"
    lines = [
        "# Synthetic fixture pipeline; see README for every key.",
        "[pipeline]",
        scorer,
        "confidence = 0.9",
        "decimation = 5",
        "filter_taps = 64",
        "filter_cutoff = 0.8",
        "patch = 5 10",
        "stride = 5 10",
        "baseline = zero",
        "weight_mode = mapvalue",
        "thresholds = 0.5 0.6 0.7 0.8 0.9",
        "renyi = normalized",
        "renyi_q = 4",
        "rolloff = 0.85",
        "eps = 1e-12",
        "zero_frame_policy = skip",
        "spectrogram_average = linear",
        "t_test = pooled",
        "groups = groups.txt",
        "",
        "[manifest]",
    ]
    lines += [f"{pid} = audio/{pid}.wav" for pid in patients]
    return "\n".join(lines) + "\n"


def generate_fixture(out_dir, seed: int = 7, with_model: bool = True) -> Path:
    """Write audio/, groups.txt, pipeline.cfg and (optionally) model.cnnw.

    Returns the config path. Output bytes depend only on ``seed``.
    """
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    groups_text = cohort_groups_text()
    diagnoses = GroupConfig.parse(groups_text).diagnoses
    rng = np.random.default_rng(seed)
    for pid in sorted(diagnoses):
        samples = patient_audio(rng, diagnoses[pid])
        (out / "audio" / f"{pid}.wav").write_bytes(encode_wav(samples, RAW_RATE_HZ))
    (out / "groups.txt").write_text(groups_text)
    cfg = out / "pipeline.cfg"
    cfg.write_text(config_text(sorted(diagnoses)))
    if with_model:
        (out / "model.cnnw").write_bytes(dump_model(synthetic_model(seed)))
    return cfg
