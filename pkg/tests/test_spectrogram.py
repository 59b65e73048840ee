import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coughxai.spectrogram import (
    CHUNK_LEN,
    FRAME_LEN,
    K_MAX,
    N_FRAMES,
    SAMPLE_RATE_HZ,
    Scale,
    SpectrogramMatrix,
    compute_spectrogram,
    frame_psd,
    frequency_axis,
    hann_window,
    log_normalize,
)

F = frequency_axis()


def naive_psd(frame):
    """Direct-summation DFT with the same one-sided, window-energy scaling."""
    m = len(frame)
    w = [0.5 - 0.5 * math.cos(2 * math.pi * i / m) for i in range(m)]
    u = sum(x * x for x in w)
    out = []
    for k in range(K_MAX + 1):
        re = sum(w[i] * frame[i] * math.cos(2 * math.pi * k * i / m) for i in range(m))
        im = -sum(w[i] * frame[i] * math.sin(2 * math.pi * k * i / m) for i in range(m))
        out.append((1 if k == 0 else 2) * (re * re + im * im) / u)
    return np.array(out)


def tone(freq, n, amp=1.0):
    return amp * np.cos(2 * np.pi * freq * np.arange(n) / SAMPLE_RATE_HZ)


def test_axis_and_constants():
    assert FRAME_LEN == 89 and CHUNK_LEN == 8900
    assert F[10] == pytest.approx(10 * 8820 / 89)
    assert F.size == 45


def test_window_is_periodic_hann():
    w = hann_window()
    i = np.arange(FRAME_LEN)
    np.testing.assert_allclose(w, 0.5 - 0.5 * np.cos(2 * np.pi * i / FRAME_LEN), atol=1e-15)


def test_zero_frame():
    np.testing.assert_array_equal(frame_psd(np.zeros(89)), np.zeros(45))


def test_frame_length_checked():
    with pytest.raises(ValueError):
        frame_psd(np.zeros(88))
    with pytest.raises(ValueError):
        compute_spectrogram(np.zeros(8899))


def test_matches_naive_dft():
    rng = np.random.default_rng(3)
    for _ in range(5):
        frame = rng.standard_normal(89)
        np.testing.assert_allclose(frame_psd(frame), naive_psd(frame), rtol=1e-9, atol=1e-12)


def test_tone_peak_at_bin_10():
    psd = frame_psd(tone(F[10], 89))
    assert int(np.argmax(psd)) == 10
    np.testing.assert_allclose(psd, naive_psd(tone(F[10], 89)), rtol=1e-9, atol=1e-12)


def test_parseval():
    rng = np.random.default_rng(11)
    w = hann_window()
    u = np.sum(w * w)
    for _ in range(20):
        x = rng.standard_normal(89)
        # a full 89-point DFT carries M times the time-domain energy
        assert frame_psd(x).sum() / FRAME_LEN == pytest.approx(np.sum((w * x) ** 2) / u, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, 89, elements=st.floats(-1, 1)),
    st.floats(-100, 100, allow_nan=False),
)
def test_power_homogeneity(frame, c):
    np.testing.assert_allclose(frame_psd(c * frame), c * c * frame_psd(frame), rtol=1e-9, atol=1e-12)


def test_spectrogram_shape_and_tone():
    spec = compute_spectrogram(tone(F[10], CHUNK_LEN))
    assert spec.shape == (45, 100)
    assert spec.k_max == 44 and spec.n_frames == 100
    assert spec.scale is Scale.LINEAR
    assert np.all(np.argmax(spec.values, axis=0) == 10)


def test_zero_chunk():
    np.testing.assert_array_equal(compute_spectrogram(np.zeros(CHUNK_LEN)).values, np.zeros((45, 100)))


def test_tone_in_second_half_only():
    x = np.zeros(CHUNK_LEN)
    x[50 * 89:] = tone(F[10], 50 * 89)
    spec = compute_spectrogram(x).values
    np.testing.assert_array_equal(spec[:, :50], 0.0)
    sums = spec[:, 50:].sum(axis=0)
    assert np.all(sums > 1.0)


def test_column_locality():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(CHUNK_LEN)
    base = compute_spectrogram(x).values
    y = x.copy()
    y[37 * 89:38 * 89] += rng.standard_normal(89)
    changed = compute_spectrogram(y).values
    diff = np.any(changed != base, axis=0)
    assert np.flatnonzero(diff).tolist() == [37]


def test_columns_match_frame_psd():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(CHUNK_LEN)
    spec = compute_spectrogram(x).values
    for n in (0, 41, 99):
        np.testing.assert_array_equal(spec[:, n], frame_psd(x[n * 89:(n + 1) * 89]))


def test_log_normalize_constant_is_zero():
    out = log_normalize(SpectrogramMatrix(np.full((45, 100), 3.0)))
    assert out.scale is Scale.LOG_NORMALIZED
    np.testing.assert_array_equal(out.values, 0.0)


def test_log_normalize_endpoints():
    s = np.zeros((45, 100))
    s[4, 7] = 1.0
    out = log_normalize(SpectrogramMatrix(s)).values
    assert out[4, 7] == 1.0
    assert out.sum() == 1.0


def test_log_normalize_hand_value():
    s = np.zeros((3, 4))
    s[0, 0], s[1, 1] = 0.01, 1.0
    eps = 1e-12
    lmin = 10 * math.log10(eps)
    lmax = 10 * math.log10(1.0 + eps)
    expected = (10 * math.log10(0.01 + eps) - lmin) / (lmax - lmin)
    out = log_normalize(SpectrogramMatrix(s)).values
    assert out[0, 0] == pytest.approx(expected, rel=1e-12)
    assert out[1, 1] == 1.0 and out[2, 3] == 0.0


def test_log_normalize_requires_linear():
    lognorm = log_normalize(SpectrogramMatrix(np.eye(3)))
    with pytest.raises(ValueError):
        log_normalize(lognorm)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 7), elements=st.floats(0, 1e6)))
def test_log_normalize_range_and_monotone(s):
    out = log_normalize(SpectrogramMatrix(s)).values
    assert np.all((out >= 0) & (out <= 1))
    order = np.argsort(s, axis=None, kind="stable")
    flat_s, flat_o = s.ravel()[order], out.ravel()[order]
    strictly_up = np.diff(flat_s) > 0
    assert np.all(np.diff(flat_o)[strictly_up] >= 0)


def test_matrix_validation():
    with pytest.raises(ValueError):
        SpectrogramMatrix(-np.ones((2, 2)))
    with pytest.raises(ValueError):
        SpectrogramMatrix(np.full((2, 2), np.nan))
    with pytest.raises(ValueError):
        SpectrogramMatrix(np.full((2, 2), 2.0), scale=Scale.LOG_NORMALIZED)
    with pytest.raises(ValueError):
        SpectrogramMatrix(np.ones(3))
    assert N_FRAMES == 100
