import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coughxai.cnn import reference_classifier
from coughxai.spectrogram import Scale, SpectrogramMatrix, frequency_axis
from coughxai.xai import (
    AverageDomain,
    Baseline,
    OcclusionConfig,
    OcclusionMap,
    WeightMode,
    average_maps,
    average_spectrograms,
    build_profile,
    occlusion_grid,
    occlusion_map,
    resize_grid,
    weight_spectrogram,
)

F = frequency_axis()
BAND = (10, 20)


class Constant:
    def predict(self, batch):
        return np.tile([0.7, 0.3], (len(batch), 1))


def band_input(rng):
    x = np.zeros((45, 100))
    x[BAND[0]:BAND[1] + 1] = rng.random((BAND[1] - BAND[0] + 1, 100))
    return SpectrogramMatrix(x, scale=Scale.LOG_NORMALIZED)


def lin(values):
    return SpectrogramMatrix(np.asarray(values, dtype=float))


def test_config_defaults_and_validation():
    cfg = OcclusionConfig()
    assert (cfg.patch_h, cfg.patch_w, cfg.stride_h, cfg.stride_w) == (5, 10, 5, 10)
    rows, cols = cfg.starts((45, 100))
    assert rows.size == 9 and cols.size == 10
    with pytest.raises(ValueError):
        OcclusionConfig(patch_h=0)
    with pytest.raises(ValueError):
        OcclusionConfig(stride_w=0)
    with pytest.raises(ValueError):
        OcclusionConfig(patch_h=46).starts((45, 100))


def test_constant_scorer_gives_zero_map():
    x = SpectrogramMatrix(np.random.default_rng(0).random((45, 100)), scale=Scale.LOG_NORMALIZED)
    m = occlusion_map(Constant(), x)
    np.testing.assert_array_equal(m.values, 0.0)


def test_whole_input_patch_gives_zero_map():
    ref = reference_classifier(F[10], F[20])
    x = band_input(np.random.default_rng(1))
    m = occlusion_map(ref, x, OcclusionConfig(45, 100))
    assert m.shape == (45, 100)
    np.testing.assert_array_equal(m.values, 0.0)


def test_band_locality_on_grid():
    ref = reference_classifier(F[BAND[0]], F[BAND[1]])
    x = band_input(np.random.default_rng(2))
    grid, rows, _ = occlusion_grid(ref, x)
    for i, r in enumerate(rows):
        touches = r <= BAND[1] and r + 4 >= BAND[0]
        if touches:
            assert np.all(grid[i] > 0)
        else:
            assert np.all(grid[i] == 0.0)


def test_map_shape_range_and_threads():
    ref = reference_classifier(F[BAND[0]], F[BAND[1]])
    x = band_input(np.random.default_rng(3))
    maps = [occlusion_map(ref, x, threads=t).values for t in (1, 4, 8)]
    assert maps[0].shape == (45, 100)
    assert maps[0].min() == 0.0 and maps[0].max() == 1.0
    assert np.array_equal(maps[0], maps[1]) and np.array_equal(maps[0], maps[2])


def test_mapmin_baseline():
    ref = reference_classifier(F[BAND[0]], F[BAND[1]])
    x = np.full((45, 100), 0.2)
    x[BAND[0]:BAND[1] + 1] = 0.9
    spec = SpectrogramMatrix(x, scale=Scale.LOG_NORMALIZED)
    zero, rows, _ = occlusion_grid(ref, spec, OcclusionConfig(baseline=Baseline.ZERO))
    mapmin = occlusion_grid(ref, spec, OcclusionConfig(baseline="mapmin"))[0]
    inside = (rows >= BAND[0]) & (rows + 4 <= BAND[1])
    # filling with the image minimum removes less in-band energy than zero does
    assert np.all(mapmin[inside] < zero[inside])
    assert np.all(mapmin[inside] > 0)
    # outside the band the minimum fill is a no-op
    outside = (rows + 4 < BAND[0]) | (rows > BAND[1])
    assert np.all(mapmin[outside] == 0.0)


def test_resize_anchors_and_clamps():
    grid = np.array([[0.0, 1.0], [2.0, 3.0]])
    full = resize_grid(grid, [1.0, 3.0], [2.0, 6.0], (5, 9))
    assert full[1, 2] == 0.0 and full[3, 6] == 3.0
    assert full[0, 0] == 0.0 and full[4, 8] == 3.0
    assert full[2, 4] == pytest.approx(1.5)


def test_occlusion_rejects_linear_input():
    with pytest.raises(ValueError):
        occlusion_map(Constant(), lin(np.ones((45, 100))))


def test_map_validation():
    with pytest.raises(ValueError):
        OcclusionMap(np.full((2, 2), 1.5))
    with pytest.raises(ValueError):
        OcclusionMap(np.zeros(3))


def test_average_maps_examples():
    m = OcclusionMap(np.random.default_rng(4).random((3, 4)))
    np.testing.assert_array_equal(average_maps([m]).values, m.values)
    half = average_maps([np.zeros((3, 4)), np.ones((3, 4))])
    np.testing.assert_array_equal(half.values, 0.5)
    maps = [np.zeros((5, 9)) for _ in range(3)]
    for m, v in zip(maps, (0.2, 0.4, 0.9)):
        m[3, 7] = v
    assert average_maps(maps).values[3, 7] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        average_maps([])
    with pytest.raises(ValueError):
        average_maps([np.zeros((2, 2)), np.zeros((2, 3))])


def test_average_spectrograms_examples():
    s = np.random.default_rng(5).random((3, 4))
    np.testing.assert_array_equal(average_spectrograms([lin(s)]).values, s)
    np.testing.assert_allclose(average_spectrograms([lin(s), lin(3 * s)]).values, 2 * s)
    cells = [lin(np.full((1, 1), v)) for v in (1.0, 2.0, 6.0)]
    assert average_spectrograms(cells).values[0, 0] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        average_spectrograms([])
    with pytest.raises(ValueError):
        average_spectrograms([SpectrogramMatrix(s, scale=Scale.LOG_NORMALIZED)])


def test_average_log_domain():
    out = average_spectrograms([lin([[1.0]]), lin([[100.0]])], AverageDomain.LOG)
    assert out.values[0, 0] == pytest.approx(10.0, rel=1e-9)


def test_averages_permutation_invariant():
    rng = np.random.default_rng(6)
    specs = [lin(rng.random((4, 5))) for _ in range(3)]
    maps = [OcclusionMap(rng.random((4, 5))) for _ in range(3)]
    ref_s = average_spectrograms(specs).values
    ref_m = average_maps(maps).values
    for perm in itertools.permutations(range(3)):
        np.testing.assert_allclose(average_spectrograms([specs[i] for i in perm]).values, ref_s, rtol=1e-15)
        np.testing.assert_allclose(average_maps([maps[i] for i in perm]).values, ref_m, rtol=1e-15)


S0 = [[2.0, 3.0], [4.0, 5.0]]
M = [[0.6, 0.4], [0.9, 0.5]]


def test_weight_hand_examples():
    mv = weight_spectrogram(lin(S0), np.array(M), 0.5, WeightMode.MAP_VALUE)
    np.testing.assert_allclose(mv.values, [[1.2, 0.0], [3.6, 0.0]], rtol=1e-15)
    ind = weight_spectrogram(lin(S0), np.array(M), 0.5, "indicator")
    np.testing.assert_array_equal(ind.values, [[2.0, 0.0], [4.0, 0.0]])
    one = weight_spectrogram(lin(S0), OcclusionMap(np.ones((2, 2))), 1.0)
    np.testing.assert_array_equal(one.values, 0.0)


def test_weight_errors():
    with pytest.raises(ValueError):
        weight_spectrogram(lin(S0), np.zeros((3, 3)), 0.5)
    with pytest.raises(ValueError):
        weight_spectrogram(lin(S0), np.array(M), 1.5)


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, (4, 6), elements=st.floats(0, 1e3)),
    arrays(np.float64, (4, 6), elements=st.floats(0, 1)),
    st.sampled_from(list(WeightMode)),
)
def test_weight_monotone_in_threshold(s0, m, mode):
    outs = [weight_spectrogram(lin(s0), m, th, mode).values for th in (0.0, 0.25, 0.5, 0.75, 1.0)]
    for lo, hi in zip(outs, outs[1:]):
        assert np.all(hi <= lo)


def test_weight_th_zero_is_product():
    rng = np.random.default_rng(7)
    s0, m = rng.random((5, 5)), rng.uniform(0.01, 1, (5, 5))
    np.testing.assert_array_equal(weight_spectrogram(lin(s0), m, 0.0).values, s0 * m)


def test_build_profile():
    rng = np.random.default_rng(8)
    specs = [lin(rng.random((3, 4))) for _ in range(2)]
    maps = [OcclusionMap(rng.random((3, 4))) for _ in range(2)]
    profile = build_profile("P01", specs, maps)
    assert profile.n_windows == 2 and profile.patient_id == "P01"
    with pytest.raises(ValueError):
        build_profile("P01", specs, maps[:1])
