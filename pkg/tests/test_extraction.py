import numpy as np
import pytest
from conftest import otsu_bruteforce, random_histograms
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spo2cam.errors import DegenerateHistogram, EmptyMask, InsufficientContrast, ShapeMismatch
from spo2cam.extraction import (
    SkinColorSignal,
    SkinMask,
    cr_histogram,
    extract_skin_signal,
    otsu_threshold,
    rgb_to_ycbcr,
    segment_cr,
    segment_skin,
    spatial_average,
)
from spo2cam.synth import RenderSpec, render_frames


def test_otsu_matches_bruteforce_on_random_histograms():
    for h in random_histograms(300, seed=1):
        assert otsu_threshold(h) == otsu_bruteforce(h)


@settings(max_examples=60, deadline=None)
@given(arrays(np.int64, 256, elements=st.integers(0, 40)))
def test_otsu_property_bruteforce(h):
    if np.count_nonzero(h) < 2:
        with pytest.raises(DegenerateHistogram):
            otsu_threshold(h)
    else:
        assert otsu_threshold(h) == otsu_bruteforce(h)


def test_otsu_two_spikes_breaks_tie_to_smallest_cut():
    h = np.zeros(256, dtype=int)
    h[10] = h[200] = 5
    assert otsu_threshold(h) == 10


def test_otsu_rejects_bad_input():
    with pytest.raises(DegenerateHistogram):
        otsu_threshold(np.eye(256, dtype=int)[3] * 9)
    with pytest.raises(ShapeMismatch):
        otsu_threshold(np.ones(255))
    with pytest.raises(ValueError):
        otsu_threshold(-np.ones(256))


def test_ycbcr_known_colors():
    px = np.array([[[255, 255, 255], [0, 0, 0], [255, 0, 0]]], dtype=np.uint8)
    ycc = rgb_to_ycbcr(px)
    assert np.allclose(ycc[0, 0], [255, 128, 128], atol=1e-9)
    assert np.allclose(ycc[0, 1], [0, 128, 128], atol=1e-9)
    assert ycc[0, 2, 2] == pytest.approx(255.5)
    assert rgb_to_ycbcr(px, clamp=True)[0, 2, 2] == 255.0


def test_cr_histogram_counts_every_pixel():
    cr = np.random.default_rng(0).uniform(-5, 260, size=(7, 9))
    bins, hist = cr_histogram(cr)
    assert hist.sum() == 63 and bins.min() >= 0 and bins.max() <= 255


def _skin_frame(h=40, w=40, box=(10, 30, 10, 30), skin=(190, 120, 100), bg=(60, 110, 150)):
    f = np.empty((h, w, 3), dtype=np.uint8)
    f[:] = bg
    r0, r1, c0, c1 = box
    f[r0:r1, c0:c1] = skin
    return f


def test_segment_skin_finds_high_cr_region():
    mask = segment_skin(_skin_frame())
    want = np.zeros((40, 40), bool)
    want[10:30, 10:30] = True
    assert np.array_equal(mask.bits, want)
    assert np.array_equal(segment_skin(_skin_frame(), skin_high_cr=False).bits, ~want)


def test_uniform_frame_has_insufficient_contrast():
    with pytest.raises(InsufficientContrast):
        segment_skin(np.full((8, 8, 3), 100, dtype=np.uint8))


def test_guard_band_rejects_tiny_region():
    with pytest.raises(InsufficientContrast):
        segment_cr(np.r_[np.zeros(9999), 200.0].reshape(100, 100))


def test_spatial_average_and_empty_mask():
    f = _skin_frame()
    assert np.allclose(spatial_average(f, segment_skin(f)), [190, 120, 100])
    with pytest.raises(EmptyMask):
        spatial_average(f, SkinMask(np.zeros((40, 40), bool)))
    with pytest.raises(ShapeMismatch):
        spatial_average(f, SkinMask(np.ones((4, 4), bool)))


def test_extraction_round_trip_8bit():
    rng = np.random.default_rng(0)
    samples = np.column_stack([180 + 2 * rng.normal(size=60), 120 + rng.normal(size=60), 100 + rng.normal(size=60)])
    sig = SkinColorSignal(samples, 30.0, "rt")
    out = extract_skin_signal(render_frames(sig, seed=1), 30.0)
    assert len(out) == 60
    assert np.max(np.abs(out.samples - samples)) <= 0.5 / 255


def test_extraction_round_trip_float_path_is_exact():
    samples = np.array([[180.25, 120.5, 100.125], [181.0, 119.75, 99.5]])
    frames = render_frames(SkinColorSignal(samples, 30.0), RenderSpec(dtype="float64"))
    assert np.allclose(extract_skin_signal(frames, 30.0).samples, samples, atol=1e-12)


def test_luma_shift_background_fails_with_frame_index():
    samples = np.tile([180.0, 120.0, 100.0], (5, 1))
    frames = render_frames(SkinColorSignal(samples, 30.0), RenderSpec(background_luma_shift=-40.0))
    frames[:2] = render_frames(SkinColorSignal(samples[:2], 30.0))
    with pytest.raises(InsufficientContrast) as info:
        extract_skin_signal(frames, 30.0)
    assert info.value.frame_index == 2


def test_mismatched_frame_shapes():
    with pytest.raises(ShapeMismatch) as info:
        extract_skin_signal([_skin_frame(), _skin_frame(h=41)], 30.0)
    assert info.value.frame_index == 1


def test_signal_validation():
    with pytest.raises(ShapeMismatch):
        SkinColorSignal(np.ones((4, 2)), 30.0)
    with pytest.raises(ValueError):
        SkinColorSignal(np.full((4, 3), np.nan), 30.0)
    with pytest.raises(ValueError):
        SkinColorSignal(np.ones((4, 3)), 0.0)
