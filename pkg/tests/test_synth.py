import numpy as np
import pytest
from scipy.signal import argrelmin

from spo2cam.dataset import interpolate_reference
from spo2cam.ratio import window_ratios
from spo2cam.synth import (
    OpticalModel,
    ProtocolSpec,
    generate_protocol,
    protocol_timeline,
    pulse_waveform,
    simulate_recording,
    synthesize_signal,
)


@pytest.mark.parametrize("seed", range(5))
def test_protocol_has_three_dips_within_range(seed):
    ref = generate_protocol(ProtocolSpec(seed=seed))
    r5 = interpolate_reference(ref)
    assert ref.values.min() >= 85 and ref.values.max() <= 100
    minima = argrelmin(np.round(r5.values, 9), order=25)[0]
    assert len(minima) == 3
    tl = protocol_timeline(ProtocolSpec(seed=seed))
    for (start, release), m in zip(tl.holds, minima):
        assert start < r5.times[m] <= release + 1


def test_boundaries_separate_cycles():
    tl = protocol_timeline(ProtocolSpec(seed=2))
    b = tl.boundaries
    assert len(b) == 4 and b[0] == 0 and b[-1] == tl.duration
    for (start, _), lo, hi in zip(tl.holds, b[:-1], b[1:]):
        assert lo < start < hi


def test_protocol_validation():
    with pytest.raises(ValueError):
        ProtocolSpec(dip_range=(4.0, 20.0))
    with pytest.raises(ValueError):
        ProtocolSpec(cycles=0)


def test_pulse_waveform_unit_peak():
    t = np.linspace(0, 10, 30001)
    p = pulse_waveform(t, 1.2, 0.5, 0.3)
    assert np.max(np.abs(p)) == pytest.approx(1.0, abs=1e-4)


def test_affine_model_is_exactly_invertible():
    m = OpticalModel()
    s = np.linspace(85, 100, 31)
    assert np.allclose(m.invert_ratio(m.ratio(s)), s, atol=1e-9)


def test_noiseless_signal_recovers_spo2_within_tolerance():
    rec = simulate_recording(ProtocolSpec(seed=4), OpticalModel())
    x = rec.signal.samples.T
    # one window per heart beat multiple: AC/DC of the exact sinusoid mixture
    starts = np.arange(0, x.shape[1] - 150, 30)
    windows = np.stack([x[:, s:s + 150] for s in starts])
    mid = (starts + 75) / 30.0
    est = OpticalModel().invert_ratio(window_ratios(windows))
    truth = rec.timeline.spo2(mid)
    assert np.mean(np.abs(est - truth)) < 0.2


def test_channel_sensitivity_ordering_in_generated_data():
    rec = simulate_recording(ProtocolSpec(seed=1), OpticalModel(noise_sd=0.05))
    x = rec.signal.samples
    r5 = rec.timeline.spo2(rec.signal.times)
    starts = np.arange(0, len(x) - 300, 30)
    w = np.stack([x[s:s + 300].T for s in starts])
    perf = (w.std(-1) / w.mean(-1))
    y = r5[starts + 150]
    slopes = np.abs([np.polyfit(y, perf[:, c], 1)[0] for c in range(3)])
    assert slopes[0] > slopes[2] > slopes[1]


def test_generation_is_seeded():
    a = simulate_recording(ProtocolSpec(seed=9), OpticalModel(noise_sd=0.2))
    b = simulate_recording(ProtocolSpec(seed=9), OpticalModel(noise_sd=0.2))
    assert np.array_equal(a.signal.samples, b.signal.samples)
    assert np.array_equal(a.reference.values, b.reference.values)


def test_noise_scale_is_relative_to_pulse_amplitude():
    ref = generate_protocol(ProtocolSpec(seed=0))
    clean = synthesize_signal(ref, OpticalModel(), seed=1)
    noisy = synthesize_signal(ref, OpticalModel(noise_sd=0.5), seed=1)
    resid = noisy.samples - clean.samples
    want = 0.5 * np.array([180, 120, 100]) * 0.01
    assert np.allclose(resid.std(axis=0), want, rtol=0.05)
