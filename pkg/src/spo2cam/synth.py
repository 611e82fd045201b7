"""Synthetic recordings with a known SpO2 -> skin color mapping.

SpO2 follows the breath-hold protocol (normal breathing, then a hold that
drives a smooth dip, recovering after release). Each color channel is

    x_c(t) = DC_c * (1 + (a_c + s_c * (SpO2(t) - 98)) * pulse(t)) + noise

so the pulsatile AC/DC depth of every channel is affine in SpO2 and the
red/blue ratio of ratios is a linear-fractional, exactly invertible function
of SpO2. Red is the most oxygen-sensitive channel, blue second and green
carries no saturation information, mirroring the hemoglobin extinction gap.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .dataset import ReferenceSeries
from .extraction import SkinColorSignal

BASELINE_SPO2 = 98.0


@dataclass
class ProtocolSpec:
    cycles: int = 3
    normal_range: tuple[float, float] = (30.0, 40.0)
    hold_range: tuple[float, float] = (30.0, 40.0)
    dip_range: tuple[float, float] = (4.0, 10.0)
    baseline: float = BASELINE_SPO2
    recovery: float = 15.0  # seconds from release back to baseline
    tail: float = 5.0  # baseline seconds after the last recovery
    seed: int = 0

    def __post_init__(self):
        self.normal_range = tuple(self.normal_range)
        self.hold_range = tuple(self.hold_range)
        self.dip_range = tuple(self.dip_range)
        if self.cycles < 1:
            raise ValueError("need at least one cycle")
        if self.normal_range[0] < self.recovery:
            raise ValueError("normal breathing must outlast the recovery so dips stay separate")
        if self.baseline > 100 or self.baseline - self.dip_range[1] < 85:
            raise ValueError("trajectory must stay within [85, 100]")


@dataclass
class ProtocolTimeline:
    """Event times of one simulated session; ``spo2(t)`` is the exact trajectory."""

    holds: list[tuple[float, float]]  # (hold start, release)
    depths: list[float]
    duration: float
    baseline: float
    recovery: float

    @property
    def boundaries(self) -> list[float]:
        """Cycle limits: each cycle ends when its dip has recovered."""
        inner = [release + self.recovery for _, release in self.holds[:-1]]
        return [0.0, *inner, self.duration]

    def spo2(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        dip = np.zeros_like(t)
        for (start, release), depth in zip(self.holds, self.depths):
            down = (t >= start) & (t < release)
            u = (t[down] - start) / (release - start)
            dip[down] += depth * 0.5 * (1 - np.cos(np.pi * u))
            up = (t >= release) & (t < release + self.recovery)
            v = (t[up] - release) / self.recovery
            dip[up] += depth * 0.5 * (1 + np.cos(np.pi * v))
        return self.baseline - dip


def protocol_timeline(spec: ProtocolSpec) -> ProtocolTimeline:
    rng = np.random.default_rng(spec.seed)
    t = 0.0
    holds, depths = [], []
    for _ in range(spec.cycles):
        t += rng.uniform(*spec.normal_range)
        hold = rng.uniform(*spec.hold_range)
        holds.append((t, t + hold))
        depths.append(rng.uniform(*spec.dip_range))
        t += hold
    duration = float(np.floor(t + spec.recovery + spec.tail))
    return ProtocolTimeline(holds, depths, duration, spec.baseline, spec.recovery)


def generate_protocol(spec: ProtocolSpec) -> ReferenceSeries:
    """1 Hz reference SpO2 for the breath-hold protocol."""
    timeline = protocol_timeline(spec)
    times = np.arange(int(timeline.duration) + 1, dtype=float)
    return ReferenceSeries(times, timeline.spo2(times), 1.0)


@dataclass
class OpticalModel:
    """Per-channel (R, G, B) parameters of the skin reflectance model.

    ``noise_sd`` is relative: each channel receives white noise with standard
    deviation ``noise_sd * dc_c * ac_c``, i.e. relative to its baseline
    pulsatile amplitude.
    """

    dc: tuple[float, float, float] = (180.0, 120.0, 100.0)
    ac: tuple[float, float, float] = (0.01, 0.01, 0.01)
    sensitivity: tuple[float, float, float] = (-3.0e-4, 0.0, -1.5e-4)
    heart_rate: float = 1.2
    harmonic: float = 0.5
    noise_sd: float = 0.0

    def __post_init__(self):
        self.dc = tuple(float(v) for v in self.dc)
        self.ac = tuple(float(v) for v in self.ac)
        self.sensitivity = tuple(float(v) for v in self.sensitivity)
        if min(self.dc) <= 0:
            raise ValueError("DC levels must be positive")
        if not all(np.isfinite(self.sensitivity)):
            raise ValueError("sensitivities must be finite")

    def modulation(self, spo2) -> np.ndarray:
        """Pulsatile AC/DC depth per channel, shape ``(..., 3)``."""
        d = np.asarray(spo2, dtype=float)[..., None] - BASELINE_SPO2
        return np.asarray(self.ac) + np.asarray(self.sensitivity) * d

    def relative_sensitivity(self) -> np.ndarray:
        """Fractional change of each channel's pulsatile depth per % SpO2."""
        return np.asarray(self.sensitivity) / np.asarray(self.ac)

    def ratio(self, spo2) -> np.ndarray:
        """Red/blue ratio of ratios implied by ``spo2``."""
        m = self.modulation(spo2)
        return m[..., 0] / m[..., 2]

    def invert_ratio(self, ratio) -> np.ndarray:
        """SpO2 whose red/blue ratio of ratios equals ``ratio``."""
        r = np.asarray(ratio, dtype=float)
        a_r, _, a_b = self.ac
        s_r, _, s_b = self.sensitivity
        return BASELINE_SPO2 + (a_r - r * a_b) / (r * s_b - s_r)


def pulse_waveform(t: np.ndarray, heart_rate: float, harmonic: float, phase: float) -> np.ndarray:
    """Unit-amplitude cardiac waveform: fundamental plus one harmonic."""
    w = 2 * np.pi * heart_rate
    p = np.sin(w * t + phase) + harmonic * np.sin(2 * (w * t + phase) + 0.6)
    # normalize by the exact peak of one period
    grid = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
    peak = np.max(np.abs(np.sin(grid) + harmonic * np.sin(2 * grid + 0.6)))
    return p / peak


def synthesize_signal(
    ref: ReferenceSeries,
    model: OpticalModel,
    fps: float = 30.0,
    seed: int = 0,
    source_id: str = "synthetic",
    spo2_fn=None,
) -> SkinColorSignal:
    """Skin color signal for a SpO2 trajectory.

    SpO2 at frame times comes from ``spo2_fn`` when given, otherwise from a
    cubic spline through ``ref``.
    """
    rng = np.random.default_rng(seed)
    n = int(np.floor((ref.times[-1] - ref.times[0]) * fps + 1e-9)) + 1
    t = np.arange(n) / fps
    spo2 = spo2_fn(t + ref.times[0]) if spo2_fn is not None else CubicSpline(ref.times, ref.values)(t + ref.times[0])
    phase = rng.uniform(0, 2 * np.pi)
    pulse = pulse_waveform(t, model.heart_rate, model.harmonic, phase)
    dc = np.asarray(model.dc)
    x = dc * (1 + model.modulation(spo2) * pulse[:, None])
    if model.noise_sd > 0:
        x = x + rng.normal(size=x.shape) * (model.noise_sd * dc * np.asarray(model.ac))
    return SkinColorSignal(x, fps, source_id)


@dataclass
class RenderSpec:
    height: int = 48
    width: int = 48
    skin_box: tuple[int, int, int, int] = (8, 40, 8, 40)  # row0, row1, col0, col1
    background_rgb: tuple[float, float, float] = (90.0, 110.0, 140.0)
    # when set, every background pixel is the skin sample plus this gray
    # offset, which leaves Cr unchanged
    background_luma_shift: float | None = None
    dtype: str = "uint8"


def _dither(value: float, n: int, order: np.ndarray) -> np.ndarray:
    base = np.floor(value)
    k = int(round((value - base) * n))
    out = np.full(n, base)
    out[order[:k]] += 1
    return out


def render_frames(signal: SkinColorSignal, spec: RenderSpec | None = None, seed: int = 0) -> list[np.ndarray]:
    """Frames whose skin region averages to the signal samples.

    On the 8-bit path each channel is dithered between floor and ceil so the
    region mean matches the sample to within ``0.5 / n_skin_pixels``.
    """
    spec = spec or RenderSpec()
    r0, r1, c0, c1 = spec.skin_box
    n_skin = (r1 - r0) * (c1 - c0)
    rng = np.random.default_rng(seed)
    orders = [rng.permutation(n_skin) for _ in range(3)]
    frames = []
    for sample in signal.samples:
        frame = np.empty((spec.height, spec.width, 3))
        if spec.background_luma_shift is not None:
            frame[:] = np.clip(sample + spec.background_luma_shift, 0, 255)
        else:
            frame[:] = spec.background_rgb
        if spec.dtype == "uint8":
            skin = np.stack([_dither(sample[c], n_skin, orders[c]) for c in range(3)], axis=-1)
            frame[r0:r1, c0:c1] = skin.reshape(r1 - r0, c1 - c0, 3)
            frame = np.clip(np.rint(frame), 0, 255).astype(np.uint8)
        else:
            frame[r0:r1, c0:c1] = sample
        frames.append(frame)
    return frames


@dataclass
class Recording:
    signal: SkinColorSignal
    reference: ReferenceSeries
    boundaries: list[float]
    participant_id: str
    hand_mode: str = "PD"
    skin_type: str = "III"
    timeline: ProtocolTimeline | None = field(default=None, repr=False)

    @property
    def recording_id(self) -> str:
        return self.signal.source_id


def simulate_recording(
    protocol: ProtocolSpec,
    model: OpticalModel,
    participant_id: str = "P01",
    recording_id: str | None = None,
    fps: float = 30.0,
    hand_mode: str = "PD",
    skin_type: str = "III",
) -> Recording:
    """Reference, skin signal and cycle annotation of one simulated session."""
    timeline = protocol_timeline(protocol)
    times = np.arange(int(timeline.duration) + 1, dtype=float)
    ref = ReferenceSeries(times, timeline.spo2(times), 1.0)
    rid = recording_id or f"{participant_id}-s{protocol.seed}"
    signal = synthesize_signal(ref, model, fps, seed=protocol.seed + 7919, source_id=rid,
                               spo2_fn=timeline.spo2)
    signal.meta.update(participant_id=participant_id, hand_mode=hand_mode, skin_type=skin_type)
    return Recording(signal, ref, timeline.boundaries, participant_id, hand_mode, skin_type, timeline)


def config_dict(protocol: ProtocolSpec, model: OpticalModel) -> dict:
    return {"protocol": asdict(protocol), "optical": asdict(model)}
